"""
Locally stationary linear processes

    X_{t,n} = sum_{j=0}^{J_max} a_{t,n}(j) eps_{t-j},   a_{t,n}(j) = a(t/n, j),

with separable coefficients ``a(tau, j) = sum_r c_r(tau) b_r(j)`` and long
memory ``|a(tau, j)| <= K max(1, j)^{alpha - 1}``.  Windows
``Y_n(k) = (X_{k+1,n}, ..., X_{k+nu,n})`` are subordinated by functions of
generalized rank ``m``; the CLT requires ``m (1 - 2 alpha) > 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.signal

from ..clt import CLTReport, PhiCurve, SubordinatedSum, sigma_limit, sigma_n_squared, summarize
from ..gaussian_model import CovarianceModel, inverse_sqrt, matrix_sqrt, spectral_norm
from ..hermite import HermiteExpansion, build_expansion, hermite_rank


class ConditionError(ValueError):
    """A structural condition of the CLT fails."""


class TailEnergyError(ValueError):
    """Coefficient energy beyond the truncation lag is too large."""


@dataclass
class LocStatSpec:
    """Separable causal coefficient family.

    ``terms`` is a list of ``(c_r, b_r)`` with ``c_r(tau)`` and ``b_r(j)``
    vectorized over arrays.
    """

    terms: Sequence
    alpha: float
    K: float
    J_max: int = 2**16
    nu: int = 2
    name: str = "locstat"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 1/2)")
        self._b = [np.asarray(b(np.arange(self.J_max + 1)), dtype=float) for _, b in self.terms]

    @property
    def R(self) -> int:
        return len(self.terms)

    def c(self, tau) -> np.ndarray:
        """``(R, ...)`` time-varying amplitudes."""
        tau = np.asarray(tau, dtype=float)
        return np.stack([np.asarray(c(tau), dtype=float) * np.ones(tau.shape) for c, _ in self.terms])

    def a(self, tau, j) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        j = np.asarray(j)
        out = 0.0
        for (c, b) in self.terms:
            out = out + np.asarray(c(tau), dtype=float) * np.asarray(b(j), dtype=float)
        return out

    def envelope_violation(self, taus=None) -> float:
        """``max |a(tau, j)| / (K max(1, j)^{alpha - 1})`` over a tau grid."""
        taus = np.linspace(0, 1, 33) if taus is None else np.asarray(taus)
        j = np.arange(self.J_max + 1)
        env = self.K * np.maximum(1, j) ** (self.alpha - 1)
        A = np.abs(sum(np.outer(self.c(taus)[r], self._b[r]) for r in range(self.R)))
        return float((A / env).max())

    def tail_energy(self, taus=None, factor: int = 64) -> float:
        """Bound on ``sup_tau sum_{j > J_max} a(tau, j)^2``.

        Exact coefficient energy on ``(J_max, factor J_max]`` plus the envelope
        bound ``K^2 J^{2 alpha - 1} / (1 - 2 alpha)`` beyond ``J = factor J_max``.
        """
        taus = np.linspace(0, 1, 9) if taus is None else np.asarray(taus)
        J, a = self.J_max, self.alpha
        j = np.arange(J + 1, factor * J + 1)
        near = max(float(np.sum(self.a(float(t), j) ** 2)) for t in taus)
        far = self.K**2 * (factor * J) ** (2 * a - 1) / (1 - 2 * a)
        return near + far

    def cross_autocov(self) -> np.ndarray:
        """``G[r, q, h + J_max] = sum_j b_r(j) b_q(j + h)``, ``|h| <= J_max``."""
        L = self.J_max + 1
        G = np.empty((self.R, self.R, 2 * L - 1))
        for r in range(self.R):
            for q in range(self.R):
                G[r, q] = scipy.signal.fftconvolve(self._b[q], self._b[r][::-1])
        return G


# ----------------------------------------------------------------------------
# simulation


def simulate_locstat(spec: LocStatSpec, n: int, reps: int, seed: int, chunk: int = 64,
                     tail_tol: float = 1e-2) -> np.ndarray:
    """``(reps, n + nu)`` draws of ``X_{t,n}``, ``t = 1..n+nu``.

    Replicate ``i`` draws its innovations ``eps_s``, ``s = 1 - J_max .. n + nu``,
    from ``default_rng(seed + i)``.
    """
    tail = spec.tail_energy()
    if tail > tail_tol:
        raise TailEnergyError(f"coefficient energy beyond J_max={spec.J_max} is {tail:.3e} > {tail_tol:.1e}")
    T = n + spec.nu
    t = np.arange(1, T + 1)
    C = spec.c(t / n)  # (R, T)
    out = np.empty((reps, T))
    for s0 in range(0, reps, chunk):
        s1 = min(reps, s0 + chunk)
        eps = np.stack([np.random.default_rng(seed + i).standard_normal(T + spec.J_max)
                        for i in range(s0, s1)])
        acc = np.zeros((s1 - s0, T))
        for r in range(spec.R):
            conv = scipy.signal.fftconvolve(eps, spec._b[r][None, :], axes=1)
            acc += C[r] * conv[:, spec.J_max:spec.J_max + T]
        out[s0:s1] = acc
    return out


# ----------------------------------------------------------------------------
# covariances


@dataclass
class LocStatCovariances:
    spec: LocStatSpec
    G: np.ndarray

    def lag(self, h) -> np.ndarray:
        """``(R, R, ...)`` cross-autocovariances at integer lags (zero beyond support)."""
        h = np.asarray(h, dtype=int)
        J = self.spec.J_max
        inside = np.abs(h) <= J
        idx = np.clip(h + J, 0, 2 * J)
        return np.where(inside, self.G[:, :, idx], 0.0)

    def cov(self, n: int, t, s) -> np.ndarray:
        """``E X_{t,n} X_{s,n}``."""
        t = np.asarray(t)
        s = np.asarray(s)
        ct, cs = self.spec.c(t / n), self.spec.c(s / n)
        return np.einsum("r...,q...,rq...->...", ct, cs, self.lag(s - t))

    def window(self, n: int, k) -> np.ndarray:
        """``Sigma_{k,n}``: covariance of ``Y_n(k)``, shape ``(..., nu, nu)``."""
        return self.window_cross(n, k, k)

    def window_cross(self, n: int, k, l) -> np.ndarray:
        """``E Y_n(k) Y_n(l)^T``."""
        k, l = np.broadcast_arrays(np.asarray(k), np.asarray(l))
        p = np.arange(1, self.spec.nu + 1)
        return self.cov(n, k[..., None, None] + p[:, None], l[..., None, None] + p[None, :])

    def tangent_lag(self, tau: float, h) -> np.ndarray:
        """``E X_tau(t) X_tau(t + h)`` of the stationary tangent process."""
        c = self.spec.c(np.asarray(tau, dtype=float))
        return np.einsum("r,q,rq...->...", c, c, self.lag(h))

    def sigma_tau(self, tau: float) -> np.ndarray:
        p = np.arange(self.spec.nu)
        return self.tangent_lag(tau, p[None, :] - p[:, None])

    def tangent_window_lag(self, tau: float, j) -> np.ndarray:
        """``E W_tau(0) W_tau(j)^T`` for tangent windows, shape ``(..., nu, nu)``."""
        j = np.asarray(j)
        p = np.arange(self.spec.nu)
        return self.tangent_lag(tau, j[..., None, None] + p[None, :] - p[:, None])

    def gap(self, n: int, taus=None) -> float:
        """``sup_tau ||Sigma_{[n tau], n} - Sigma_tau||`` over a tau grid."""
        taus = np.linspace(0, 1, 33) if taus is None else np.asarray(taus)
        k = np.floor(n * taus).astype(int)
        Sk = self.window(n, k)
        return max(spectral_norm(Sk[i] - self.sigma_tau(float(tau))) for i, tau in enumerate(taus))

    def spectral_density(self, tau: float, M: int | None = None):
        """``g_tau(v) = |hat a(tau, v)|^2`` on ``v = 2 pi i / M``, with
        ``hat a = (2 pi)^{-1/2} sum_j e^{-ijv} a(tau, j)``."""
        J = self.spec.J_max
        M = M or int(2 ** math.ceil(math.log2(2 * J + 2 * self.spec.nu + 2)))
        c = self.spec.c(np.asarray(tau, dtype=float))
        a = sum(c[r] * self.spec._b[r] for r in range(self.spec.R))
        ah = np.fft.fft(a, M) / math.sqrt(2 * math.pi)
        v = 2 * math.pi * np.arange(M) / M
        return v, np.abs(ah) ** 2

    def quadratic_form_spectral(self, tau: float, x) -> float:
        """``int_{-pi}^{pi} g_tau(v) |sum_j e^{ijv} x_j|^2 dv`` (exact on the FFT grid)."""
        v, g = self.spectral_density(tau)
        x = np.asarray(x, dtype=float)
        ph = np.exp(1j * np.outer(v, np.arange(len(x)))) @ x
        return float(np.sum(g * np.abs(ph) ** 2) * (2 * math.pi / len(v)))


def locstat_covariances(spec: LocStatSpec) -> LocStatCovariances:
    return LocStatCovariances(spec, spec.cross_autocov())


# ----------------------------------------------------------------------------
# CLT experiment


@dataclass
class LocStatExperiment:
    report: CLTReport
    sigma2: float
    spectral_min: float
    min_eig: float
    gap: float
    grid_gap: float
    ranks: list
    validation: dict

    def to_dict(self) -> dict:
        return {**self.report.to_dict(), "sigma2_limit": self.sigma2, "spectral_min": self.spectral_min,
                "min_eig_sigma_tau": self.min_eig, "covariance_gap": self.gap,
                "grid_gap": self.grid_gap, "ranks": self.ranks, **self.validation}


def check_memory_condition(m: int, alpha: float) -> None:
    if not m * (1 - 2 * alpha) > 1:
        raise ConditionError(
            f"the CLT requires m > 1/(1 - 2 alpha); got m={m}, alpha={alpha} "
            f"(1/(1 - 2 alpha) = {1 / (1 - 2 * alpha):.4g})")


def quadratic_family(weights) -> Callable:
    """``f(y, Sigma) = y^T W y - tr(W Sigma)``: generalized rank 2 under ``N(0, Sigma)``."""
    W = np.asarray(weights, dtype=float)

    def f(y, S):
        y = np.asarray(y, dtype=float)
        return np.einsum("...p,pq,...q->...", y, W, y) - np.einsum("pq,...qp->...", W, np.asarray(S))
    return f


def _pulled_expansion(f: Callable, S: np.ndarray, N: int) -> HermiteExpansion:
    L = matrix_sqrt(S)
    return build_expansion(lambda x: f(x @ L.T, S), S.shape[0], N)


def locstat_clt_experiment(spec: LocStatSpec, f: Callable, m: int, n: int, reps: int, seed: int,
                            N: int = 2, tau_points: int = 17, tail_tol: float = 1e-2,
                            exact_sigma: bool = True) -> LocStatExperiment:
    """CLT for ``n^{-1/2} sum_k f(Y_n(k), Sigma_{k,n})`` against the limit
    variance of the tangent family.

    ``f(y, Sigma)`` must be centered under ``N(0, Sigma)`` with generalized
    rank at least ``m``.  Windows are standardized by ``Sigma_{k,n}^{-1/2}``
    and ``f`` is pulled back accordingly.
    """
    check_memory_condition(m, spec.alpha)
    nu = spec.nu
    cv = locstat_covariances(spec)
    taus = np.linspace(0, 1, tau_points)

    # structural conditions
    smin = min(float(cv.spectral_density(float(t))[1].min()) for t in taus)
    Sig = [cv.sigma_tau(float(t)) for t in taus]
    min_eig = min(float(np.linalg.eigvalsh(S).min()) for S in Sig)
    if min_eig <= 0:
        raise ConditionError("tangent window covariance is singular")

    # tangent expansions in standardized coordinates
    phis = [_pulled_expansion(f, S, N) for S in Sig]
    ranks = [hermite_rank(e) for e in phis]
    if min(ranks) < m:
        raise ConditionError(f"generalized rank {min(ranks)} is below the declared m={m}")
    inv_half = [inverse_sqrt(S) for S in Sig]

    def tangent(tau, j):
        i = int(np.argmin(np.abs(taus - tau)))
        return inv_half[i] @ cv.tangent_window_lag(float(taus[i]), j) @ inv_half[i]

    model = CovarianceModel(nu=nu, cov_fn=cv.window_cross, name=spec.name,
                            params=spec.params, envelope=lambda j: np.zeros(np.shape(j)), tangent=tangent)
    phi = PhiCurve(taus, phis)
    ss = SubordinatedSum(model, phi, m, name=spec.name)
    validation = ss.validate()
    # the truncated coefficients give compactly supported covariances
    s2 = sigma_limit(ss, j_cut=2 * spec.J_max + nu, tail_tol=math.inf).value

    # array-side pullbacks on a coarse grid of k (grid continuity)
    ks = np.unique(np.linspace(0, n - 1, 9).astype(int))
    Sk = cv.window(n, ks)
    grid_gap = 0.0
    for k, S in zip(ks, Sk):
        ek = _pulled_expansion(f, S, N)
        tau = k / n
        grid_gap = max(grid_gap, float(np.sum((ek.coeffs - phi.coeffs_at(tau)[0]) ** 2 / ek.factorials)))

    # Monte Carlo over windows k = 1..n: standardize and evaluate the pulled-back functions
    X = simulate_locstat(spec, n, reps, seed, tail_tol=tail_tol)
    k = np.arange(1, n + 1)
    Sk = cv.window(n, k)
    Linv = np.stack([inverse_sqrt(S) for S in Sk])
    Lh = np.stack([matrix_sqrt(S) for S in Sk])
    idx = k[:, None] + np.arange(nu)[None, :]  # array positions of X_{k+1..k+nu}
    Z = np.empty(reps)
    for s0 in range(0, reps, 256):
        Y = X[s0:s0 + 256][:, idx]  # (r, n, nu)
        Xs = np.einsum("kpq,rkq->rkp", Linv, Y)
        vals = f(np.einsum("kpq,rkq->rkp", Lh, Xs), Sk)
        Z[s0:s0 + 256] = vals.sum(axis=1) / math.sqrt(n)
    s2n = None
    if exact_sigma:
        array_model = CovarianceModel(
            nu=nu, name=spec.name + "_standardized", params=spec.params,
            cov_fn=lambda n_, t, s: (Linv[np.asarray(t) - 1] @ cv.window_cross(n_, t, s)
                                     @ np.swapaxes(Linv[np.asarray(s) - 1], -1, -2)))
        array_phi = PhiCurve(k / n, [_pulled_expansion(f, S, N) for S in Sk])
        s2n = sigma_n_squared(SubordinatedSum(array_model, array_phi, m), n)
    rep = summarize(Z, s2, n, seed, s2n)
    return LocStatExperiment(rep, s2, smin, min_eig, cv.gap(n), grid_gap, ranks, validation)


def default_locstat(alpha: float = 0.2, kappa: float = 0.3, slope: float = 0.5,
                    J_max: int = 2**16, nu: int = 2) -> LocStatSpec:
    """``a(tau, j) = (1 + slope tau) b(j)``, ``b(0) = 1``, ``b(j) = kappa j^{alpha - 1}``."""
    def c(tau):
        return 1 + slope * np.asarray(tau, dtype=float)

    def b(j):
        j = np.asarray(j, dtype=float)
        return np.where(j == 0, 1.0, kappa * np.maximum(j, 1) ** (alpha - 1))
    return LocStatSpec([(c, b)], alpha, (1 + slope) * max(1.0, kappa), J_max, nu, "locstat",
                       {"alpha": alpha, "kappa": kappa, "slope": slope, "J_max": J_max, "nu": nu})
