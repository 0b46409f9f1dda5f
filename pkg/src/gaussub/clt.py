"""
Variance and central limit machinery for normalized sums
``Z_n = n^{-1/2} sum_k f_{k,n}(X_n(k))`` of a Gaussian triangular array.

* exact ``sigma_n^2`` through two-row diagram sums of Hermite coefficients,
* the limit variance integrated over the tangent family,
* Monte Carlo runs with Kolmogorov-Smirnov distance and k-statistics,
* exact cumulant sums for Hermite monomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.stats

from .gaussian_model import CovarianceModel, NotStandardizedError, envelope_tail, replicate_chunks
from .hermite import HermiteExpansion, _factorials, hermite_rank, multi_indices
from .moment_bounds import trend_verdict
from .wick import hermite_cumulant, pair_kernel

DEFAULT_TAU_POINTS = 33
PAIR_BUDGET = 64_000_000


class BudgetError(ValueError):
    """Requested computation exceeds its configured budget."""


class TailError(ValueError):
    """Lag truncation leaves an envelope tail above tolerance."""


# ----------------------------------------------------------------------------
# function families


def _pad(e: HermiteExpansion, N: int) -> np.ndarray:
    if e.N == N:
        return e.coeffs
    if e.N > N:
        raise ValueError("cannot shrink an expansion by padding")
    out = np.zeros(len(multi_indices(e.nu, N)))
    out[: len(e.coeffs)] = e.coeffs  # graded order: lower levels come first
    return out


@dataclass
class PhiCurve:
    """Curve ``tau -> phi_tau`` stored on a grid, coefficients interpolated linearly."""

    taus: np.ndarray
    expansions: list

    def __post_init__(self):
        self.taus = np.asarray(self.taus, dtype=float)
        if len(self.taus) != len(self.expansions) or len(self.taus) < 1:
            raise ValueError("need one expansion per grid point")
        if np.any(np.diff(self.taus) <= 0):
            raise ValueError("tau grid must be increasing")
        self.nu = self.expansions[0].nu
        self.N = max(e.N for e in self.expansions)
        self.C = np.stack([_pad(e, self.N) for e in self.expansions])
        self.norm_sq = np.array([e.norm_sq for e in self.expansions])
        self.fact = _factorials(self.nu, self.N)

    @classmethod
    def constant(cls, e: HermiteExpansion) -> "PhiCurve":
        return cls(np.array([0.0, 1.0]), [e, e])

    @classmethod
    def from_function(cls, make: Callable, n_points: int = DEFAULT_TAU_POINTS) -> "PhiCurve":
        taus = np.linspace(0.0, 1.0, n_points)
        return cls(taus, [make(float(t)) for t in taus])

    @property
    def is_constant(self) -> bool:
        return bool(np.all(self.C == self.C[0]))

    def coeffs_at(self, tau) -> np.ndarray:
        """Interpolated coefficient rows for an array of ``tau``; shape ``(M, D)``."""
        tau = np.clip(np.atleast_1d(np.asarray(tau, dtype=float)), self.taus[0], self.taus[-1])
        if len(self.taus) == 1:
            return np.repeat(self.C[:1], len(tau), axis=0)
        i = np.clip(np.searchsorted(self.taus, tau, side="right") - 1, 0, len(self.taus) - 2)
        w = (tau - self.taus[i]) / (self.taus[i + 1] - self.taus[i])
        return (1 - w)[:, None] * self.C[i] + w[:, None] * self.C[i + 1]

    def norm_sq_at(self, tau) -> np.ndarray:
        """``E f^2`` at ``tau``: truncated norm plus interpolated residual."""
        c = self.coeffs_at(tau)
        trunc = (c**2 / self.fact).sum(axis=1)
        res_grid = self.norm_sq - (self.C**2 / self.fact).sum(axis=1)
        tau = np.clip(np.atleast_1d(np.asarray(tau, dtype=float)), self.taus[0], self.taus[-1])
        return trunc + np.interp(tau, self.taus, res_grid)

    def at(self, tau: float) -> HermiteExpansion:
        c = self.coeffs_at(tau)[0]
        return HermiteExpansion(self.nu, self.N, c, float(self.norm_sq_at(tau)[0]))

    def lipschitz(self) -> float:
        """Largest ``||phi_{i+1} - phi_i|| / (tau_{i+1} - tau_i)`` on the grid."""
        if len(self.taus) < 2:
            return 0.0
        d = np.sqrt(((np.diff(self.C, axis=0)) ** 2 / self.fact).sum(axis=1))
        return float(np.max(d / np.diff(self.taus)))

    def max_step(self) -> float:
        """Largest L2 distance between adjacent grid members."""
        if len(self.taus) < 2:
            return 0.0
        return float(np.sqrt(((np.diff(self.C, axis=0)) ** 2 / self.fact).sum(axis=1)).max())


@dataclass
class SubordinatedSum:
    """``f_{k,n} = phi_{k/n}`` on a model, with declared rank ``m``.

    ``evaluator(values, taus) -> (reps, n)`` optionally replaces series
    evaluation in Monte Carlo runs (use it for non-polynomial ``f``, whose
    truncated series is only an L2 approximation).
    """

    model: CovarianceModel
    phi: PhiCurve
    m: int
    evaluator: Callable | None = None
    name: str = ""

    def __post_init__(self):
        if self.phi.nu != self.model.nu:
            raise ValueError("function dimension differs from the model")

    def validate(self, center_tol: float = 1e-9, step_tol: float = 0.5) -> dict:
        """Centering, rank certificates and grid continuity of the family."""
        cen = float(np.abs(self.phi.C[:, 0]).max())
        ranks = [hermite_rank(e) for e in self.phi.expansions]
        return {
            "centered": cen <= center_tol,
            "max_mean": cen,
            "ranks": ranks,
            "rank_ok": all(r >= self.m for r in ranks),
            "grid_lipschitz": self.phi.lipschitz(),
            "grid_max_step": self.phi.max_step(),
            "continuous": self.phi.max_step() <= step_tol,
        }

    def coeffs(self, n: int) -> np.ndarray:
        return self.phi.coeffs_at(np.arange(1, n + 1) / n)

    def evaluate(self, values: np.ndarray, n: int) -> np.ndarray:
        """``f_{k,n}(x_k)`` for replicate arrays ``values`` of shape ``(reps, n, nu)``."""
        taus = np.arange(1, n + 1) / n
        if self.evaluator is not None:
            return np.asarray(self.evaluator(values, taus), dtype=float)
        from .hermite import _product_table, hermite_table

        H = _product_table(hermite_table(values, self.phi.N), multi_indices(self.nu, self.phi.N))
        W = self.coeffs(n) / self.phi.fact
        return np.einsum("rkd,kd->rk", H, W)

    @property
    def nu(self) -> int:
        return self.model.nu


# ----------------------------------------------------------------------------
# exact second moments


def cross_expectation(eF: HermiteExpansion, eG: HermiteExpansion, C, levels=None):
    """``E f(X) g(X')`` for standard ``X, X'`` with ``E X X'^T = C``.

    ``C`` may carry leading batch axes.  With ``levels`` only those chaos
    levels contribute.
    """
    if eF.nu != eG.nu:
        raise ValueError("dimension mismatch")
    N = max(eF.N, eG.N)
    k = pair_kernel(eF.nu, N)
    return k(_pad(eF, N), _pad(eG, N), C, levels)


def _pair_sum(spec: SubordinatedSum, n: int, level_split: bool = False):
    """``sum_{k,k'} E f_k f_k'`` (or per level) with exact diagonal."""
    phi = spec.phi
    kern = pair_kernel(spec.nu, phi.N)
    model = spec.model
    F = spec.coeffs(n)
    diag_norm = phi.norm_sq_at(np.arange(1, n + 1) / n)
    nl = phi.N + 1
    if model.stationary and phi.is_constant:
        h = np.arange(1, n)
        Ch = model.lag_cov(h)
        f = F[0]
        if level_split:
            per = kern.level_values(f, f, Ch)  # (n-1, N+1)
            tot = 2 * ((n - h)[:, None] * per).sum(axis=0)
            tot += n * kern.level_values(f, f, np.eye(spec.nu))
            return tot
        vals = kern(f, f, Ch)
        return float(n * diag_norm[0] + 2 * np.sum((n - h) * vals))
    if n * n * len(kern.inv_fact) > PAIR_BUDGET * 8:
        raise BudgetError(f"pairwise evaluation at n={n} exceeds the budget")
    idx = np.arange(1, n + 1)
    total = np.zeros(nl) if level_split else 0.0
    step = max(1, PAIR_BUDGET // (n * max(1, len(kern.inv_fact)) * 4))
    Ef = kern.E
    for k0 in range(0, n, step):
        rows = idx[k0:k0 + step]
        C = model.cov(n, rows[:, None], idx[None, :]).reshape(len(rows), n, spec.nu * spec.nu)
        mono = np.prod(C[:, :, None, :] ** Ef[None, None], axis=-1)  # (r, n, S)
        A = F[k0:k0 + step][:, kern.a_idx] * kern.inv_fact  # (r, S)
        B = F[:, kern.b_idx]  # (n, S)
        terms = mono * A[:, None, :] * B[None, :, :]
        # self pairs: replace the truncated diagonal by the exact norm
        r_ar = np.arange(len(rows))
        if level_split:
            for lv in range(nl):
                sel = kern.level == lv
                total[lv] += terms[:, :, sel].sum()
        else:
            diag_trunc = terms[r_ar, rows - 1].sum(axis=-1)
            total += terms.sum() - diag_trunc.sum() + diag_norm[k0:k0 + step].sum()
    return total


def sigma_n_squared(spec: SubordinatedSum, n: int) -> float:
    """``E Z_n^2 = n^{-1} sum_{k,k'} E f_{k,n}(X_n(k)) f_{k',n}(X_n(k'))``.

    Diagonal terms use the full ``E f^2`` (including the truncation
    residual); off-diagonal terms are exact up to the expansion order.
    """
    return float(_pair_sum(spec, n)) / n


def sigma_levels(spec: SubordinatedSum, n: int) -> np.ndarray:
    """Per-level contributions ``n^{-1} sum_{k,k'} E f_(l) f_(l)``, ``l = 0..N``."""
    return np.asarray(_pair_sum(spec, n, level_split=True)) / n


@dataclass
class VarianceReport:
    n_list: list
    sigma2: list
    ratio: list
    verdict: str

    def to_dict(self):
        return {"n": self.n_list, "sigma2_n": self.sigma2, "ratio": self.ratio, "verdict": self.verdict}


def variance_bound_check(spec: SubordinatedSum, n_list, threshold: float = 1.05) -> VarianceReport:
    """``sigma_n^2 / max_k ||f_k||^2`` over ``n_list`` with a trend verdict."""
    n_list = sorted(int(n) for n in n_list)
    s, r = [], []
    for n in n_list:
        v = sigma_n_squared(spec, n)
        fmax = float(spec.phi.norm_sq_at(np.arange(1, n + 1) / n).max())
        s.append(v)
        r.append(v / fmax)
    _, _, verdict = trend_verdict(r, threshold)
    return VarianceReport(n_list, s, r, "bounded" if verdict == "bounded" else "unbounded-trend")


@dataclass
class SigmaLimit:
    value: float
    tail_bound: float
    j_cut: int
    taus: np.ndarray
    per_tau: np.ndarray

    def to_dict(self):
        return {"value": self.value, "tail_bound": self.tail_bound, "j_cut": self.j_cut,
                "tau": self.taus.tolist(), "per_tau": self.per_tau.tolist()}


def sigma_limit(spec: SubordinatedSum, taus=None, j_cut: int = 200, tail_tol: float = 1e-6,
                levels=None) -> SigmaLimit:
    """``int_0^1 sum_j E phi_tau(W_tau(0)) phi_tau(W_tau(j)) dtau``.

    The lag sum is truncated at ``|j| <= j_cut``; the neglected tail is
    bounded by ``nu^m sup ||phi_tau||^2 sum_{|j| > j_cut} rho(j)^m``.  The
    tau integral uses composite Simpson on the grid (exact for curves
    quadratic in tau).
    """
    model = spec.model
    if model.tangent is None:
        raise ValueError("model has no tangent family")
    taus = spec.phi.taus if taus is None else np.asarray(taus, dtype=float)
    if len(taus) == 2 and spec.phi.is_constant:
        taus = np.array([0.0, 0.5, 1.0])
    for tau in (taus[0], taus[-1]):
        C0 = np.asarray(model.tangent(float(tau), np.array([0])), dtype=float).reshape(spec.nu, spec.nu)
        if np.abs(C0 - np.eye(spec.nu)).max() > 1e-8:
            raise NotStandardizedError("tangent marginal covariance is not the identity; pull f back first")
    kern = pair_kernel(spec.nu, spec.phi.N)
    js = np.arange(1, j_cut + 1)
    per = np.empty(len(taus))
    for i, tau in enumerate(taus):
        c = spec.phi.coeffs_at(tau)[0]
        if levels is None:
            diag = float(spec.phi.norm_sq_at(tau)[0])
        else:
            diag = float(kern(c, c, np.eye(spec.nu), levels))
        # the tangent process is stationary: E W(0)W(-j)^T = (E W(0)W(j)^T)^T
        Cj = np.asarray(model.tangent(tau, js), dtype=float)
        Cm = np.swapaxes(Cj, -1, -2)
        off = float(np.sum(kern(c, c, Cj, levels)) + np.sum(kern(c, c, Cm, levels)))
        per[i] = diag + off
    if model.envelope is None:
        tail = math.inf
    else:
        nmax = float(spec.phi.norm_sq.max())
        tail = spec.nu ** spec.m * nmax * envelope_tail(model.envelope, spec.m, j_cut)
    if tail > tail_tol:
        raise TailError(f"envelope tail beyond j_cut={j_cut} is {tail:.3e} > {tail_tol:.1e}")
    if len(taus) >= 3 and len(taus) % 2 == 1:
        val = float(scipy.integrate.simpson(per, x=taus))
    else:
        val = float(scipy.integrate.trapezoid(per, x=taus))
    return SigmaLimit(val, float(tail), j_cut, taus, per)


# ----------------------------------------------------------------------------
# Monte Carlo


def kstat_jackknife(x: np.ndarray, order: int, groups: int = 50):
    """k-statistic of ``x`` and its grouped jackknife standard error."""
    x = np.asarray(x, dtype=float)
    full = float(scipy.stats.kstat(x, order))
    parts = np.array_split(np.arange(len(x)), groups)
    loo = np.array([scipy.stats.kstat(np.delete(x, p), order) for p in parts])
    g = len(parts)
    se = math.sqrt((g - 1) / g * np.sum((loo - loo.mean()) ** 2))
    return full, se


def standardized_cumulants(x: np.ndarray, groups: int = 50):
    """``kappa_3 / k_2^{3/2}`` and ``kappa_4 / k_2^2`` with jackknife errors."""
    x = np.asarray(x, dtype=float)

    def stats(y):
        k2 = scipy.stats.kstat(y, 2)
        return scipy.stats.kstat(y, 3) / k2**1.5, scipy.stats.kstat(y, 4) / k2**2

    full = np.array(stats(x))
    parts = np.array_split(np.arange(len(x)), groups)
    loo = np.array([stats(np.delete(x, p)) for p in parts])
    g = len(parts)
    se = np.sqrt((g - 1) / g * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    return (float(full[0]), float(se[0])), (float(full[1]), float(se[1]))


def ks_critical(reps: int, level: float = 0.01) -> float:
    return float(scipy.stats.kstwo.ppf(1 - level, reps))


@dataclass
class CLTReport:
    n: int
    reps: int
    seed: int
    sigma2: float  # reference variance (limit or exact)
    sigma2_n: float | None
    emp_var: float
    emp_var_se: float
    ks: float
    ks_critical: float
    kappa3: float
    kappa3_se: float
    kappa4: float
    kappa4_se: float
    hist_edges: list = field(default_factory=list)
    hist_counts: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    statistics: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "reps": self.reps, "seed": self.seed, "sigma2": self.sigma2,
            "sigma2_n": self.sigma2_n, "empirical_variance": self.emp_var,
            "empirical_variance_se": self.emp_var_se, "ks": self.ks, "ks_critical_1pct": self.ks_critical,
            "kappa3": self.kappa3, "kappa3_se": self.kappa3_se, "kappa4": self.kappa4,
            "kappa4_se": self.kappa4_se, **self.extra,
        }

    def histogram_rows(self):
        return [{"bin_left": a, "bin_right": b, "count": c}
                for a, b, c in zip(self.hist_edges[:-1], self.hist_edges[1:], self.hist_counts)]


def simulate_sums(spec: SubordinatedSum, n: int, reps: int, seed: int, chunk: int = 1000) -> np.ndarray:
    """``Z_n`` for replicates ``seed, seed+1, ...``."""
    out = np.empty(reps)
    pos = 0
    for X in replicate_chunks(spec.model, n, reps, seed, chunk):
        vals = spec.evaluate(X, n)
        out[pos:pos + len(X)] = vals.sum(axis=1) / math.sqrt(n)
        pos += len(X)
    return out


def summarize(Z: np.ndarray, sigma2: float, n: int, seed: int, sigma2_n=None, bins: int = 50,
              extra: dict | None = None) -> CLTReport:
    """Normality diagnostics of a sample of normalized sums."""
    if not sigma2 > 0:
        raise ValueError("reference variance must be positive")
    Z = np.asarray(Z, dtype=float)
    reps = len(Z)
    sd = math.sqrt(sigma2)
    ks = float(scipy.stats.kstest(Z / sd, "norm").statistic)
    v = float(np.var(Z, ddof=1))
    m4 = float(np.mean((Z - Z.mean()) ** 4))
    v_se = math.sqrt(max(m4 - v * v, 0.0) / reps)
    (k3, k3s), (k4, k4s) = standardized_cumulants(Z)
    edges = np.linspace(-5 * sd, 5 * sd, bins + 1)
    counts, _ = np.histogram(Z, bins=edges)
    return CLTReport(n, reps, seed, float(sigma2), sigma2_n, v, v_se, ks, ks_critical(reps),
                     k3, k3s, k4, k4s, edges.tolist(), counts.tolist(), extra or {}, Z)


def mc_clt(spec: SubordinatedSum, n: int, reps: int, seed: int, sigma2: float | None = None,
           exact_sigma: bool = True) -> CLTReport:
    """Monte Carlo law of ``Z_n`` compared with ``N(0, sigma2)``.

    ``sigma2`` defaults to the limit variance from the tangent family.
    """
    if sigma2 is None:
        sigma2 = sigma_limit(spec).value
    if not sigma2 > 0:
        raise ValueError("the limit variance must be positive")
    s2n = sigma_n_squared(spec, n) if exact_sigma else None
    Z = simulate_sums(spec, n, reps, seed)
    return summarize(Z, sigma2, n, seed, s2n)


# ----------------------------------------------------------------------------
# cumulant sums


@dataclass
class CumulantDecay:
    ks: tuple
    n_list: list
    sums: list
    normalized: list
    decreasing: bool
    K_list: list = field(default_factory=list)
    K_sums: dict = field(default_factory=dict)

    def to_dict(self):
        return {"ks": [list(k) for k in self.ks], "n": self.n_list, "Sigma_n": self.sums,
                "normalized": self.normalized, "strictly_decreasing": self.decreasing,
                "K": self.K_list, "K_tail": {str(k): v for k, v in self.K_sums.items()}}


def cumulant_decay(ks, model: CovarianceModel, n_list, K_list=(), pair=(0, 1)) -> CumulantDecay:
    """``Sigma_n = sum_{t_1..t_p} |cum(H_{k_1}(X_{t_1}), ..., H_{k_p}(X_{t_p}))|``.

    All ``n^p`` index tuples are summed exactly.  ``Sigma_n / n^{p/2}`` is
    reported; for each ``K`` the sum restricted to ``|t_i - t_j| > K`` for
    the index pair ``pair`` is reported with the same normalization.
    """
    rows = tuple((k,) if isinstance(k, (int, np.integer)) else tuple(k) for k in ks)
    p = len(rows)
    sums, norm = [], []
    K_sums = {K: [] for K in K_list}
    for n in n_list:
        if n ** p > 3_000_000:
            raise BudgetError("too many index tuples")
        T = np.indices((n,) * p).reshape(p, -1).T
        B = model.blocks(n)
        C = B[T[:, :, None], T[:, None, :]]
        val = np.abs(hermite_cumulant(rows, C))
        s = float(val.sum())
        sums.append(s)
        norm.append(s / n ** (p / 2))
        for K in K_list:
            mask = np.abs(T[:, pair[0]] - T[:, pair[1]]) > K
            K_sums[K].append(float(val[mask].sum()) / n ** (p / 2))
    dec = bool(np.all(np.diff(norm) < 0))
    return CumulantDecay(rows, list(n_list), sums, norm, dec, list(K_list), K_sums)
