"""
Gaussian triangular arrays: covariance models, epsilon-standard checks, Q_n,
standardization, exact sampling and finite-n diagnostics of the summability
conditions on the cross-covariances.

Time indices are 1-based throughout (``t = 1..n``) to match the usual
notation ``X_n(t)``.  A covariance model is a vectorized oracle

    cov(n, t, s) -> E[X_n(t) X_n(s)^T]        (shape (..., nu, nu))

optionally carrying a dominating envelope ``rho(j)`` and the covariance of
the tangent process ``E[W_tau(0) W_tau(j)^T]``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

DEGENERACY_RTOL = 1e-10
PSD_TOL = 1e-8
SAMPLING_CAP = 8192


class DegenerateCovarianceError(ValueError):
    """Covariance matrix has an eigenvalue below the degeneracy threshold."""


class NotStandardizedError(ValueError):
    """Per-time marginal covariances are not the identity."""


# ----------------------------------------------------------------------------
# matrix functions


def _eig_checked(S, rtol=DEGENERACY_RTOL):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.shape[0] != S.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(S, S.T, atol=1e-12 * max(1.0, np.abs(S).max())):
        raise ValueError("matrix must be symmetric")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    if w[-1] <= 0 or w[0] < rtol * w[-1]:
        raise DegenerateCovarianceError(
            f"eigenvalues in [{w[0]:.3e}, {w[-1]:.3e}] fall below the ratio {rtol:g}")
    return w, V


def matrix_sqrt(S) -> np.ndarray:
    """Symmetric square root of an SPD matrix."""
    w, V = _eig_checked(S)
    return (V * np.sqrt(w)) @ V.T


def inverse_sqrt(S) -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix."""
    w, V = _eig_checked(S)
    return (V / np.sqrt(w)) @ V.T


def spectral_norm(A) -> float:
    return float(np.linalg.norm(np.atleast_2d(A), 2))


# ----------------------------------------------------------------------------
# models


@dataclass(eq=False)
class CovarianceModel:
    """Covariance oracle for a triangular array of Gaussian vectors in ``R^nu``.

    Parameters
    ----------
    nu : int
    cov_fn : callable ``(n, t, s) -> (..., nu, nu)``
        Broadcasts over integer arrays ``t`` and ``s`` (1-based).
    envelope : callable ``j -> |rho(j)|``, optional
        Dominating function with ``|r_n^{(p,q)}(t, s)| <= envelope(t - s)``.
    tangent : callable ``(tau, j) -> (nu, nu)``, optional
        Covariance ``E W_tau(0) W_tau(j)^T`` of the tangent process.
    lag_cov : callable ``h -> (..., nu, nu)``, optional
        Present for stationary models, where ``cov(n, t, s) = lag_cov(s - t)``.
    """

    nu: int
    cov_fn: Callable
    name: str
    params: dict = field(default_factory=dict)
    envelope: Callable | None = None
    tangent: Callable | None = None
    lag_cov: Callable | None = None
    _factors: dict = field(default_factory=dict, repr=False)

    @property
    def stationary(self) -> bool:
        return self.lag_cov is not None

    @property
    def key(self) -> str:
        blob = json.dumps({"name": self.name, "nu": self.nu, "params": self.params},
                          sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {"name": self.name, "nu": self.nu, **self.params}

    def cov(self, n: int, t, s) -> np.ndarray:
        t = np.asarray(t)
        s = np.asarray(s)
        return np.asarray(self.cov_fn(n, t, s), dtype=float)

    def r(self, n: int, t: int, s: int, p: int, q: int) -> float:
        """``r_n^{(p,q)}(t, s)`` with 1-based coordinates ``p, q``."""
        return float(self.cov(n, t, s)[p - 1, q - 1])

    def blocks(self, n: int) -> np.ndarray:
        """All ``(n, n, nu, nu)`` covariance blocks."""
        idx = np.arange(1, n + 1)
        return self.cov(n, idx[:, None], idx[None, :])

    def full_cov(self, n: int) -> np.ndarray:
        """``(n nu, n nu)`` covariance in time-major order."""
        B = self.blocks(n)
        return B.transpose(0, 2, 1, 3).reshape(n * self.nu, n * self.nu)

    def marginal(self, n: int) -> np.ndarray:
        """Per-time covariance ``Sigma_{t,n}`` stacked as ``(n, nu, nu)``."""
        idx = np.arange(1, n + 1)
        return self.cov(n, idx, idx)

    def rho_matrix(self, n: int) -> np.ndarray:
        """``rho(t, s) = max_{u,v} |E X_t^(u) X_s^(v)|`` for ``t != s``, zero diagonal."""
        R = np.abs(self.blocks(n)).max(axis=(2, 3))
        np.fill_diagonal(R, 0.0)
        return R

    def factor(self, n: int) -> np.ndarray:
        """Lower factor ``L`` with ``L L^T = full_cov(n)``; cached per ``n``."""
        if n in self._factors:
            return self._factors[n]
        if n * self.nu > SAMPLING_CAP:
            raise ValueError(f"n*nu = {n * self.nu} exceeds the exact sampling cap {SAMPLING_CAP}")
        C = self.full_cov(n)
        try:
            L = scipy.linalg.cholesky(C, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(C)
            if w[0] < -PSD_TOL * max(w[-1], 1.0):
                raise DegenerateCovarianceError(
                    f"covariance not PSD: min eigenvalue {w[0]:.3e}") from None
            L = V * np.sqrt(np.clip(w, 0.0, None))
        self._factors[n] = L
        return L


def _eye_blocks(nu, val):
    val = np.asarray(val, dtype=float)
    return val[..., None, None] * np.eye(nu)


def stationary_model(lag_fn: Callable, nu: int, name: str, params: dict,
                     envelope: Callable | None = None) -> CovarianceModel:
    """Model with ``cov(n, t, s) = lag_fn(s - t)`` (shape ``(..., nu, nu)``)."""
    env = envelope
    if env is None:
        env = lambda j: np.abs(lag_fn(np.asarray(j))).max(axis=(-2, -1))  # noqa: E731
    return CovarianceModel(
        nu=nu,
        cov_fn=lambda n, t, s: lag_fn(np.asarray(s) - np.asarray(t)),
        name=name,
        params=params,
        envelope=env,
        tangent=lambda tau, j: lag_fn(np.asarray(j)),
        lag_cov=lag_fn,
    )


def independent(nu: int = 1) -> CovarianceModel:
    """``X_n(t)`` i.i.d. standard Gaussian."""
    def lag(h):
        return _eye_blocks(nu, (np.asarray(h) == 0).astype(float))

    return stationary_model(lag, nu, "independent", {},
                            envelope=lambda j: (np.asarray(j) == 0).astype(float))


def geometric(a: float, nu: int = 1) -> CovarianceModel:
    """Coordinates independent, each with correlation ``a^|h|``."""
    if not 0 <= a < 1:
        raise ValueError("geometric model needs 0 <= a < 1")

    def rho(h):
        return float(a) ** np.abs(np.asarray(h, dtype=float))

    return stationary_model(lambda h: _eye_blocks(nu, rho(h)), nu, "geometric", {"a": a}, envelope=rho)


def polynomial(beta: float, c: float = 1.0, nu: int = 1) -> CovarianceModel:
    """Correlation ``c (1 + |h|)^{-beta}`` for ``h != 0`` and 1 at ``h = 0``."""
    if beta <= 0 or not 0 <= c <= 1:
        raise ValueError("polynomial model needs beta > 0 and 0 <= c <= 1")

    def rho(h):
        h = np.abs(np.asarray(h, dtype=float))
        return np.where(h == 0, 1.0, c * (1.0 + h) ** (-beta))

    return stationary_model(lambda h: _eye_blocks(nu, rho(h)), nu, "polynomial",
                            {"beta": beta, "c": c}, envelope=rho)


def fgn_autocov(H: float, h) -> np.ndarray:
    """Autocovariance of unit-variance fractional Gaussian noise."""
    h = np.abs(np.asarray(h, dtype=float))
    return 0.5 * ((h + 1) ** (2 * H) - 2 * h ** (2 * H) + np.abs(h - 1) ** (2 * H))


def fgn(H: float) -> CovarianceModel:
    """Fractional Gaussian noise (increments of fBm at unit spacing)."""
    if not 0 < H < 1:
        raise ValueError("Hurst index must lie in (0, 1)")
    return stationary_model(lambda h: fgn_autocov(H, h)[..., None, None], 1, "fgn", {"H": H},
                            envelope=lambda j: np.abs(fgn_autocov(H, j)))


def tv_ar1(a_curve: Callable, a_max: float, name: str = "tv_ar1", params: dict | None = None) -> CovarianceModel:
    """Unit-variance time-varying AR(1) array.

    ``X_n(t) = a(t/n) X_n(t-1) + sqrt(1 - a(t/n)^2) eps_t`` started in the
    stationary law, so ``r_n(t, s) = prod_{u=min+1}^{max} a(u/n)``.  The
    tangent process at ``tau`` is the stationary AR(1) with coefficient
    ``a(tau)``; the envelope is ``a_max^|j|``.
    """
    if not 0 <= a_max < 1:
        raise ValueError("need 0 <= a_max < 1")
    cache: dict = {}

    def logcum(n):
        if n not in cache:
            u = np.arange(1, n + 1) / n
            a = np.asarray(a_curve(u), dtype=float)
            if np.any(np.abs(a) > a_max + 1e-15):
                raise ValueError("coefficient curve exceeds a_max")
            cache[n] = np.concatenate([[0.0], np.cumsum(np.log(np.abs(a) + 1e-300))]), np.sign(a)
        return cache[n]

    def cov_fn(n, t, s):
        lc, sg = logcum(n)
        t = np.asarray(t)
        s = np.asarray(s)
        lo = np.minimum(t, s)
        hi = np.maximum(t, s)
        val = np.exp(lc[hi] - lc[lo])
        neg = np.concatenate([[0], np.cumsum(sg < 0)])
        val = val * np.where((neg[hi] - neg[lo]) % 2 == 1, -1.0, 1.0)
        return val[..., None, None]

    def tangent(tau, j):
        return (float(a_curve(np.asarray(tau))) ** np.abs(np.asarray(j, dtype=float)))[..., None, None]

    return CovarianceModel(1, cov_fn, name, params or {"a_max": a_max},
                           envelope=lambda j: a_max ** np.abs(np.asarray(j, dtype=float)),
                           tangent=tangent)


def windowed(base: CovarianceModel, nu: int) -> CovarianceModel:
    """Vectors ``Y_n(k) = (X_{k+1}, ..., X_{k+nu})`` from a scalar model.

    The base array is evaluated at length ``n + nu`` so that ``k = 1..n``.
    Windows are not standardized (coordinates are correlated) unless the base
    is independent; pull functions back by the window covariance before
    using the diagram formula.
    """
    if base.nu != 1:
        raise ValueError("windowing needs a scalar base model")
    off = np.arange(nu)

    def cov_fn(n, t, s):
        t = np.asarray(t)[..., None, None] + off[:, None]
        s = np.asarray(s)[..., None, None] + off[None, :]
        return base.cov(n + nu, t, s)[..., 0, 0]

    env = None
    if base.envelope is not None:
        benv = base.envelope

        def env(j):
            j = np.asarray(j)
            d = j[..., None] + np.arange(-(nu - 1), nu)
            return np.abs(benv(d)).max(axis=-1)

    tang = None
    if base.tangent is not None:
        btan = base.tangent

        def tang(tau, j):
            d = np.asarray(j)[..., None, None] + off[None, :] - off[:, None]
            return btan(tau, d)[..., 0, 0]

    return CovarianceModel(nu, cov_fn, f"windowed[{base.name}]",
                           {"base": base.to_dict(), "window": nu}, env, tang)


BUILDERS = {
    "independent": lambda p: independent(p.get("nu", 1)),
    "geometric": lambda p: geometric(p["a"], p.get("nu", 1)),
    "polynomial": lambda p: polynomial(p["beta"], p.get("c", 1.0), p.get("nu", 1)),
    "fgn": lambda p: fgn(p["H"]),
}


def model_from_dict(d: dict) -> CovarianceModel:
    """Build a model from ``{"name": ..., **params}``."""
    d = dict(d)
    name = d.pop("name", None)
    if name not in BUILDERS:
        raise ValueError(f"unknown model {name!r}; choose from {sorted(BUILDERS)}")
    window = d.pop("window", None)
    try:
        m = BUILDERS[name](d)
    except KeyError as exc:
        raise ValueError(f"model {name!r} is missing parameter {exc}") from None
    return windowed(m, int(window)) if window else m


def model_from_json(s: str) -> CovarianceModel:
    return model_from_dict(json.loads(s))


# ----------------------------------------------------------------------------
# checks


def _check_standard(model, n, tol=1e-10):
    marg = model.marginal(n)
    err = np.abs(marg - np.eye(model.nu)).max()
    if err > tol:
        raise NotStandardizedError(f"marginal covariances deviate from I by {err:.3e}")


@dataclass(frozen=True)
class EpsilonCheck:
    holds: bool
    worst_pair: tuple | None
    worst_value: float


def check_epsilon_standard(model: CovarianceModel, n: int, eps: float) -> EpsilonCheck:
    """Whether ``|E X_t^(u) X_s^(v)| <= eps`` for all ``t != s``."""
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    _check_standard(model, n)
    R = model.rho_matrix(n)
    if n < 2:
        return EpsilonCheck(True, None, 0.0)
    t, s = np.unravel_index(np.argmax(R), R.shape)
    worst = float(R[t, s])
    return EpsilonCheck(worst <= eps, (int(t) + 1, int(s) + 1), worst)


def compute_Qn(model: CovarianceModel, n: int, m: int) -> float:
    """``max_t sum_{s != t} rho(t, s)^m``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if n < 2:
        return 0.0
    return float((model.rho_matrix(n) ** m).sum(axis=1).max())


def standardize(values, sigmas) -> np.ndarray:
    """Apply ``Sigma_t^{-1/2}`` to each row of ``values`` (shape ``(n, nu)``).

    ``sigmas`` is a single ``(nu, nu)`` matrix or one per row.
    """
    values = np.asarray(values, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if sigmas.ndim == 2:
        return values @ inverse_sqrt(sigmas).T
    out = np.empty_like(values)
    for t in range(values.shape[0]):
        out[t] = inverse_sqrt(sigmas[t]) @ values[t]
    return out


# ----------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class GaussianSample:
    n: int
    nu: int
    values: np.ndarray  # (n, nu)
    seed: int
    model: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{u + 1}" for u in range(self.nu)])
        for t, row in enumerate(self.values, start=1):
            w.writerow([t] + [repr(float(v)) for v in row])
        return buf.getvalue()


def sample_array(model: CovarianceModel, n: int, seed: int) -> GaussianSample:
    """Exact draw of ``(X_n(1), ..., X_n(n))``; replicate ``seed`` is reproducible."""
    L = model.factor(n)
    z = np.random.default_rng(seed).standard_normal(n * model.nu)
    return GaussianSample(n, model.nu, (L @ z).reshape(n, model.nu), seed, model.key)


def replicate_chunks(model: CovarianceModel, n: int, reps: int, seed: int, chunk: int = 1000):
    """Yield arrays ``(c, n, nu)`` of replicates ``seed, seed+1, ...`` in order.

    Replicate ``i`` equals ``sample_array(model, n, seed + i).values``.
    """
    L = model.factor(n)
    d = n * model.nu
    for start in range(0, reps, chunk):
        stop = min(reps, start + chunk)
        Z = np.empty((stop - start, d))
        for i in range(start, stop):
            Z[i - start] = np.random.default_rng(seed + i).standard_normal(d)
        yield (Z @ L.T).reshape(stop - start, n, model.nu)


def sample_replicates(model: CovarianceModel, n: int, reps: int, seed: int) -> np.ndarray:
    return np.concatenate(list(replicate_chunks(model, n, reps, seed)), axis=0)


# ----------------------------------------------------------------------------
# summability conditions


@dataclass
class ConditionReport:
    m: int
    n_list: list
    K_list: list
    S1: list
    tails: dict  # n -> [tail(K) for K in K_list]
    envelope_J: list = field(default_factory=list)
    envelope_partial: list = field(default_factory=list)
    envelope_converges: bool | None = None
    envelope_tail_estimate: float | None = None
    note: str = ("finite-n diagnostics only: the conditions involve sup over n and limits, "
                 "so the report can falsify but never certify them")

    def to_dict(self) -> dict:
        return {
            "m": self.m, "n_list": list(self.n_list), "K_list": list(self.K_list),
            "S1": [float(x) for x in self.S1],
            "tails": {str(k): [float(x) for x in v] for k, v in self.tails.items()},
            "S1_trend": _trend(self.S1),
            "envelope_J": list(self.envelope_J),
            "envelope_partial": [float(x) for x in self.envelope_partial],
            "envelope_converges": self.envelope_converges,
            "envelope_tail_estimate": self.envelope_tail_estimate,
            "note": self.note,
        }


def _trend(xs) -> str:
    d = np.diff(np.asarray(xs, dtype=float))
    if len(d) == 0:
        return "n/a"
    if np.all(d >= -1e-12):
        return "nondecreasing"
    if np.all(d <= 1e-12):
        return "nonincreasing"
    return "mixed"


def envelope_partial_sums(envelope: Callable, m: int, J_list=(10**2, 10**3, 10**4, 10**5, 10**6),
                          ratio_threshold: float = 0.9):
    """Partial sums ``sum_{|j| <= J} |rho(j)|^m`` and a convergence verdict.

    The series is declared convergent when successive increments shrink by at
    least ``ratio_threshold``; the remaining tail is then estimated by a
    geometric continuation of the last increment.
    """
    J_list = list(J_list)
    Jmax = J_list[-1]
    j = np.arange(1, Jmax + 1)
    terms = np.abs(envelope(j)) ** m
    cums = np.cumsum(terms)
    base = float(np.abs(envelope(np.array([0])))[0] ** m)
    partial = [base + 2 * float(cums[J - 1]) for J in J_list]
    inc = np.diff(partial)
    if len(inc) < 2:
        return J_list, partial, None, None
    if inc[-1] <= 1e-15 * max(1.0, partial[-1]):
        return J_list, partial, True, 0.0
    ratios = inc[1:] / np.where(inc[:-1] > 0, inc[:-1], np.inf)
    r = float(ratios[-1])
    conv = bool(np.all(ratios < ratio_threshold))
    tail = float(inc[-1] * r / (1 - r)) if conv else None
    return J_list, partial, conv, tail


def check_conditions(model: CovarianceModel, m: int, n_list, K_list,
                     J_list=(10**2, 10**3, 10**4, 10**5, 10**6)) -> ConditionReport:
    """Finite-n diagnostics of the summability and tail conditions."""
    if m < 1:
        raise ValueError("m must be >= 1")
    S1, tails = [], {}
    for n in n_list:
        A = np.abs(model.blocks(n)).max(axis=(2, 3)) ** m
        S1.append(float(A.sum(axis=0).max()))
        idx = np.arange(n)
        lag = np.abs(idx[:, None] - idx[None, :])
        tails[n] = [float(A[lag > K].sum() / n) for K in K_list]
    rep = ConditionReport(m, list(n_list), list(K_list), S1, tails)
    if model.envelope is not None:
        J, part, conv, tail = envelope_partial_sums(model.envelope, m, J_list)
        rep.envelope_J, rep.envelope_partial = J, part
        rep.envelope_converges, rep.envelope_tail_estimate = conv, tail
    return rep


def envelope_tail(envelope: Callable, m: int, J: int, Jmax: int = 10**6) -> float:
    """``sum_{|j| > J} |rho(j)|^m`` truncated at ``Jmax`` plus a geometric
    or integral continuation beyond it."""
    if J >= Jmax:
        Jmax = 10 * J
    j = np.arange(J + 1, Jmax + 1)
    terms = np.abs(envelope(j)) ** m
    s = 2 * float(terms.sum())
    # continuation beyond Jmax via the last decade's decay rate
    if terms[-1] > 0:
        lo = float(np.abs(envelope(np.array([Jmax // 10])))[0] ** m)
        hi = float(terms[-1])
        if lo > 0 and hi < lo:
            slope = math.log(hi / lo) / math.log(10.0)  # terms ~ j^slope
            if slope < -1:
                s += 2 * hi * Jmax / (-slope - 1)
            else:
                s = math.inf
        elif hi >= lo:
            s = math.inf
    return s
