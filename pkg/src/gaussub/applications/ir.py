"""
Increment-ratio (IR) statistic on exactly simulated fractional and
multifractional Brownian paths.

    R^{2,n}(X) = (n-2)^{-1} sum_{k=0}^{n-3}
                 |D_k + D_{k+1}| / (|D_k| + |D_{k+1}|),     0/0 := 1,

with second differences ``D_k = X_{(k+2)/n} - 2 X_{(k+1)/n} + X_{k/n}``.
For fBm the limit is ``Lambda(H) = E f(Z_1, Z_2)`` where ``(Z_1, Z_2)`` is a
standard Gaussian pair with the lag-one correlation of second differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.integrate
import scipy.linalg
from scipy.special import gamma as G

from ..clt import CLTReport, PhiCurve, SubordinatedSum, sigma_limit, summarize
from ..gaussian_model import (DegenerateCovarianceError, fgn_autocov, inverse_sqrt, matrix_sqrt,
                              stationary_model)
from ..hermite import build_expansion, hermite_coefficient, hermite_rank, ir_function

PATH_CAP = 8192


class ZeroVarianceError(ValueError):
    """The statistic has no spread; a CLT comparison is meaningless."""


@dataclass(frozen=True)
class PathSpec:
    """fBm with constant ``H`` or multifractional BM with curve ``H(t)``."""

    kind: str
    n: int
    H: float | None = None
    H_curve: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("fbm", "mbm"):
            raise ValueError("kind must be 'fbm' or 'mbm'")
        if self.n < 3:
            raise ValueError("need n >= 3")
        if self.n > PATH_CAP:
            raise ValueError(f"n exceeds the exact sampling cap {PATH_CAP}")
        if self.kind == "fbm" and not (self.H is not None and 0 < self.H < 1):
            raise ValueError("fbm needs H in (0, 1)")
        if self.kind == "mbm" and self.H_curve is None:
            raise ValueError("mbm needs an H curve")

    def hurst(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "fbm":
            return np.full(t.shape, self.H)
        h = np.asarray(self.H_curve(t), dtype=float)
        if np.any((h <= 0) | (h >= 1)):
            raise ValueError("H(t) must lie in (0, 1)")
        return h


def fbm_cov(H: float, s, t) -> np.ndarray:
    """``E B_H(s) B_H(t) = (s^{2H} + t^{2H} - |s - t|^{2H}) / 2``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (s ** (2 * H) + t ** (2 * H) - np.abs(s - t) ** (2 * H))


def _mbm_D(x, y):
    num = np.sqrt(G(2 * x + 1) * G(2 * y + 1) * np.sin(np.pi * x) * np.sin(np.pi * y))
    return num / (2 * G(x + y + 1) * np.sin(np.pi * (x + y) / 2))


def mbm_cov(hs, ht, s, t) -> np.ndarray:
    """Covariance of the harmonizable multifractional Brownian motion,
    normalized so that ``H`` constant gives fBm."""
    h = hs + ht
    return _mbm_D(hs, ht) * (s**h + t**h - np.abs(s - t) ** h)


def path_covariance(spec: PathSpec) -> np.ndarray:
    """Covariance of ``(X_{1/n}, ..., X_{n/n})`` (``X_0 = 0``)."""
    t = np.arange(1, spec.n + 1) / spec.n
    if spec.kind == "fbm":
        return fbm_cov(spec.H, t[:, None], t[None, :])
    h = spec.hurst(t)
    return mbm_cov(h[:, None], h[None, :], t[:, None], t[None, :])


_FACTORS: dict = {}


def _path_factor(spec: PathSpec):
    key = (spec.kind, spec.n, spec.H, None if spec.H_curve is None else id(spec.H_curve))
    if key not in _FACTORS:
        if spec.kind == "fbm":
            # increments are stationary: factor the fGn covariance, then cumulate
            h = np.arange(spec.n)
            C = scipy.linalg.toeplitz(fgn_autocov(spec.H, h)) * spec.n ** (-2 * spec.H)
        else:
            C = path_covariance(spec)
        try:
            L = scipy.linalg.cholesky(C, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            raise DegenerateCovarianceError("path covariance is not positive definite") from None
        _FACTORS.clear()
        _FACTORS[key] = L
    return _FACTORS[key]


def simulate_paths(spec: PathSpec, reps: int, seed: int, chunk: int = 500) -> np.ndarray:
    """``(reps, n + 1)`` paths on ``k/n, k = 0..n``; replicate ``i`` uses seed ``seed + i``."""
    L = _path_factor(spec)
    out = np.empty((reps, spec.n + 1))
    out[:, 0] = 0.0
    for s0 in range(0, reps, chunk):
        s1 = min(reps, s0 + chunk)
        Z = np.stack([np.random.default_rng(seed + i).standard_normal(spec.n) for i in range(s0, s1)])
        Y = Z @ L.T
        out[s0:s1, 1:] = np.cumsum(Y, axis=1) if spec.kind == "fbm" else Y
    return out


def simulate_path(spec: PathSpec, seed: int) -> np.ndarray:
    return simulate_paths(spec, 1, seed)[0]


def second_difference_var(spec: PathSpec) -> np.ndarray:
    """Model variance ``sigma_{2,n}^2(k)`` of ``D_k``, ``k = 0..n-2``."""
    n = spec.n
    if spec.kind == "fbm":
        return np.full(n - 1, n ** (-2 * spec.H) * (4 - 2 ** (2 * spec.H)))
    t = np.arange(0, n + 1) / n
    h = spec.hurst(np.maximum(t, 1e-300))
    k = np.arange(n - 1)
    idx = np.stack([k, k + 1, k + 2], axis=1)
    w = np.array([1.0, -2.0, 1.0])
    out = np.zeros(n - 1)
    for a in range(3):
        for b in range(3):
            ia, ib = idx[:, a], idx[:, b]
            c = np.where((ia == 0) | (ib == 0), 0.0, mbm_cov(h[ia], h[ib], t[ia], t[ib]))
            out += w[a] * w[b] * c
    return out


@dataclass
class Increments:
    delta: np.ndarray  # D_k, k = 0..n-2
    sigma: np.ndarray | None  # sigma_{2,n}(k), k = 0..n-2
    Y1: np.ndarray | None  # D_k / sigma(k), k = 0..n-3
    Y2: np.ndarray | None  # D_{k+1} / sigma(k)


def second_increments(path, spec: PathSpec | None = None) -> Increments:
    """Second differences of a path on ``k/n`` and, with a model, the
    standardized pairs sharing the normalizer ``sigma_{2,n}(k)``."""
    x = np.asarray(path, dtype=float)
    if x.shape[-1] < 4:
        raise ValueError("need at least 4 path values")
    d = x[..., 2:] - 2 * x[..., 1:-1] + x[..., :-2]
    if spec is None:
        return Increments(d, None, None, None)
    s = np.sqrt(second_difference_var(spec))
    if np.any(s <= 0):
        raise ZeroVarianceError("model variance of second differences vanishes")
    return Increments(d, s, d[..., :-1] / s[:-1], d[..., 1:] / s[:-1])


def ir_ratios(delta) -> np.ndarray:
    """``|D_k + D_{k+1}| / (|D_k| + |D_{k+1}|)`` with ``0/0 := 1``."""
    d = np.asarray(delta, dtype=float)
    a, b = d[..., :-1], d[..., 1:]
    den = np.abs(a) + np.abs(b)
    num = np.abs(a + b)
    return np.where(den == 0, 1.0, num / np.where(den == 0, 1.0, den))


@dataclass
class IRResult:
    value: float | np.ndarray
    ratios: np.ndarray
    target: float | None = None
    deviation: float | None = None


def ir_statistic(path, target: float | None = None) -> IRResult:
    """``R^{2,n}`` of a path given on ``k/n, k = 0..n`` (or a batch)."""
    x = np.asarray(path, dtype=float)
    n = x.shape[-1] - 1
    r = ir_ratios(second_increments(x).delta)
    val = r.mean(axis=-1)
    dev = None if target is None else math.sqrt(n) * (val - target)
    return IRResult(val if np.ndim(val) else float(val), r, target, dev)


# ----------------------------------------------------------------------------
# Lambda(H)


def rho2(H: float) -> float:
    """Lag-one correlation of fBm second differences."""
    g = fgn_autocov(H, np.array([0.0, 1.0, 2.0]))
    return float((2 * g[1] - g[0] - g[2]) / (2 * g[0] - 2 * g[1]))


def second_difference_corr(H: float, j) -> np.ndarray:
    """Correlation of fBm second differences at lag ``j``."""
    j = np.asarray(j, dtype=float)
    g0, g1 = fgn_autocov(H, 0.0), fgn_autocov(H, 1.0)
    c = 2 * fgn_autocov(H, j) - fgn_autocov(H, j - 1) - fgn_autocov(H, j + 1)
    return c / (2 * g0 - 2 * g1)


def lambda_of_rho(r: float) -> float:
    """``E |Z1 + Z2| / (|Z1| + |Z2|)`` for a standard pair with correlation ``r``.

    Computed by exact angular integration of the degree-zero homogeneous
    integrand, split at its kinks.
    """
    if r >= 1:
        return 1.0
    if r <= -1:
        return 0.0
    L = matrix_sqrt(np.array([[1.0, r], [r, 1.0]]))
    return hermite_coefficient(ir_function().pullback(L), (0, 0))


def lambda_mc(r: float, samples: int = 10**6, seed: int = 0):
    """Monte Carlo estimate of ``lambda_of_rho`` with its standard error."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples, 2))
    z[:, 1] = r * z[:, 0] + math.sqrt(max(1 - r * r, 0.0)) * z[:, 1]
    v = ir_function()(z)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(samples))


@dataclass
class LambdaValue:
    H: float
    rho2: float
    value: float
    mc: float | None = None
    mc_se: float | None = None
    flagged: bool = False


def lambda_of_H(H: float, mc_check: bool = False, samples: int = 10**6, seed: int = 0) -> LambdaValue:
    """``Lambda(H)`` through ``rho2(H)``; optional Monte Carlo cross-check
    (flagged when off by more than 3 standard errors)."""
    if not 0 < H < 1:
        raise ValueError("H must lie in (0, 1)")
    r = rho2(H)
    v = lambda_of_rho(r)
    out = LambdaValue(H, r, v)
    if mc_check:
        m, se = lambda_mc(r, samples, seed)
        out.mc, out.mc_se, out.flagged = m, se, abs(m - v) > 3 * se
    return out


def ir_target(spec: PathSpec, points: int = 201) -> float:
    """``int_0^1 Lambda(H(t)) dt``."""
    if spec.kind == "fbm":
        return lambda_of_H(spec.H).value
    t = np.linspace(0, 1, points)
    vals = np.array([lambda_of_H(float(h)).value for h in spec.hurst(t)])
    return float(scipy.integrate.simpson(vals, x=t))


# ----------------------------------------------------------------------------
# CLT experiment


def _tangent_envelope(H: float, r: float, lag: Callable, j0: int = 8) -> Callable:
    """Entrywise bound on the standardized tangent lags.

    The second-difference covariance at lag ``j`` is ``-1/2`` times the fourth
    central difference of ``|x|^{2H}``, a B-spline average of the fourth
    derivative over ``[j-2, j+2]``; hence ``|cov(j)| <= |c_4| (j-2)^{2H-4} / 2``.
    Lags below ``j0`` are taken exactly, since differencing ``j^{2H}`` loses
    all precision far out.
    """
    c4 = abs(2 * H * (2 * H - 1) * (2 * H - 2) * (2 * H - 3))
    # ||S^{-1/2}||^2 = 1/(1 - |r|); a 2x2 block is at most twice its largest entry
    scale = 2 / (1 - abs(r)) * 0.5 * c4 / (4 - 2 ** (2 * H))

    def env(j):
        j = np.abs(np.asarray(j))
        out = scale * np.maximum(j - 3, 1.0) ** (2 * H - 4)
        small = j < j0
        if np.any(small):
            out = np.where(small, 0.0, out)
            out[small] = np.abs(lag(j[small])).max(axis=(-2, -1))
        return out
    return env


def ir_tangent_spec(H: float, N: int = 8) -> SubordinatedSum:
    """Standardized-pair tangent model with the centered IR expansion.

    ``Y(k) = (D_k, D_{k+1}) / sigma`` is stationary with marginal covariance
    ``[[1, r], [r, 1]]``; both the process and ``f`` are pulled back by its
    square root.
    """
    r = rho2(H)
    Sig = np.array([[1.0, r], [r, 1.0]])
    S_half, S_inv = matrix_sqrt(Sig), inverse_sqrt(Sig)

    def lag(h):
        h = np.asarray(h, dtype=float)
        C = np.empty(h.shape + (2, 2))
        C[..., 0, 0] = C[..., 1, 1] = second_difference_corr(H, h)
        C[..., 0, 1] = second_difference_corr(H, h + 1)
        C[..., 1, 0] = second_difference_corr(H, h - 1)
        return S_inv @ C @ S_inv

    model = stationary_model(lag, 2, "ir_tangent", {"H": H}, envelope=_tangent_envelope(H, r, lag))
    e = build_expansion(ir_function().pullback(S_half), 2, N).centered()
    return SubordinatedSum(model, PhiCurve.constant(e), 2, name="ir")


def ir_rank(H: float, N: int = 4) -> int:
    return hermite_rank(ir_tangent_spec(H, N).phi.expansions[0])


def ir_clt_from_values(R: np.ndarray, n: int, target: float, seed: int,
                       sigma_ref: float | None = None) -> CLTReport:
    """Normality diagnostics of ``sqrt(n) (R - target)`` against a fitted normal."""
    R = np.asarray(R, dtype=float)
    T = math.sqrt(n) * (R - target)
    if np.ptp(T) == 0 or np.var(T) == 0:
        raise ZeroVarianceError("the IR statistic is constant across replicates; zero variance")
    mu, sd = float(T.mean()), float(T.std(ddof=1))
    rep = summarize(T - mu, sd * sd, n, seed)
    rep.extra.update({"target": target, "fitted_mean": mu, "fitted_sd": sd,
                      "mean_R": float(R.mean()), "mean_R_se": float(R.std(ddof=1) / math.sqrt(len(R)))})
    if sigma_ref is not None:
        rep.extra["sigma2_tangent"] = sigma_ref
    return rep


def ir_clt_experiment(spec: PathSpec, reps: int, seed: int, with_sigma: bool = True) -> CLTReport:
    """Monte Carlo law of ``sqrt(n)(R^{2,n} - int Lambda(H(t)) dt)``.

    The KS distance is taken against a normal fitted to the sample; for fBm
    the limit variance computed over the standardized tangent pair model is
    reported alongside the empirical one.
    """
    R = np.empty(reps)
    for s0 in range(0, reps, 500):
        s1 = min(reps, s0 + 500)
        R[s0:s1] = ir_statistic(simulate_paths(spec, s1 - s0, seed + s0)).value
    target = ir_target(spec)
    sref = None
    if with_sigma and spec.kind == "fbm":
        try:
            sref = sigma_limit(ir_tangent_spec(spec.H), j_cut=2000, tail_tol=1e-3).value
        except ValueError:
            sref = None
    return ir_clt_from_values(R, spec.n, target, seed, sref)
