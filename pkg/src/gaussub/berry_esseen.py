"""
Berry-Esseen type bounds for ``S_n = n^{-1/2} sum_t f(X_n(t))`` with a fixed
Lipschitz ``f``: the ingredients theta, K, sigma_{l,n}^2, gamma_{n,l,e}, the
six terms A_2..A_7, the smooth / Lipschitz / Kolmogorov bounds and Monte
Carlo distances to compare them with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb, factorial

import numpy as np
import scipy.stats

from .clt import PhiCurve, SubordinatedSum, sigma_levels, simulate_sums
from .gaussian_model import CovarianceModel, envelope_tail, spectral_norm
from .hermite import HermiteExpansion

THETA_JMAX = 10**6


class InsufficientTailError(ValueError):
    """Chaos tail beyond the requested order is not available."""


@dataclass
class BEIngredients:
    nu: int
    m: int
    n: int
    theta_j: np.ndarray  # theta(j), j = 0..n
    K: int
    theta: float
    sigma_l: np.ndarray  # sigma_{l,n}^2, l = 0..N_e
    chaos: np.ndarray  # E f_(l)^2, l = 0..N_e
    Ef2: float
    residual: float  # E f^2 beyond the expansion order
    lip: float
    S_e: np.ndarray = field(repr=False, default=None)  # sum_{|j|<=n} theta(j)^e

    def gamma(self, l: int, e: int) -> float:
        """``n^{-1/2} (2 theta S_e S_{l-e})^{1/2}`` for ``1 <= e <= l-1``."""
        if not 1 <= e <= l - 1:
            raise ValueError("gamma needs 1 <= e <= l - 1")
        return math.sqrt(2 * self.theta * self.S_e[e] * self.S_e[l - e]) / math.sqrt(self.n)

    def chaos_tail(self, N: int) -> float:
        """``sum_{l > N} E f_(l)^2``."""
        Ne = len(self.chaos) - 1
        if N > Ne:
            raise InsufficientTailError(f"expansion order {Ne} is below N={N}")
        t = float(self.chaos[N + 1:].sum() + self.residual)
        if t < -1e-9 * max(self.Ef2, 1.0):
            raise InsufficientTailError(f"negative chaos tail {t:.3e}")
        return max(t, 0.0)

    def to_dict(self) -> dict:
        return {"nu": self.nu, "m": self.m, "n": self.n, "K": self.K, "theta": self.theta,
                "sigma_l": self.sigma_l.tolist(), "chaos": self.chaos.tolist(),
                "Ef2": self.Ef2, "residual": self.residual, "lip": self.lip}


def _theta_K(model: CovarianceModel, nu: int, jmax: int = THETA_JMAX):
    if model.envelope is None:
        raise ValueError("model needs a dominating envelope")
    j = np.arange(1, jmax + 1)
    th = np.abs(model.envelope(j))
    above = np.nonzero(th > 1.0 / nu)[0]
    K = int(above[-1] + 2) if len(above) else 1
    return th, K


def compute_ingredients(model: CovarianceModel, e: HermiteExpansion, n: int, m: int,
                        lip: float = 1.0, literal_range: bool = False) -> BEIngredients:
    """All quantities entering the A-terms for a fixed centered ``f``.

    ``sigma_{l,n}^2`` sums over ``t, t' = 1..n``; ``literal_range`` uses
    ``t, t' = -n..n`` instead (stationary models only).
    """
    nu = model.nu
    th, K = _theta_K(model, nu)
    th0 = float(np.abs(model.envelope(np.array([0])))[0])
    theta = th0**m + 2 * float(np.sum(th**m)) + 2 * envelope_tail(model.envelope, m, THETA_JMAX)
    spec = SubordinatedSum(model, PhiCurve.constant(e), m)
    if literal_range:
        if not model.stationary:
            raise ValueError("the -n..n index range needs a stationary model")
        sl = sigma_levels(spec, 2 * n + 1) * (2 * n + 1) / n
    else:
        sl = sigma_levels(spec, n)
    thj = np.concatenate([[th0], th[:n]])
    Ne = e.N
    S_e = np.zeros(Ne + 2)
    for k in range(1, Ne + 2):
        S_e[k] = th0**k + 2 * float(np.sum(th[:n] ** k))
    return BEIngredients(nu, m, n, thj, K, theta, np.asarray(sl), e.level_masses(), float(e.norm_sq),
                         max(e.residual, 0.0), lip, S_e)


# ----------------------------------------------------------------------------
# A-terms


def A2(ing: BEIngredients, N: int) -> float:
    return 2 * (2 * ing.K + ing.nu**ing.m * ing.theta) * math.sqrt(ing.Ef2 * ing.chaos_tail(N))


def A3(ing: BEIngredients, N: int) -> float:
    nu, tot = ing.nu, 0.0
    for l in range(ing.m, N + 1):
        inner = sum(j * factorial(j) * comb(l, j) ** 2 * math.sqrt(factorial(2 * l - 2 * j)) * ing.gamma(l, j)
                    for j in range(1, l))
        tot += nu**l / factorial(l) * inner
    return 0.5 * ing.Ef2 * tot


def A4(ing: BEIngredients, N: int) -> float:
    nu, tot = ing.nu, 0.0
    for l in range(ing.m, N + 1):
        for lp in range(l + 1, N + 1):
            tot += (nu ** (lp / 2) * math.sqrt(factorial(lp) / factorial(l) * (l + lp) / l)
                    * comb(lp - 1, l - 1) * math.sqrt(factorial(lp - l) * ing.gamma(lp, lp - l)))
    return 0.5 * ing.Ef2 * tot


def A5(ing: BEIngredients, N: int) -> float:
    nu, tot = ing.nu, 0.0
    for l in range(ing.m, N + 1):
        for lp in range(l + 1, N + 1):
            inner = 0.0
            for j in range(1, l):
                inner += (factorial(j - 1) * comb(l - 1, j - 1) * comb(lp - 1, j - 1)
                          * math.sqrt(factorial(l + lp - 2 * j))
                          * (nu**l / factorial(l) * ing.gamma(l, l - j)
                             + nu**lp / factorial(lp) * ing.gamma(lp, lp - j)))
            tot += (l + lp) * inner
    return ing.Ef2 / (2 * math.sqrt(2)) * tot


def covariance_gap(model: CovarianceModel, n: int, J: int, taus=None) -> float:
    """``sup_tau sum_{|j| <= J} ||E X_n([n tau]) X_n([n tau]+j)^T - E W_tau(0) W_tau(j)^T||``.

    Lags leaving ``1..n`` are skipped.
    """
    if model.tangent is None:
        raise ValueError("model has no tangent family")
    if model.stationary:
        return 0.0
    taus = np.linspace(0, 1, 33) if taus is None else np.asarray(taus)
    best = 0.0
    js = np.arange(-J, J + 1)
    for tau in taus:
        k = min(max(int(math.floor(n * tau)), 1), n)
        ok = (k + js >= 1) & (k + js <= n)
        jj = js[ok]
        A = model.cov(n, np.full(len(jj), k), k + jj)
        W = np.stack([np.atleast_2d(model.tangent(tau, j)) for j in jj])
        best = max(best, float(sum(spectral_norm(a - w) for a, w in zip(A, W))))
    return best


def A6(ing: BEIngredients, model: CovarianceModel, J: int, gap: float | None = None) -> float:
    g = covariance_gap(model, ing.n, J) if gap is None else gap
    return 0.5 * ing.lip**2 * g


def A7(ing: BEIngredients, model: CovarianceModel, J: int) -> float:
    return 0.5 * ing.Ef2 * ing.nu**ing.m * envelope_tail(model.envelope, ing.m, J)


def compute_A_terms(ing: BEIngredients, model: CovarianceModel, N: int, J: int) -> dict:
    if N < ing.m:
        raise ValueError("N must be >= m")
    if not 1 <= J <= ing.n:
        raise ValueError("J must lie in 1..n")
    return {"A2": A2(ing, N), "A3": A3(ing, N), "A4": A4(ing, N), "A5": A5(ing, N),
            "A6": A6(ing, model, J), "A7": A7(ing, model, J)}


# ----------------------------------------------------------------------------
# bounds


@dataclass
class BEBoundReport:
    n: int
    sigma_S: float
    N_grid: list
    J_grid: list
    N_terms: dict  # N -> {A2..A5}
    J_terms: dict  # J -> {A6, A7}
    smooth: float
    lipschitz: float
    kolmogorov: float
    argmin: dict
    ingredients: BEIngredients | None = None
    empirical: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n": self.n, "sigma_S": self.sigma_S, "N_grid": self.N_grid, "J_grid": self.J_grid,
            "N_terms": {str(k): v for k, v in self.N_terms.items()},
            "J_terms": {str(k): v for k, v in self.J_terms.items()},
            "bounds": {"smooth": self.smooth, "lipschitz": self.lipschitz, "kolmogorov": self.kolmogorov},
            "argmin": self.argmin,
            "ingredients": self.ingredients.to_dict() if self.ingredients else None,
            "empirical": self.empirical,
        }


def default_J_grid(n: int, points: int = 16) -> list:
    return sorted({int(round(x)) for x in np.geomspace(1, n, points)})


def bounds_from_terms(ing: BEIngredients, sigma_S: float, N_terms: dict, J_terms: dict):
    """Evaluate the three bounds from tabulated A-terms; returns values and argmins."""
    if not sigma_S > 0:
        raise ValueError("sigma_S must be positive")
    if not ing.n > ing.K:
        raise ValueError(f"bounds need n > K = {ing.K}")
    jt = {J: t["A6"] + t["A7"] for J, t in J_terms.items()}
    J_star = min(jt, key=lambda J: (jt[J], J))
    inf_J = jt[J_star]
    smooth_N = {N: t["A2"] + t["A3"] + t["A4"] + t["A5"] for N, t in N_terms.items()}
    N_s = min(smooth_N, key=lambda N: (smooth_N[N], N))
    smooth = smooth_N[N_s] + inf_J
    c2 = 1 / (2 * sigma_S) + 1 / math.sqrt((2 * ing.K + ing.nu**ing.m) * ing.Ef2)
    lip_N = {}
    for N, t in N_terms.items():
        s = float(np.sum(ing.sigma_l[ing.m:N + 1]))
        if not s > 0:
            raise ValueError("level variances sum to zero")
        lip_N[N] = c2 * t["A2"] + (t["A3"] + t["A4"] + t["A5"]) / math.sqrt(s)
    N_l = min(lip_N, key=lambda N: (lip_N[N], N))
    inner = 2 / sigma_S * inf_J + lip_N[N_l]
    lipschitz = inner
    kolmogorov = 2 / sigma_S * math.sqrt(inner)
    arg = {"J": J_star, "N_smooth": N_s, "N_lipschitz": N_l}
    return smooth, lipschitz, kolmogorov, arg


def be_bounds(model: CovarianceModel, e: HermiteExpansion, n: int, m: int, sigma_S: float,
              lip: float = 1.0, N_grid=None, J_grid=None, literal_range: bool = False) -> BEBoundReport:
    """The smooth, Lipschitz and Kolmogorov bounds with infima over finite grids."""
    ing = compute_ingredients(model, e, n, m, lip, literal_range)
    if N_grid is None:
        N_grid = [N for N in range(m, m + 9) if N <= e.N]
    if J_grid is None:
        J_grid = default_J_grid(n)
    N_terms = {N: {"A2": A2(ing, N), "A3": A3(ing, N), "A4": A4(ing, N), "A5": A5(ing, N)} for N in N_grid}
    J_terms = {J: {"A6": A6(ing, model, J), "A7": A7(ing, model, J)} for J in J_grid}
    s, l, k, arg = bounds_from_terms(ing, sigma_S, N_terms, J_terms)
    return BEBoundReport(n, sigma_S, list(N_grid), list(J_grid), N_terms, J_terms, s, l, k, arg, ing)


# ----------------------------------------------------------------------------
# empirical distances


def distances_from_sample(S: np.ndarray, sigma_S: float) -> dict:
    """``{mode: (distance, standard error)}`` for a sample of ``S_n``.

    smooth: ``h = cos`` (``|h''| = 1``, ``E cos S = exp(-sigma^2/2)``);
    lipschitz: ``h = |x|`` (``|h'| = 1``, ``E|S| = sigma sqrt(2/pi)``);
    kolmogorov: sup-distance of the empirical CDF to ``N(0, sigma^2)``.
    """
    S = np.asarray(S, dtype=float)
    r = len(S)
    c = np.cos(S)
    a = np.abs(S)
    out = {
        "smooth": (abs(float(c.mean()) - math.exp(-sigma_S**2 / 2)), float(c.std(ddof=1) / math.sqrt(r))),
        "lipschitz": (abs(float(a.mean()) - sigma_S * math.sqrt(2 / math.pi)), float(a.std(ddof=1) / math.sqrt(r))),
    }
    ks = float(scipy.stats.kstest(S / sigma_S, "norm").statistic)
    out["kolmogorov"] = (ks, 0.5 / math.sqrt(r))
    return out


def empirical_distance(spec: SubordinatedSum, n: int, reps: int, seed: int, sigma_S: float,
                       mode: str = "kolmogorov"):
    """Monte Carlo distance between ``S_n`` and ``N(0, sigma_S^2)`` with its error bar."""
    if reps < 100:
        raise ValueError("need at least 100 replications")
    S = simulate_sums(spec, n, reps, seed)
    d = distances_from_sample(S, sigma_S)
    if mode not in d:
        raise ValueError(f"unknown mode {mode!r}")
    return d[mode]


# ----------------------------------------------------------------------------
# interpolation inequality


def abs_product_moment(r) -> np.ndarray:
    """``E|X||Y|`` for standard Gaussians with correlation ``r``."""
    r = np.clip(np.asarray(r, dtype=float), -1, 1)
    return 2 / math.pi * (np.sqrt(1 - r * r) + r * np.arcsin(r))


def _joint_factor(S):
    nu = S.shape[0]
    J = np.block([[np.eye(nu), S], [S.T, np.eye(nu)]])
    return np.linalg.cholesky(J)


def interpolation_gap(f, S1, S0, samples: int = 10**5, seed: int = 0):
    """Monte Carlo ``Cov(f(X_1), f(X_2)) - Cov(f(W_1), f(W_2))`` with common
    random numbers; ``E X_i X_i^T = E W_i W_i^T = I``, cross-covariances
    ``S1`` and ``S0``.  Returns ``(gap, standard error)``."""
    S1 = np.atleast_2d(np.asarray(S1, dtype=float))
    S0 = np.atleast_2d(np.asarray(S0, dtype=float))
    nu = S1.shape[0]
    z = np.random.default_rng(seed).standard_normal((samples, 2 * nu))
    X = z @ _joint_factor(S1).T
    W = z @ _joint_factor(S0).T
    d = f(X[:, :nu]) * f(X[:, nu:]) - f(W[:, :nu]) * f(W[:, nu:])
    return float(d.mean()), float(d.std(ddof=1) / math.sqrt(samples))


def random_cross_covariance(rng, nu: int, max_norm: float = 0.95) -> np.ndarray:
    """Cross-covariance with spectral norm below ``max_norm`` (joint matrix SPD)."""
    A = rng.standard_normal((nu, nu))
    return A / spectral_norm(A) * rng.uniform(0.0, max_norm)
