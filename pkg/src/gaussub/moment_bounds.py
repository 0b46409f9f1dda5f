"""
Off-diagonal moment sums of products of functions of Gaussian vectors and
their scaling bound ``K n^{p - alpha/2} Q_n^{alpha/2}``.

Expectations are exact up to the Hermite truncation: each function is
expanded and the expectation of every product of Hermite polynomials is
evaluated by the diagram formula.  The unspecified constant in front of the
bound is never estimated; reports contain the ratio series and a trend
verdict only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .gaussian_model import CovarianceModel, compute_Qn
from .hermite import HermiteExpansion, build_expansion, hermite_rank, multi_indices
from .wick import hermite_moment, row_fractions, set_partitions

TREND_THRESHOLD = 1.05
MAX_TUPLES = 3_000_000
RESIDUAL_TOL = 1e-6


class TruncationError(ValueError):
    """An expansion leaves more than the tolerated mass above its order."""


@dataclass
class BoundInstance:
    """Inputs of the off-diagonal bound.

    ``expansions[j]`` is the (time-independent) function in slot ``j``; the
    first ``alpha`` slots are declared to have Hermite rank ``>= m``.
    """

    model: CovarianceModel
    n: int
    p: int
    alpha: int
    m: int
    expansions: list
    eps: float | None = None

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if not 0 <= self.alpha <= self.p:
            raise ValueError("alpha must lie in 0..p")
        if len(self.expansions) != self.p:
            raise ValueError("need one expansion per slot")
        if any(e.nu != self.model.nu for e in self.expansions):
            raise ValueError("expansion dimension differs from the model")

    @property
    def nu(self) -> int:
        return self.model.nu

    def rank_certificates(self) -> list:
        """``[(slot, certified rank, ok)]`` for the first ``alpha`` slots."""
        out = []
        for j in range(self.alpha):
            r = hermite_rank(self.expansions[j])
            out.append((j, r, r >= self.m))
        return out

    @property
    def misdeclared(self) -> list:
        return [j for j, _, ok in self.rank_certificates() if not ok]

    def epsilon_condition(self) -> dict:
        """Largest off-diagonal correlation against ``1/(nu p - 1)``."""
        R = self.model.rho_matrix(self.n)
        eps = float(R.max()) if self.n > 1 else 0.0
        limit = 1.0 / (self.nu * self.p - 1)
        return {"eps": eps, "limit": limit, "holds": eps < limit}

    def K(self) -> float:
        return float(np.prod([math.sqrt(max(e.norm_sq, 0.0)) for e in self.expansions]))

    def at(self, n: int) -> "BoundInstance":
        return replace(self, n=n)


def distinct_tuples(n: int, p: int) -> np.ndarray:
    """All ``(t_1..t_p)`` in ``0..n-1`` with pairwise distinct entries, lexicographic."""
    if n ** p > MAX_TUPLES:
        raise ValueError(f"n^p = {n ** p} exceeds the tuple budget {MAX_TUPLES}")
    T = np.indices((n,) * p).reshape(p, -1).T
    ok = np.ones(len(T), dtype=bool)
    for a, b in itertools.combinations(range(p), 2):
        ok &= T[:, a] != T[:, b]
    return T[ok]


def tuple_covariances(model: CovarianceModel, n: int, T: np.ndarray) -> np.ndarray:
    """``(len(T), p, p, nu, nu)`` cross-covariance blocks for index tuples."""
    B = model.blocks(n)
    return B[T[:, :, None], T[:, None, :]]


def _slot_terms(e: HermiteExpansion):
    return [(k, c / f) for k, c, f in zip(e.indices, e.coeffs, e.factorials) if c != 0.0]


def product_expectations(expansions, C) -> np.ndarray:
    """``E[f_1(X_1)...f_p(X_p)]`` for each batch entry of cross-covariances ``C``.

    Same-time products are not allowed here; every slot must be a distinct
    time (the caller merges coinciding slots into powers).
    """
    C = np.asarray(C, dtype=float)
    out = np.zeros(C.shape[:-4])
    for combo in itertools.product(*[_slot_terms(e) for e in expansions]):
        ks = tuple(k for k, _ in combo)
        if sum(sum(k) for k in ks) % 2:
            continue
        w = math.prod(c for _, c in combo)
        out = out + w * hermite_moment(ks, C)
    return out


def _check_residuals(expansions, tol):
    for j, e in enumerate(expansions):
        if e.residual > tol * max(1.0, e.norm_sq):
            raise TruncationError(f"slot {j}: truncation residual {e.residual:.3e} exceeds tolerance")


def offdiag_sum(inst: BoundInstance, residual_tol: float = RESIDUAL_TOL) -> float:
    """``sum' |E f_1(X_{t_1}) ... f_p(X_{t_p})|`` over distinct index tuples."""
    _check_residuals(inst.expansions, residual_tol)
    T = distinct_tuples(inst.n, inst.p)
    if len(T) == 0:
        return 0.0
    C = tuple_covariances(inst.model, inst.n, T)
    vals = product_expectations(inst.expansions, C)
    return float(np.sum(np.abs(vals)))


def bound_rhs(inst: BoundInstance, Q: float | None = None) -> float:
    """``K n^{p - alpha/2} Q_n^{alpha/2}`` (unknown constant omitted)."""
    if Q is None:
        Q = compute_Qn(inst.model, inst.n, inst.m)
    return rhs_value(inst.K(), inst.n, inst.p, inst.alpha, Q)


def rhs_value(K: float, n: int, p: int, alpha: float, Q: float) -> float:
    if alpha == 0:
        return float(K * n ** p)
    return float(K * n ** (p - alpha / 2) * Q ** (alpha / 2))


@dataclass
class BoundReport:
    n_list: list
    lhs: list
    rhs: list
    ratio: list
    Q: list
    K: float
    p: int
    alpha: int
    m: int
    threshold: float
    small_half_max: float
    large_half_max: float
    verdict: str
    misdeclared: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    note: str = "the constant in the bound is nonconstructive; only the scaling is checked"

    @property
    def bounded(self) -> bool:
        return self.verdict == "bounded"

    def to_dict(self) -> dict:
        return {
            "n": list(self.n_list), "lhs": list(self.lhs), "rhs": list(self.rhs),
            "ratio": list(self.ratio), "Q": list(self.Q), "K": self.K,
            "p": self.p, "alpha": self.alpha, "m": self.m, "threshold": self.threshold,
            "small_half_max": self.small_half_max, "large_half_max": self.large_half_max,
            "verdict": self.verdict, "misdeclared_slots": list(self.misdeclared),
            "epsilon": self.epsilon, "note": self.note,
        }

    def rows(self):
        return [{"n": n, "lhs": a, "rhs": b, "ratio": r}
                for n, a, b, r in zip(self.n_list, self.lhs, self.rhs, self.ratio)]


def trend_verdict(ratios, threshold: float = TREND_THRESHOLD):
    """Split the series into its first ``ceil(L/2)`` and remaining values and
    compare maxima."""
    r = np.asarray(ratios, dtype=float)
    h = (len(r) + 1) // 2
    small, large = float(np.max(r[:h])), float(np.max(r[h:])) if len(r) > h else float("nan")
    if not np.isfinite(large):
        return small, large, "growth" if np.isinf(large) else "bounded"
    if large <= threshold * small or (small == 0 and large == 0):
        return small, large, "bounded"
    return small, large, "growth"


def ratio_scan(inst: BoundInstance, n_list, threshold: float = TREND_THRESHOLD) -> BoundReport:
    """Ratio ``offdiag_sum / bound_rhs`` over ``n_list`` and its trend verdict."""
    n_list = sorted(int(n) for n in n_list)
    lhs, rhs, ratio, Qs, eps = [], [], [], [], []
    for n in n_list:
        I = inst.at(n)
        Q = compute_Qn(I.model, n, I.m)
        a, b = offdiag_sum(I), bound_rhs(I, Q)
        lhs.append(a)
        rhs.append(b)
        Qs.append(Q)
        ratio.append(a / b if b > 0 else (0.0 if a == 0 else math.inf))
        eps.append(I.epsilon_condition())
    s, L, verdict = trend_verdict(ratio, threshold)
    return BoundReport(n_list, lhs, rhs, ratio, Qs, inst.K(), inst.p, inst.alpha, inst.m,
                       threshold, s, L, verdict, inst.misdeclared, eps)


# ----------------------------------------------------------------------------
# Hoelder quantities


@dataclass
class HolderQuantities:
    R: np.ndarray  # (p, p), R[u, v]; 1 where l_uv = 0 and on the diagonal
    L: dict  # U -> Fraction
    Lstar: dict
    identity_holds: bool
    I_exact: float | None = None
    holder_min: float | None = None

    @property
    def prod_upper(self) -> float:
        p = self.R.shape[0]
        return float(np.prod([self.R[u, v] for u in range(p) for v in range(u + 1, p)]))

    @property
    def prod_lower(self) -> float:
        p = self.R.shape[0]
        return float(np.prod([self.R[v, u] for u in range(p) for v in range(u + 1, p)]))


def _rho_pairs(model, n, K_cut):
    R = model.rho_matrix(n)
    if K_cut is not None:
        idx = np.arange(n)
        R = np.where(np.abs(idx[:, None] - idx[None, :]) > K_cut, R, 0.0)
    return R


def holder_quantities(ell, lens, model: CovarianceModel, n: int, K_cut: int | None = None,
                      exact: bool = True) -> HolderQuantities:
    """``R_uv``, ``L(U)``, ``L*(U)`` for a diagram with row edge counts ``ell``.

    ``R_uv = (sum_t (sum_{s != t} rho^{k_u}(s, t))^{k_v/k_u})^{l_uv/k_v}`` with
    ``rho(t, s)`` the largest absolute cross-correlation; with ``K_cut`` only
    lags above the cutoff enter.  ``exact`` also computes
    ``I = sum' prod_{u<v} rho(t_u, t_v)^{l_uv}`` by enumeration.
    """
    ell = np.asarray(ell, dtype=int)
    lens = [int(x) for x in lens]
    p = len(lens)
    rho = _rho_pairs(model, n, K_cut)
    R = np.ones((p, p))
    for u in range(p):
        for v in range(p):
            if u == v or ell[u, v] == 0:
                continue
            ku, kv = lens[u], lens[v]
            inner = (rho ** ku).sum(axis=0)  # sum over s for each t
            R[u, v] = float(np.sum(inner ** (kv / ku)) ** (ell[u, v] / kv))
    fr = row_fractions(ell, lens)
    L = {U: a for U, (a, _) in fr.items()}
    Ls = {U: b for U, (_, b) in fr.items()}
    ok = all(L[U] + Ls[U] == Fraction(len(U)) for U in fr)
    hq = HolderQuantities(R, L, Ls, ok)
    if exact:
        T = distinct_tuples(n, p)
        val = np.ones(len(T))
        for u in range(p):
            for v in range(u + 1, p):
                if ell[u, v]:
                    val *= rho[T[:, u], T[:, v]] ** ell[u, v]
        hq.I_exact = float(val.sum())
        hq.holder_min = min(hq.prod_upper, hq.prod_lower)
    return hq


# ----------------------------------------------------------------------------
# fourth moment


PATTERNS = {
    (1, 1, 1, 1): "all distinct",
    (2, 1, 1): "one pair",
    (2, 2): "two pairs",
    (3, 1): "triple",
    (4,): "all equal",
}


def expansion_power(e: HermiteExpansion, j: int, nodes: int | None = None) -> HermiteExpansion:
    """Hermite expansion of ``(truncated f)^j``, exact up to order ``j N``."""
    if j == 1:
        return e
    N = j * e.N
    nodes = nodes or (N + 1)
    return build_expansion(lambda x: e(x) ** j, e.nu, N, nodes=nodes)


@dataclass
class FourthMomentReport:
    n: int
    M_n: float
    by_pattern: dict  # name -> signed contribution
    abs_by_pattern: dict  # name -> sum of |E| contributions
    bound_by_pattern: dict  # name -> K n^{b - alpha/2} Q^{alpha/2} summed over partitions
    Q: float

    def to_dict(self) -> dict:
        return {"n": self.n, "M_n": self.M_n, "Q": self.Q,
                "signed": self.by_pattern, "abs": self.abs_by_pattern, "bound": self.bound_by_pattern}


def fourth_moment_bound(model: CovarianceModel, e: HermiteExpansion, n: int, m: int) -> FourthMomentReport:
    """``M_n = E(sum_t f(X_t))^4`` split by coinciding-index pattern.

    Each of the 15 set partitions of the four summation indices contributes
    ``sum' E prod_B f^{|B|}(X_{s_B})`` over distinct block times.  The bound
    piece for a partition with ``b`` blocks, ``alpha`` of them singletons
    (rank ``>= m``), is ``K n^{b - alpha/2} Q_n^{alpha/2}``.
    """
    powers = {j: expansion_power(e, j) for j in range(1, 5)}
    Q = compute_Qn(model, n, m)
    signed = {name: 0.0 for name in PATTERNS.values()}
    absval = dict(signed)
    bound = dict(signed)
    for part in set_partitions(range(4)):
        sizes = sorted((len(B) for B in part), reverse=True)
        name = PATTERNS[tuple(sizes)]
        # put singletons first so that alpha counts leading slots
        blocks = sorted(part, key=len)
        exps = [powers[len(B)] for B in blocks]
        b = len(blocks)
        alpha = sum(1 for B in blocks if len(B) == 1)
        if b == 1:
            val = np.full(n, exps[0].mean)
        else:
            T = distinct_tuples(n, b)
            val = product_expectations(exps, tuple_covariances(model, n, T)) if len(T) else np.zeros(0)
        signed[name] += float(val.sum())
        absval[name] += float(np.abs(val).sum())
        K = float(np.prod([math.sqrt(x.norm_sq) for x in exps]))
        bound[name] += rhs_value(K, n, b, alpha, Q)
    return FourthMomentReport(n, float(sum(signed.values())), signed, absval, bound, Q)
