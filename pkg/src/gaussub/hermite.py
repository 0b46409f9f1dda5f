"""
Hermite polynomials, Hermite expansions of functions of a standard Gaussian
vector, chaos projections and Hermite rank detection.

Conventions
-----------
``H_k`` are the probabilists' Hermite polynomials (``H_2(x) = x**2 - 1``).
A multi-index ``k = (k_1, ..., k_nu)`` is a plain tuple of nonnegative ints and
``H_k(x) = H_{k_1}(x_1) ... H_{k_nu}(x_nu)``.  The expansion of ``f`` is

    f(x) = sum_k J_f(k) / k! * H_k(x),      J_f(k) = E f(X) H_k(X),

with ``X`` standard Gaussian in ``R^nu``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial import hermite_e

MultiIndex = tuple  # tuple[int, ...]

DEFAULT_NODES = 40
RANK_TOL = 1e-8


class InsufficientQuadratureError(ValueError):
    """Quadrature mass is smaller than the sum of squared coefficients."""


# ----------------------------------------------------------------------------
# multi-indices


def order(k: Sequence[int]) -> int:
    return int(sum(k))


def mfactorial(k: Sequence[int]) -> int:
    out = 1
    for ki in k:
        out *= math.factorial(ki)
    return out


def _compositions(total: int, parts: int):
    # lexicographically descending in the first coordinate
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def multi_indices(nu: int, N: int) -> tuple:
    """All multi-indices of dimension ``nu`` with order <= N, graded lex order."""
    out = []
    for d in range(N + 1):
        out.extend(_compositions(d, nu))
    return tuple(out)


# ----------------------------------------------------------------------------
# polynomials


def hermite_poly(k: int, x):
    """Probabilists' Hermite polynomial ``H_k(x)`` by the three-term recurrence."""
    if k < 0:
        raise ValueError(f"Hermite degree must be >= 0, got {k}")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if k == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    h = x.copy()
    for j in range(1, k):
        h_prev, h = h, x * h - j * h_prev
    return h if h.ndim else float(h)


def hermite_table(x, N: int) -> np.ndarray:
    """Values ``H_0(x), ..., H_N(x)`` stacked on a new trailing axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (N + 1,))
    out[..., 0] = 1.0
    if N >= 1:
        out[..., 1] = x
    for j in range(1, N):
        out[..., j + 1] = x * out[..., j] - j * out[..., j - 1]
    return out


def product_hermite(k: Sequence[int], x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != len(k):
        raise ValueError(f"dimension mismatch: multi-index {tuple(k)} vs point of size {x.shape[-1]}")
    out = np.ones(x.shape[:-1])
    for a, ka in enumerate(k):
        out = out * hermite_poly(ka, x[..., a])
    return out if out.ndim else float(out)


def _product_table(table: np.ndarray, indices: Iterable[Sequence[int]]) -> np.ndarray:
    # table: (..., nu, N+1) -> (..., D)
    cols = []
    for k in indices:
        v = table[..., 0, k[0]]
        for a in range(1, len(k)):
            v = v * table[..., a, k[a]]
        cols.append(v)
    return np.stack(cols, axis=-1)


# ----------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=32)
def _gh_1d(nodes: int):
    x, w = hermite_e.hermegauss(nodes)
    return x, w / math.sqrt(2.0 * math.pi)


def gauss_hermite_grid(nu: int, nodes: int = DEFAULT_NODES):
    """Tensor Gauss-Hermite rule for the standard Gaussian law on ``R^nu``.

    Returns ``(points, weights)`` with shapes ``(nodes**nu, nu)`` and ``(nodes**nu,)``.
    """
    if nu > 6:
        raise ValueError("tensor quadrature is limited to nu <= 6")
    x, w = _gh_1d(nodes)
    pts = np.array(list(itertools.product(x, repeat=nu)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=nu))), axis=1)
    return pts, wts


@dataclass(frozen=True)
class HomogeneousFunction:
    """Function of the form ``f(x) = sum_i |x|**d_i * g_i(x / |x|)``.

    Non-smooth functions such as ``|x|`` or the increment-ratio function are of
    this type.  Their Gaussian integrals split into a radial moment (closed
    form) and an angular integral, which is computed piecewise between the
    zero sets of the linear forms in ``kinks`` and is therefore accurate to
    rounding.  Only ``nu in (1, 2)`` is supported.
    """

    nu: int
    terms: tuple  # ((degree, g), ...) with g: (M, nu) unit vectors -> (M,)
    kinks: tuple = ()  # linear forms a (length nu) where the angular part may kink
    at_origin: float = 0.0
    name: str = "homogeneous"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        zero = r == 0
        u = x / np.where(zero, 1.0, r)[..., None]
        out = np.zeros(r.shape)
        for d, g in self.terms:
            val = np.asarray(g(u.reshape(-1, self.nu)), dtype=float).reshape(r.shape)
            out = out + (r**d if d else 1.0) * val
        return np.where(zero, self.at_origin, out)

    def pullback(self, L) -> "HomogeneousFunction":
        """``x -> f(L x)`` as a homogeneous function."""
        L = np.asarray(L, dtype=float)
        terms = tuple((d, _pulled_angular(g, L, d)) for d, g in self.terms)
        kinks = tuple(L.T @ np.asarray(a, dtype=float) for a in self.kinks)
        return HomogeneousFunction(self.nu, terms, kinks, self.at_origin, self.name + "~")

    def shifted(self, c: float) -> "HomogeneousFunction":
        """``f + c``."""
        const = (0, lambda u, c=c: np.full(len(u), c))
        return HomogeneousFunction(self.nu, self.terms + (const,), self.kinks,
                                   self.at_origin + c, self.name)


def _pulled_angular(g, L, d):
    def gt(u):
        v = u @ L.T
        s = np.linalg.norm(v, axis=-1)
        return s**d * g(v / s[:, None])
    return gt


def _chi_moment(nu: int, s: float) -> float:
    # E |X|^s for X standard Gaussian in R^nu
    return math.exp(0.5 * s * math.log(2.0) + math.lgamma(0.5 * (nu + s)) - math.lgamma(0.5 * nu))


@lru_cache(maxsize=64)
def _gl(nodes: int):
    return np.polynomial.legendre.leggauss(nodes)


def _angular_rule(f: HomogeneousFunction, per_piece: int = 48):
    """Nodes (M, nu) on the unit sphere and weights summing to one."""
    if f.nu == 1:
        return np.array([[-1.0], [1.0]]), np.array([0.5, 0.5])
    if f.nu != 2:
        raise ValueError("polar quadrature supports nu <= 2 only")
    brk = [0.0, 2 * math.pi]
    for a in f.kinks:
        a = np.asarray(a, dtype=float)
        if not np.any(a):
            continue
        th = math.atan2(-a[0], a[1]) % math.pi
        brk.extend([th, th + math.pi])
    brk = np.unique(np.round(np.array(brk), 15))
    # split every piece in two so that pieces stay short
    mids = 0.5 * (brk[:-1] + brk[1:])
    brk = np.sort(np.concatenate([brk, mids]))
    x, w = _gl(per_piece)
    th, wt = [], []
    for lo, hi in zip(brk[:-1], brk[1:]):
        if hi - lo <= 1e-15:
            continue
        th.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        wt.append(0.5 * (hi - lo) * w)
    th = np.concatenate(th)
    wt = np.concatenate(wt) / (2 * math.pi)
    return np.column_stack([np.cos(th), np.sin(th)]), wt


@lru_cache(maxsize=None)
def _herme_monomials(k: int) -> np.ndarray:
    return hermite_e.herme2poly([0] * k + [1])


def _polar_moments(f: HomogeneousFunction, indices) -> tuple[np.ndarray, float]:
    """Exact ``E f(X) H_k(X)`` for each k, and ``E f(X)^2``."""
    u, w = _angular_rule(f)
    gvals = [(d, np.asarray(g(u), dtype=float)) for d, g in f.terms]
    nu = f.nu
    out = np.zeros(len(indices))
    cache: dict = {}

    def mono(j):
        # E f(X) X^j for monomial exponent j
        if j not in cache:
            uj = np.prod(u ** np.array(j), axis=1)
            cache[j] = sum(_chi_moment(nu, d + sum(j)) * float(np.dot(w, gv * uj))
                           for d, gv in gvals)
        return cache[j]

    for i, k in enumerate(indices):
        polys = [_herme_monomials(ka) for ka in k]
        total = 0.0
        for j in itertools.product(*[range(len(p)) for p in polys]):
            c = 1.0
            for a, ja in enumerate(j):
                c *= polys[a][ja]
            if c != 0.0:
                total += c * mono(j)
        out[i] = total
    norm_sq = 0.0
    for d1, g1 in gvals:
        for d2, g2 in gvals:
            norm_sq += _chi_moment(nu, d1 + d2) * float(np.dot(w, g1 * g2))
    return out, norm_sq


# ----------------------------------------------------------------------------
# expansions


@dataclass
class HermiteExpansion:
    """Truncated Hermite expansion ``k -> J_f(k)`` for ``|k| <= N``.

    ``norm_sq`` is ``E f(X)^2`` for the full (untruncated) function as far as
    it is known; ``residual = norm_sq - l2_norm_sq`` is the mass of the chaos
    levels above ``N``.
    """

    nu: int
    N: int
    coeffs: np.ndarray
    norm_sq: float | None = None
    flags: list = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (len(self.indices),):
            raise ValueError("coefficient vector does not match the multi-index set")
        if self.norm_sq is None:
            self.norm_sq = self.l2_norm_sq

    @property
    def indices(self) -> tuple:
        return multi_indices(self.nu, self.N)

    @property
    def factorials(self) -> np.ndarray:
        return _factorials(self.nu, self.N)

    @property
    def orders(self) -> np.ndarray:
        return _orders(self.nu, self.N)

    @property
    def l2_norm_sq(self) -> float:
        return float(np.sum(self.coeffs**2 / self.factorials))

    @property
    def residual(self) -> float:
        return float(self.norm_sq - self.l2_norm_sq)

    @property
    def mean(self) -> float:
        return float(self.coeffs[0])

    def coefficient(self, k: Sequence[int]) -> float:
        k = tuple(k)
        if len(k) != self.nu or order(k) > self.N:
            return 0.0
        return float(self.coeffs[_index_of(self.nu, self.N)[k]])

    def level_masses(self) -> np.ndarray:
        """``E f_(l)(X)^2`` for ``l = 0..N``."""
        return np.bincount(self.orders, weights=self.coeffs**2 / self.factorials,
                           minlength=self.N + 1)

    def nonzero(self, tol: float = 0.0):
        """``[(k, J_f(k))]`` for coefficients with ``|J| > tol``."""
        return [(k, float(c)) for k, c in zip(self.indices, self.coeffs) if abs(c) > tol]

    def centered(self) -> "HermiteExpansion":
        c = self.coeffs.copy()
        j0 = c[0]
        c[0] = 0.0
        return HermiteExpansion(self.nu, self.N, c, self.norm_sq - j0**2, list(self.flags), self.name)

    def truncated(self, N: int) -> "HermiteExpansion":
        """Same function with only the levels ``<= N`` kept in the coefficients."""
        if N > self.N:
            raise ValueError(f"cannot extend truncation order {self.N} to {N}")
        keep = self.orders <= N
        return HermiteExpansion(self.nu, N, self.coeffs[keep], self.norm_sq, list(self.flags), self.name)

    def restricted(self, levels) -> "HermiteExpansion":
        """Polynomial with only the chaos levels in ``levels`` (exact norm)."""
        mask = np.isin(self.orders, list(levels))
        return HermiteExpansion(self.nu, self.N, np.where(mask, self.coeffs, 0.0), None, [], self.name)

    def scaled(self, a: float) -> "HermiteExpansion":
        return HermiteExpansion(self.nu, self.N, a * self.coeffs, a * a * self.norm_sq,
                                list(self.flags), self.name)

    def __call__(self, x) -> np.ndarray:
        """Evaluate the truncated series at points ``x`` of shape ``(..., nu)``."""
        x = np.asarray(x, dtype=float)
        tab = hermite_table(x, self.N)
        vals = _product_table(tab, self.indices)
        return vals @ (self.coeffs / self.factorials)

    def to_dict(self) -> dict:
        return {
            "nu": self.nu,
            "N": self.N,
            "coeffs": [{"k": list(k), "J": float(c)} for k, c in zip(self.indices, self.coeffs)],
            "residual": self.residual,
            "norm_sq": float(self.norm_sq),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "HermiteExpansion":
        nu, N = int(d["nu"]), int(d["N"])
        return cls.from_coeffs(nu, N, {tuple(c["k"]): c["J"] for c in d["coeffs"]},
                               norm_sq=d.get("norm_sq"))

    @classmethod
    def from_json(cls, s: str) -> "HermiteExpansion":
        return cls.from_dict(json.loads(s))

    @classmethod
    def from_coeffs(cls, nu: int, N: int, coeffs: dict, norm_sq: float | None = None,
                    name: str = "") -> "HermiteExpansion":
        idx = _index_of(nu, N)
        c = np.zeros(len(idx))
        for k, v in coeffs.items():
            k = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
            if len(k) != nu or order(k) > N:
                raise ValueError(f"multi-index {k} outside nu={nu}, N={N}")
            c[idx[k]] = v
        return cls(nu, N, c, norm_sq, [], name)


@lru_cache(maxsize=None)
def _factorials(nu, N):
    return np.array([float(mfactorial(k)) for k in multi_indices(nu, N)])


@lru_cache(maxsize=None)
def _orders(nu, N):
    return np.array([order(k) for k in multi_indices(nu, N)], dtype=int)


@lru_cache(maxsize=None)
def _index_of(nu, N):
    return {k: i for i, k in enumerate(multi_indices(nu, N))}


def hermite_monomial(k, N: int | None = None) -> HermiteExpansion:
    """Expansion of ``H_k`` itself (``J(k) = k!``)."""
    k = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
    N = order(k) if N is None else N
    return HermiteExpansion.from_coeffs(len(k), N, {k: mfactorial(k)}, name=f"H{list(k)}")


def hermite_coefficient(f: Callable, k: Sequence[int], nodes: int = DEFAULT_NODES) -> float:
    """``E f(X) H_k(X)`` by tensor Gauss-Hermite quadrature (polar rule for
    :class:`HomogeneousFunction`).

    ``f`` maps an array of points ``(M, nu)`` to ``(M,)``.
    """
    k = tuple(k)
    if isinstance(f, HomogeneousFunction):
        if f.nu != len(k):
            raise ValueError("dimension mismatch")
        return float(_polar_moments(f, [k])[0][0])
    pts, w = gauss_hermite_grid(len(k), nodes)
    vals = np.asarray(f(pts), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("f is not finite at a quadrature node")
    return float(np.dot(w, vals * product_hermite(k, pts)))


def build_expansion(f: Callable, nu: int, N: int, nodes: int = DEFAULT_NODES,
                    smooth: bool = True, tol: float = 1e-9, mc_check: bool = False,
                    mc_samples: int = 10**6, seed: int = 0, name: str = "") -> HermiteExpansion:
    """Hermite coefficients of ``f`` for all ``|k| <= N``.

    Smooth ``f`` use a tensor Gauss-Hermite rule with ``nodes`` points per
    axis.  For ``smooth=False`` the node count is doubled and, with
    ``mc_check``, every coefficient is compared against a Monte Carlo estimate;
    coefficients that disagree by more than 3 standard errors are recorded in
    ``flags``.  A :class:`HomogeneousFunction` uses the polar rule instead.

    Raises
    ------
    InsufficientQuadratureError
        if ``E f^2`` by quadrature is smaller than ``sum J^2/k!`` by more than
        ``tol`` (relative), which means the rule is too coarse.
    """
    if N < 0:
        raise ValueError("truncation order must be >= 0")
    indices = multi_indices(nu, N)
    if isinstance(f, HomogeneousFunction):
        if f.nu != nu:
            raise ValueError("dimension mismatch")
        coeffs, norm_sq = _polar_moments(f, indices)
    else:
        if not smooth:
            nodes *= 2
        if 2 * nodes - 1 < 2 * N:
            nodes = N + 1
        pts, w = gauss_hermite_grid(nu, nodes)
        vals = np.asarray(f(pts), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("f is not finite at a quadrature node")
        H = _product_table(hermite_table(pts, N), indices)
        coeffs = (w * vals) @ H
        norm_sq = float(np.dot(w, vals**2))
    e = HermiteExpansion(nu, N, coeffs, norm_sq, [], name)
    if e.residual < -tol * max(1.0, norm_sq):
        raise InsufficientQuadratureError(
            f"negative truncation residual {e.residual:.3e}; increase the quadrature order")
    if mc_check:
        e.flags.extend(mc_cross_check(f, e, samples=mc_samples, seed=seed))
    return e


def mc_cross_check(f: Callable, e: HermiteExpansion, samples: int = 10**6, seed: int = 0,
                   z: float = 3.0, chunk: int = 200_000) -> list:
    """Multi-indices whose coefficient disagrees with Monte Carlo by > z s.e."""
    rng = np.random.default_rng(seed)
    D = len(e.indices)
    s1 = np.zeros(D)
    s2 = np.zeros(D)
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        x = rng.standard_normal((m, e.nu))
        prod = np.asarray(f(x), dtype=float)[:, None] * _product_table(hermite_table(x, e.N), e.indices)
        s1 += prod.sum(0)
        s2 += (prod**2).sum(0)
        done += m
    mean = s1 / samples
    se = np.sqrt(np.maximum(s2 / samples - mean**2, 0.0) / samples)
    bad = np.abs(mean - e.coeffs) > z * np.maximum(se, 1e-300)
    return [{"k": list(k), "J_quad": float(c), "J_mc": float(mm), "se": float(s)}
            for k, c, mm, s, b in zip(e.indices, e.coeffs, mean, se, bad) if b]


# ----------------------------------------------------------------------------
# rank and chaos components


def hermite_rank(e: HermiteExpansion, tol: float = RANK_TOL) -> int:
    """Smallest level ``m`` whose mass exceeds ``tol * l2_norm_sq``.

    Returns ``N + 1`` when no level up to ``N`` carries mass, meaning only
    "rank >= N + 1" is certified.
    """
    masses = e.level_masses()
    scale = max(e.l2_norm_sq, np.finfo(float).tiny)
    above = np.nonzero(masses > tol * scale)[0]
    if e.l2_norm_sq == 0 or len(above) == 0:
        return e.N + 1
    return int(above[0])


@dataclass(frozen=True)
class ChaosComponent:
    level: int
    indices: tuple
    coeffs: np.ndarray
    second_moment: float


def chaos_component(e: HermiteExpansion, level: int) -> ChaosComponent:
    if not 0 <= level <= e.N:
        raise ValueError(f"level {level} outside 0..{e.N}")
    mask = e.orders == level
    idx = tuple(k for k, m in zip(e.indices, mask) if m)
    c = e.coeffs[mask]
    return ChaosComponent(level, idx, c, float(np.sum(c**2 / e.factorials[mask])))


def pullback(f: Callable, L) -> Callable:
    """``x -> f(x L^T)`` i.e. ``f(L x)`` row-wise."""
    if isinstance(f, HomogeneousFunction):
        return f.pullback(L)
    L = np.asarray(L, dtype=float)
    return lambda x: f(np.asarray(x, dtype=float) @ L.T)


def generalized_rank(f: Callable, sigma, N: int, tol: float = RANK_TOL,
                     nodes: int = DEFAULT_NODES, smooth: bool = True) -> int:
    """Generalized Hermite rank of ``f`` under ``N(0, sigma)``: the Hermite rank
    of ``x -> f(sigma^{1/2} x)``."""
    from .gaussian_model import matrix_sqrt

    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    ft = pullback(f, matrix_sqrt(sigma))
    return hermite_rank(build_expansion(ft, sigma.shape[0], N, nodes=nodes, smooth=smooth), tol)


# ----------------------------------------------------------------------------
# builtin functions


def abs_function(nu: int = 1, coord: int = 0) -> HomogeneousFunction:
    """``x -> |x_coord|``."""
    a = np.zeros(nu)
    a[coord] = 1.0
    return HomogeneousFunction(nu, ((1, lambda u: np.abs(u[:, coord])),), (a,), 0.0, "abs")


def abs_centered(nu: int = 1, coord: int = 0) -> HomogeneousFunction:
    """``x -> |x_coord| - E|X|``; Hermite rank 2, Lipschitz constant 1."""
    return abs_function(nu, coord).shifted(-math.sqrt(2.0 / math.pi))


def ir_function() -> HomogeneousFunction:
    """``(x1, x2) -> |x1 + x2| / (|x1| + |x2|)`` with ``0/0 := 1``."""

    def g(u):
        return np.abs(u[:, 0] + u[:, 1]) / (np.abs(u[:, 0]) + np.abs(u[:, 1]))

    kinks = (np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    return HomogeneousFunction(2, ((0, g),), kinks, 1.0, "ir")


def abs_centered_expansion(N: int) -> HermiteExpansion:
    """Closed-form expansion of ``|x| - sqrt(2/pi)`` (``nu = 1``).

    ``J(2k) = 2 phi(0) (-1)^(k+1) (2k-3)!!`` for ``k >= 1``; odd levels vanish.
    """
    c = {}
    phi0 = 1.0 / math.sqrt(2 * math.pi)
    for k in range(1, N // 2 + 1):
        dfact = math.exp(math.lgamma(2 * k - 1) - (k - 1) * math.log(2) - math.lgamma(k)) if k > 1 else 1.0
        c[(2 * k,)] = 2 * phi0 * (-1) ** (k + 1) * dfact
    return HermiteExpansion.from_coeffs(1, N, c, norm_sq=1.0 - 2.0 / math.pi, name="abs-centered")
