"""
Diagram formula for moments and cumulants of products of Hermite polynomials
of jointly Gaussian vectors.

A table has ``p`` rows; row ``u`` carries a multi-index ``k_u`` and
``|k_u|`` points, the points of row ``u`` being labelled by coordinates in
graded order.  A diagram pairs all points with no pair inside a row, and

    E[H_{k_1}(X_{t_1}) ... H_{k_p}(X_{t_p})] = sum_diagrams prod_edges C(u, v, a, b).

Explicit enumeration is exponential, so moments are computed over edge-count
*signatures*: for classes ``c = (row, coordinate)``, the matrix ``l_cd`` of
edges between classes.  Each signature stands for
``prod_c k_c! / prod_{c<d} l_cd!`` diagrams with the same weight.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

ENUMERATION_CAP = 16
MOMENT_CAP = 40
SIGNATURE_CAP = 500_000


class TableTooLargeError(ValueError):
    """Requested table exceeds the configured size limit."""


def _as_rows(ks) -> tuple:
    rows = []
    for k in ks:
        rows.append((int(k),) if isinstance(k, (int, np.integer)) else tuple(int(x) for x in k))
    if rows and len({len(r) for r in rows}) != 1:
        raise ValueError("all rows must have the same dimension nu")
    if any(x < 0 for r in rows for x in r):
        raise ValueError("multi-index entries must be nonnegative")
    return tuple(rows)


# ----------------------------------------------------------------------------
# tables and explicit diagrams


@dataclass(frozen=True)
class DiagramTable:
    """Rows ``k_1, ..., k_p``; point ``i`` of row ``u`` has a coordinate label."""

    rows: tuple

    @classmethod
    def of(cls, ks) -> "DiagramTable":
        return cls(_as_rows(ks))

    @property
    def p(self) -> int:
        return len(self.rows)

    @property
    def nu(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    @property
    def row_lengths(self) -> tuple:
        return tuple(sum(r) for r in self.rows)

    @property
    def size(self) -> int:
        return sum(self.row_lengths)

    def points(self) -> list:
        """``[(row, coordinate)]`` in point order (0-based)."""
        out = []
        for u, k in enumerate(self.rows):
            for a, ka in enumerate(k):
                out.extend([(u, a)] * ka)
        return out


@dataclass(frozen=True)
class Diagram:
    table: DiagramTable
    edges: tuple  # ((i, j), ...) point indices with i < j

    @property
    def ell(self) -> np.ndarray:
        """Symmetric ``p x p`` matrix of edge counts between rows."""
        pts = self.table.points()
        L = np.zeros((self.table.p, self.table.p), dtype=int)
        for i, j in self.edges:
            u, v = pts[i][0], pts[j][0]
            L[u, v] += 1
            L[v, u] += 1
        return L

    def weight(self, C) -> float:
        pts = self.table.points()
        w = 1.0
        for i, j in self.edges:
            (u, a), (v, b) = pts[i], pts[j]
            w *= C[u, v, a, b]
        return w

    def __str__(self) -> str:
        pts = self.table.points()
        return " ".join(f"({pts[i][0]}.{i})-({pts[j][0]}.{j})" for i, j in self.edges)


def enumerate_diagrams(table, cap: int = ENUMERATION_CAP) -> Iterator[Diagram]:
    """All diagrams over ``table``, each once, in lexicographic edge order.

    The first unpaired point is matched with every later unpaired point of a
    different row.  Odd tables yield nothing.
    """
    if not isinstance(table, DiagramTable):
        table = DiagramTable.of(table)
    size = table.size
    if size > cap:
        raise TableTooLargeError(f"table has {size} points, enumeration cap is {cap}")
    if size % 2:
        return
    row = [u for u, _ in table.points()]
    used = [False] * size
    edges: list = []

    def rec():
        try:
            i = used.index(False)
        except ValueError:
            yield Diagram(table, tuple(edges))
            return
        used[i] = True
        for j in range(i + 1, size):
            if not used[j] and row[j] != row[i]:
                used[j] = True
                edges.append((i, j))
                yield from rec()
                edges.pop()
                used[j] = False
        used[i] = False

    yield from rec()


def _connected(adj: np.ndarray) -> bool:
    p = adj.shape[0]
    if p <= 1:
        return True
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in np.nonzero(adj[u])[0]:
            v = int(v)
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == p


def is_connected(diagram: Diagram) -> bool:
    """Whether the row graph (edge between rows ``u, v`` iff ``l_uv > 0``) is connected."""
    return _connected(diagram.ell > 0)


def taqqu_diagram_bound(ks, nu: int | None = None, p: int | None = None) -> float:
    """``(p nu - 1)^{|T|/2} (|k_1|! ... |k_p|!)^{1/2}``."""
    rows = _as_rows(ks)
    nu = len(rows[0]) if nu is None else nu
    p = len(rows) if p is None else p
    lens = [sum(r) for r in rows]
    return float((p * nu - 1) ** (sum(lens) / 2) * math.sqrt(math.prod(math.factorial(x) for x in lens)))


# ----------------------------------------------------------------------------
# counting


@lru_cache(maxsize=None)
def _count_caps(caps: tuple) -> int:
    # perfect matchings of points grouped in rows of sizes caps, no row-internal pair
    caps = tuple(sorted((c for c in caps if c), reverse=True))
    if not caps:
        return 1
    if sum(caps) % 2 or 2 * caps[0] > sum(caps):
        return 0
    r0, rest = caps[0], caps[1:]
    total = 0
    # distribute the r0 points of the first row over the other rows
    for x in _bounded_compositions(r0, rest):
        ways = math.factorial(r0)
        for rv, xv in zip(rest, x):
            ways *= math.comb(rv, xv)
        total += ways * _count_caps(tuple(rv - xv for rv, xv in zip(rest, x)))
    return total


def _bounded_compositions(total: int, caps: Sequence[int]):
    if not caps:
        if total == 0:
            yield ()
        return
    head, tail = caps[0], caps[1:]
    room = sum(tail)
    for x in range(min(head, total), max(0, total - room) - 1, -1):
        for rest in _bounded_compositions(total - x, tail):
            yield (x,) + rest


def count_diagrams(table) -> int:
    """``|Gamma(T)|`` by a capacity recursion (no enumeration)."""
    if not isinstance(table, DiagramTable):
        table = DiagramTable.of(table)
    return _count_caps(table.row_lengths)


@lru_cache(maxsize=None)
def _count_connected_ms(lens: tuple) -> int:
    # lens sorted; connected matchings = total - those whose component of row 0 is a proper subset
    if len(lens) <= 1:
        return 0 if (len(lens) == 1 and lens[0] > 0) else 1
    total = _count_caps(lens)
    first, rest = lens[0], lens[1:]
    vals = sorted(set(rest))
    mult = [rest.count(v) for v in vals]
    sub = 0
    for pick in itertools.product(*[range(m + 1) for m in mult]):
        chosen = [v for v, c in zip(vals, pick) for _ in range(c)]
        if len(chosen) == len(rest):
            continue
        ways = math.prod(math.comb(m, c) for m, c in zip(mult, pick))
        B = tuple(sorted((first,) + tuple(chosen)))
        other = tuple(sorted(v for v, m, c in zip(vals, mult, pick) for _ in range(m - c)))
        sub += ways * _count_connected_ms(B) * _count_caps(other)
    return total - sub


def count_connected(table) -> int:
    """``|Gamma_c(T)|``."""
    if not isinstance(table, DiagramTable):
        table = DiagramTable.of(table)
    lens = table.row_lengths
    if any(x == 0 for x in lens):
        return 0 if len(lens) > 1 else 1
    return _count_connected_ms(tuple(sorted(lens)))


# ----------------------------------------------------------------------------
# signatures


@dataclass(frozen=True)
class Signatures:
    """All edge-count signatures of a table.

    ``pairs[q] = (u, v, a, b)`` lists class pairs in different rows;
    ``E[s, q]`` is the number of edges between them in signature ``s`` and
    ``mult[s]`` the number of diagrams sharing it.
    """

    rows: tuple
    pairs: np.ndarray  # (P, 4)
    E: np.ndarray  # (S, P)
    mult: np.ndarray  # (S,) float
    mult_int: tuple
    connected: np.ndarray  # (S,) bool

    @property
    def count(self) -> int:
        return sum(self.mult_int)

    @property
    def count_connected(self) -> int:
        return sum(m for m, c in zip(self.mult_int, self.connected) if c)


@lru_cache(maxsize=4096)
def signatures(ks) -> Signatures:
    rows = _as_rows(ks)
    p = len(rows)
    size = sum(sum(r) for r in rows)
    if size > MOMENT_CAP:
        raise TableTooLargeError(f"table has {size} points, moment cap is {MOMENT_CAP}")
    classes = [(u, a, rows[u][a]) for u in range(p) for a in range(len(rows[u])) if rows[u][a] > 0]
    pairs = [(i, j) for i in range(len(classes)) for j in range(i + 1, len(classes))
             if classes[i][0] != classes[j][0]]
    pair_arr = np.array([[classes[i][0], classes[j][0], classes[i][1], classes[j][1]] for i, j in pairs],
                        dtype=int).reshape(-1, 4)
    sigs: list = []
    if size % 2 == 0:
        partners = {i: [q for q, (a, b) in enumerate(pairs) if a == i] for i in range(len(classes))}
        cap = [c[2] for c in classes]
        cur = [0] * len(pairs)

        def rec(i):
            if len(sigs) > SIGNATURE_CAP:
                raise TableTooLargeError("too many signatures for this table")
            if i == len(classes):
                sigs.append(tuple(cur))
                return
            need = cap[i]
            qs = partners[i]
            targets = [pairs[q][1] for q in qs]
            for x in _bounded_compositions(need, [cap[t] for t in targets]):
                for q, t, xv in zip(qs, targets, x):
                    cur[q] = xv
                    cap[t] -= xv
                rec(i + 1)
                for q, t, xv in zip(qs, targets, x):
                    cap[t] += xv
                    cur[q] = 0

        rec(0)
    E = np.array(sigs, dtype=int).reshape(len(sigs), len(pairs))
    kfact = math.prod(math.factorial(c[2]) for c in classes)
    mult_int = tuple(kfact // math.prod(math.factorial(x) for x in s) for s in sigs)
    conn = []
    for s in sigs:
        adj = np.zeros((p, p), dtype=bool)
        for q, x in enumerate(s):
            if x:
                u, v = pair_arr[q, 0], pair_arr[q, 1]
                adj[u, v] = adj[v, u] = True
        # rows with no points cannot connect to anything
        conn.append(_connected(adj))
    return Signatures(rows, pair_arr, E, np.array(mult_int, dtype=float), mult_int,
                      np.array(conn, dtype=bool))


def _cov_values(C, pairs, p, nu):
    C = np.asarray(C, dtype=float)
    if C.shape[-4:] != (p, p, nu, nu):
        raise ValueError(f"cross-covariance array must end in shape {(p, p, nu, nu)}, got {C.shape}")
    return C[..., pairs[:, 0], pairs[:, 1], pairs[:, 2], pairs[:, 3]]


def _evaluate(sig: Signatures, C, connected_only: bool):
    rows = sig.rows
    p, nu = len(rows), len(rows[0])
    C = np.asarray(C, dtype=float)
    batch = C.shape[:-4]
    if sig.E.shape[0] == 0:
        return np.zeros(batch) if batch else 0.0
    mult = sig.mult * sig.connected if connected_only else sig.mult
    if sig.E.shape[1] == 0:
        val = np.full(batch, float(mult.sum()))
        return val if batch else float(val)
    cv = _cov_values(C, sig.pairs, p, nu).reshape(-1, sig.E.shape[1])  # (B, P)
    out = np.empty(cv.shape[0])
    step = max(1, 2_000_000 // max(1, sig.E.size))
    for b0 in range(0, cv.shape[0], step):
        terms = np.prod(cv[b0:b0 + step, None, :] ** sig.E[None], axis=-1)
        out[b0:b0 + step] = terms @ mult
    out = out.reshape(batch)
    return out if batch else float(out)


def hermite_moment(ks, C):
    """``E[H_{k_1}(X_{t_1}) ... H_{k_p}(X_{t_p})]`` by the diagram formula.

    Parameters
    ----------
    ks : sequence of multi-indices (or ints when ``nu = 1``)
    C : array ``(..., p, p, nu, nu)``
        ``C[u, v, a, b] = E X_{t_u}^(a) X_{t_v}^(b)``; only ``u != v`` entries
        are used.  Leading axes are a batch.
    """
    return _evaluate(signatures(_as_rows(ks)), C, connected_only=False)


def hermite_cumulant(ks, C):
    """Joint cumulant of ``H_{k_1}(X_{t_1}), ..., H_{k_p}(X_{t_p})``: the
    diagram sum restricted to connected diagrams."""
    return _evaluate(signatures(_as_rows(ks)), C, connected_only=True)


def cross_blocks(R, nu: int) -> np.ndarray:
    """Reshape a ``(p nu, p nu)`` covariance (time-major) to ``(p, p, nu, nu)``."""
    R = np.asarray(R, dtype=float)
    p = R.shape[-1] // nu
    return R.reshape(R.shape[:-2] + (p, nu, p, nu)).swapaxes(-3, -2)


# ----------------------------------------------------------------------------
# two-row kernel


@dataclass(frozen=True)
class PairKernel:
    """``E[f(X) g(X')] = sum_l JF[a_l] JG[b_l] / prod(l!) prod C^l`` over all
    ``nu x nu`` edge-count matrices ``l`` with row sums ``a_l`` and column sums
    ``b_l`` of order ``<= N``."""

    nu: int
    N: int
    a_idx: np.ndarray
    b_idx: np.ndarray
    inv_fact: np.ndarray
    E: np.ndarray  # (S, nu*nu)
    level: np.ndarray

    def __call__(self, JF, JG, C, levels=None):
        C = np.asarray(C, dtype=float)
        batch = C.shape[:-2]
        cv = C.reshape(-1, self.nu * self.nu)
        w = np.asarray(JF)[self.a_idx] * np.asarray(JG)[self.b_idx] * self.inv_fact
        if levels is not None:
            w = w * np.isin(self.level, list(levels))
        keep = w != 0
        if not np.any(keep):
            return np.zeros(batch) if batch else 0.0
        E = self.E[keep]
        out = np.prod(cv[:, None, :] ** E[None], axis=-1) @ w[keep]
        out = out.reshape(batch)
        return out if batch else float(out)

    def level_values(self, JF, JG, C) -> np.ndarray:
        """Contribution of each chaos level ``0..N``; shape ``(..., N+1)``."""
        C = np.asarray(C, dtype=float)
        batch = C.shape[:-2]
        cv = C.reshape(-1, self.nu * self.nu)
        w = np.asarray(JF)[self.a_idx] * np.asarray(JG)[self.b_idx] * self.inv_fact
        terms = np.prod(cv[:, None, :] ** self.E[None], axis=-1) * w
        out = np.zeros((cv.shape[0], self.N + 1))
        for lv in range(self.N + 1):
            out[:, lv] = terms[:, self.level == lv].sum(axis=1)
        return out.reshape(batch + (self.N + 1,))


@lru_cache(maxsize=64)
def pair_kernel(nu: int, N: int) -> PairKernel:
    from .hermite import _index_of

    index = _index_of(nu, N)
    a_idx, b_idx, inv, Es, lev = [], [], [], [], []
    for total in range(N + 1):
        for flat in _compositions_fixed(total, nu * nu):
            L = np.array(flat).reshape(nu, nu)
            a = tuple(int(x) for x in L.sum(axis=1))
            b = tuple(int(x) for x in L.sum(axis=0))
            a_idx.append(index[a])
            b_idx.append(index[b])
            inv.append(1.0 / math.prod(math.factorial(x) for x in flat))
            Es.append(flat)
            lev.append(total)
    return PairKernel(nu, N, np.array(a_idx), np.array(b_idx), np.array(inv),
                      np.array(Es, dtype=int).reshape(-1, nu * nu), np.array(lev))


def _compositions_fixed(total, parts):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions_fixed(total - first, parts - 1):
            yield (first,) + rest


# ----------------------------------------------------------------------------
# helpers


def set_partitions(items):
    """All set partitions of ``items`` (list of blocks, deterministic order)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]


def row_fractions(ell: np.ndarray, lens: Sequence[int]):
    """``L(U)``, ``L*(U)`` as exact fractions for every nonempty row subset ``U``."""
    if any(int(k) <= 0 for k in lens):
        raise ValueError("row fractions need every row length to be positive")
    p = len(lens)
    out = {}
    for r in range(1, p + 1):
        for U in itertools.combinations(range(p), r):
            L = sum((Fraction(int(ell[u, v]), lens[u]) for u in U for v in range(u + 1, p)), Fraction(0))
            Ls = sum((Fraction(int(ell[u, v]), lens[u]) for u in U for v in range(u)), Fraction(0))
            out[U] = (L, Ls)
    return out
