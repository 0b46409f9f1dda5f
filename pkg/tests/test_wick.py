from fractions import Fraction

import numpy as np
import pytest

from gaussub.wick import (Diagram, DiagramTable, count_connected, count_diagrams, enumerate_diagrams,
                          hermite_cumulant, hermite_moment, is_connected, pair_kernel, row_fractions,
                          signatures, taqqu_diagram_bound)

from oracles import blocks, count_by_moments, isserlis_hermite_moment, moebius_cumulant, random_row_frames


def _C(p, rho):
    C = np.zeros((p, p, 1, 1))
    for (u, v), r in rho.items():
        C[u, v, 0, 0] = C[v, u, 0, 0] = r
    return C


@pytest.mark.parametrize("ks,want", [([1, 1], 1), ([2, 2], 2), ([2, 2, 2], 8), ([2, 2, 2, 2], 60)])
def test_count_examples(ks, want):
    T = DiagramTable.of(ks)
    assert count_diagrams(T) == want == sum(1 for _ in enumerate_diagrams(T))


def test_connectivity_examples():
    (d,) = list(enumerate_diagrams(DiagramTable.of([1, 1])))
    assert is_connected(d)
    T = DiagramTable.of([2, 2, 2, 2])
    split = [d for d in enumerate_diagrams(T) if not is_connected(d)]
    assert split and all((d.ell[0, 1] == 2 and d.ell[2, 3] == 2) or (d.ell[0, 2] == 2 and d.ell[1, 3] == 2)
                         or (d.ell[0, 3] == 2 and d.ell[1, 2] == 2) for d in split)
    T = DiagramTable.of([1, 2, 1])
    assert all(is_connected(d) for d in enumerate_diagrams(T))
    assert count_connected(DiagramTable.of([2, 2])) == 2


@pytest.mark.parametrize("ks,nu,want", [([1, 1], 1, 1), ([2, 2], 1, 2), ([(1, 1), (1, 1)], 2, 18)])
def test_taqqu_examples(ks, nu, want):
    assert taqqu_diagram_bound(ks, nu) == pytest.approx(want)


def test_moment_examples():
    r = 0.37
    assert hermite_moment([1, 1], _C(2, {(0, 1): r})) == pytest.approx(r)
    assert hermite_moment([2, 2], _C(2, {(0, 1): r})) == pytest.approx(2 * r * r)
    C = _C(3, {(0, 1): 0.2, (0, 2): 0.3, (1, 2): -0.4})
    assert hermite_moment([1, 1, 2], C) == pytest.approx(2 * 0.3 * -0.4)
    assert hermite_cumulant([2, 2, 2], C) == pytest.approx(8 * 0.2 * 0.3 * -0.4)


def test_cumulant_equals_moment_for_two_rows():
    C = _C(2, {(0, 1): 0.45})
    for a, b in [(1, 1), (2, 2), (3, 3), (3, 1)]:
        assert hermite_cumulant([a, b], C) == pytest.approx(hermite_moment([a, b], C))


def test_cumulant_block_independent_is_zero():
    C = _C(4, {(0, 1): 0.5, (2, 3): 0.6})
    assert hermite_cumulant([2, 2, 2, 2], C) == pytest.approx(0.0, abs=1e-15)


def test_moment_batch_axes():
    rng = np.random.default_rng(0)
    Cs = np.stack([blocks(random_row_frames(rng, 3, 1), 1) for _ in range(4)])
    vals = hermite_moment([2, 1, 1], Cs)
    assert vals.shape == (4,)
    for i in range(4):
        assert vals[i] == pytest.approx(hermite_moment([2, 1, 1], Cs[i]))


def test_moment_vs_isserlis_multivariate():
    rng = np.random.default_rng(1)
    for ks in [[(1, 1), (1, 1)], [(2, 0), (1, 1), (0, 2)], [(1, 2), (2, 1)], [(1, 0), (1, 1), (0, 1), (1, 0)]]:
        Cf = random_row_frames(rng, len(ks), 2)
        got = hermite_moment(ks, blocks(Cf, 2))
        assert got == pytest.approx(isserlis_hermite_moment(ks, Cf), abs=1e-10)


def test_cumulant_vs_moebius():
    rng = np.random.default_rng(2)
    for ks in [[2, 2, 2], [1, 2, 3], [2, 2, 2, 2], [1, 1, 2, 2]]:
        Cf = random_row_frames(rng, len(ks), 1)
        got = hermite_cumulant(ks, blocks(Cf, 1))
        assert got == pytest.approx(moebius_cumulant(ks, Cf, 1), abs=1e-10)


def test_counts_match_moments_and_enumeration():
    for ks in [[3, 3, 2, 2], [1, 2, 3], [4, 4], [2, 2, 2, 2, 2]]:
        T = DiagramTable.of(ks)
        n_enum = sum(1 for _ in enumerate_diagrams(T))
        n_conn = sum(1 for d in enumerate_diagrams(T) if is_connected(d))
        assert count_diagrams(T) == n_enum == count_by_moments(ks)
        assert count_connected(T) == n_conn
    assert count_diagrams(DiagramTable.of([3, 3, 2, 2])) == 372


def test_signature_multiplicities_sum_to_count():
    sig = signatures(((2,), (1,), (3,), (2,)))
    assert int(sum(sig.mult_int)) == count_diagrams(DiagramTable.of([2, 1, 3, 2]))


def test_pair_kernel_examples():
    from gaussub.hermite import hermite_monomial

    k1 = pair_kernel(1, 3)
    for k, want in [((1,), 0.3), ((2,), 2 * 0.09)]:
        e = hermite_monomial(k, 3)
        assert k1(e.coeffs, e.coeffs, np.array([[0.3]])) == pytest.approx(want)
    e = hermite_monomial((2,), 3)
    assert k1(e.coeffs, e.coeffs, np.zeros((1, 1))) == 0.0


def test_row_fraction_example():
    ell = np.array([[0, 2], [2, 0]])
    fr = row_fractions(ell, [2, 2])
    assert fr[(0, 1)] == (Fraction(1), Fraction(1))
    assert all(L + Ls == len(U) for U, (L, Ls) in fr.items())


def test_diagram_weight_and_str():
    T = DiagramTable.of([1, 1])
    (d,) = list(enumerate_diagrams(T))
    assert isinstance(d, Diagram)
    assert d.weight(_C(2, {(0, 1): 0.7})) == pytest.approx(0.7)
    assert str(d)
