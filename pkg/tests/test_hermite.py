import math

import numpy as np
import pytest

from gaussub.hermite import (HermiteExpansion, abs_centered, abs_centered_expansion,
                             build_expansion, chaos_component, generalized_rank, hermite_coefficient,
                             hermite_monomial, hermite_poly, hermite_rank, ir_function, mc_cross_check,
                             multi_indices, product_hermite)

from oracles import hermite_e_coeffs


@pytest.mark.parametrize("k,x,want", [(0, 0.7, 1.0), (2, 2.0, 3.0), (3, 1.0, -2.0)])
def test_hermite_poly_values(k, x, want):
    assert hermite_poly(k, x) == pytest.approx(want, abs=1e-14)


def test_hermite_poly_matches_numpy_basis():
    x = np.linspace(-3, 3, 13)
    for k in range(12):
        ref = np.polynomial.polynomial.polyval(x, hermite_e_coeffs(k))
        np.testing.assert_allclose(hermite_poly(k, x), ref, rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("k,x,want", [((0, 0), (5, -3), 1.0), ((1, 1), (2, 3), 6.0), ((2, 0), (2, 9), 3.0)])
def test_product_hermite(k, x, want):
    assert product_hermite(k, x) == pytest.approx(want)


def test_multi_indices_graded_lex():
    idx = multi_indices(2, 2)
    orders = [sum(k) for k in idx]
    assert orders == sorted(orders) and len(set(idx)) == len(idx) == 6
    assert len(multi_indices(3, 4)) == math.comb(3 + 4, 4)


def test_coefficient_examples():
    assert hermite_coefficient(lambda x: np.full(len(x), 2.5), (0,)) == pytest.approx(2.5)
    assert hermite_coefficient(lambda x: x[:, 0] ** 2 - 1, (2,)) == pytest.approx(2.0)
    assert hermite_coefficient(lambda x: x[:, 0] ** 3, (1,)) == pytest.approx(3.0)


def test_expansion_examples():
    e = build_expansion(lambda x: x[:, 0] ** 3 - 3 * x[:, 0], 1, 5)
    nz = dict(e.nonzero(1e-12))
    assert set(nz) == {(3,)} and nz[(3,)] == pytest.approx(6.0)
    e = build_expansion(lambda x: x[:, 0], 1, 2)
    assert dict(e.nonzero(1e-12)) == pytest.approx({(1,): 1.0})
    e = build_expansion(lambda x: x[:, 0] * x[:, 1], 2, 2)
    assert set(dict(e.nonzero(1e-12))) == {(1, 1)} and e.coefficient((1, 1)) == pytest.approx(1.0)
    assert e.residual == pytest.approx(0.0, abs=1e-10)


def test_rank_examples():
    assert hermite_rank(build_expansion(lambda x: x[:, 0], 1, 4)) == 1
    assert hermite_rank(build_expansion(lambda x: x[:, 0] ** 2 - 1, 1, 4)) == 2
    ir = build_expansion(ir_function(), 2, 6).centered()
    assert hermite_rank(ir) == 2
    masses = ir.level_masses()
    assert masses[0] < 1e-12 and masses[1] < 1e-12 and masses[2] > 1e-3


def test_chaos_components():
    h2 = hermite_monomial((2,), 4)
    assert chaos_component(h2, 2).second_moment == pytest.approx(2.0)
    assert chaos_component(h2, 3).second_moment == 0.0
    e = build_expansion(lambda x: x[:, 0] + (x[:, 0] ** 3 - 3 * x[:, 0]) / 6, 1, 4)
    assert chaos_component(e, 3).second_moment == pytest.approx(1 / 6)


def test_generalized_rank_examples():
    assert generalized_rank(lambda y: y[:, 0], np.eye(1), 3) == 1
    assert generalized_rank(lambda y: y[:, 0] * y[:, 1], np.diag([4.0, 9.0]), 3) == 2
    S = np.array([[1.0, 0.5], [0.5, 1.0]])
    assert generalized_rank(lambda y: y[:, 0] ** 2 - 1.0, S, 4) == 2


def test_abs_polar_expansion_matches_closed_form():
    e = build_expansion(abs_centered(), 1, 30)
    ref = abs_centered_expansion(30)
    np.testing.assert_allclose(e.coeffs, ref.coeffs, atol=1e-10)
    assert e.norm_sq == pytest.approx(1 - 2 / math.pi, rel=1e-12)


def test_parseval_closes_for_polynomial():
    e = build_expansion(lambda x: x[:, 0] ** 4 + x[:, 0], 1, 4)
    # E(X^4 + X)^2 = E X^8 + E X^2 = 105 + 1
    assert e.norm_sq == pytest.approx(106.0)
    assert e.residual == pytest.approx(0.0, abs=1e-9)


def test_residual_reported_for_truncated_series():
    e = build_expansion(lambda x: x[:, 0] ** 4, 1, 2)
    assert e.residual == pytest.approx(24.0, rel=1e-9)  # 4!/4! * J_4^2 with J_4 = 24


def test_mc_cross_check_flags_nothing_for_exact_expansion():
    f = lambda x: x[:, 0] ** 2 - 1  # noqa: E731
    e = build_expansion(f, 1, 3)
    res = mc_cross_check(f, e, samples=20000, seed=1)
    assert res == []


def test_json_roundtrip():
    e = build_expansion(ir_function(), 2, 4).centered()
    back = HermiteExpansion.from_json(e.to_json())
    np.testing.assert_allclose(back.coeffs, e.coeffs)
    assert back.norm_sq == pytest.approx(e.norm_sq)


def test_series_evaluation_reproduces_polynomial():
    f = lambda x: x[:, 0] ** 2 * x[:, 1] - x[:, 1]  # noqa: E731
    e = build_expansion(f, 2, 3)
    x = np.random.default_rng(0).standard_normal((20, 2))
    np.testing.assert_allclose(e(x), f(x), atol=1e-9)


def test_residual_nonnegative_on_rough_function():
    # a rule with at least N + 1 nodes is discretely orthogonal, so Bessel holds
    e = build_expansion(lambda x: np.sign(x[:, 0]) * np.exp(np.abs(x[:, 0])), 1, 12, nodes=6, smooth=False)
    assert e.residual >= -1e-12
