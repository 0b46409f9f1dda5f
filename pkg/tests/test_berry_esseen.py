import math

import numpy as np
import pytest

from gaussub.berry_esseen import (A2, A6, A7, abs_product_moment, be_bounds, bounds_from_terms,
                                  compute_ingredients, distances_from_sample, empirical_distance,
                                  interpolation_gap, random_cross_covariance)
from gaussub.clt import PhiCurve, SubordinatedSum, simulate_sums
from gaussub.gaussian_model import geometric, independent
from gaussub.hermite import abs_centered_expansion, hermite_monomial

H1, H2 = hermite_monomial((1,), 4), hermite_monomial((2,), 4)


def test_iid_theta_and_K():
    ing = compute_ingredients(independent(), H2, 32, 2)
    assert ing.theta == pytest.approx(1.0) and ing.K == 1


def test_iid_gamma():
    n = 50
    ing = compute_ingredients(independent(), H2, n, 2)
    for l, e in [(2, 1), (3, 1), (4, 2)]:
        assert ing.gamma(l, e) == pytest.approx(math.sqrt(2 / n))


def test_iid_level_variances():
    ing = compute_ingredients(independent(), H2, 20, 2)
    assert ing.sigma_l[2] == pytest.approx(2.0)
    assert np.allclose(np.delete(ing.sigma_l, 2), 0.0)


def test_A_term_examples():
    ing = compute_ingredients(independent(), H2, 20, 2)
    assert A2(ing, 2) == 0.0
    g = geometric(0.5)
    ing_g = compute_ingredients(g, H2, 20, 2)
    assert all(A6(ing_g, g, J) == 0.0 for J in (1, 5, 20))
    assert all(A7(ing, independent(), J) == 0.0 for J in (1, 3, 10))


def test_bounds_from_zero_terms():
    ing = compute_ingredients(independent(), H2, 20, 2)
    N_terms = {2: {"A2": 0.0, "A3": 0.0, "A4": 0.0, "A5": 0.0}}
    J_terms = {1: {"A6": 0.0, "A7": 0.0}}
    assert bounds_from_terms(ing, 1.3, N_terms, J_terms)[:3] == (0.0, 0.0, 0.0)


def test_kolmogorov_with_only_A7():
    ing = compute_ingredients(independent(), H2, 20, 2)
    s = 1.7
    N_terms = {2: {"A2": 0.0, "A3": 0.0, "A4": 0.0, "A5": 0.0}}
    J_terms = {1: {"A6": 0.0, "A7": 0.3}, 4: {"A6": 0.0, "A7": 0.1}, 9: {"A6": 0.0, "A7": 0.2}}
    _, lip, kol, arg = bounds_from_terms(ing, s, N_terms, J_terms)
    assert arg["J"] == 4
    assert kol == pytest.approx((2 / s) * math.sqrt((2 / s) * 0.1))
    assert lip == pytest.approx((2 / s) * 0.1)


def test_bound_dominates_mc_kolmogorov():
    g = geometric(0.5)
    e = abs_centered_expansion(40)
    ev = lambda v, taus: np.abs(v[..., 0]) - math.sqrt(2 / math.pi)  # noqa: E731
    spec = SubordinatedSum(g, PhiCurve.constant(e), 2, ev)
    from gaussub.clt import sigma_limit

    s = math.sqrt(sigma_limit(spec).value)
    rep = be_bounds(g, e, 512, 2, s)
    d, se = empirical_distance(spec, 512, 2000, 0, s)
    assert rep.kolmogorov >= d - 3 * se


def test_distance_linear_gaussian_is_noise():
    spec = SubordinatedSum(independent(), PhiCurve.constant(H1), 1)
    S = simulate_sums(spec, 32, 4000, 1)
    d = distances_from_sample(S, 1.0)
    for mode in ("smooth", "lipschitz"):
        v, se = d[mode]
        assert v <= 3 * se
    assert d["kolmogorov"][0] <= 1.63 / math.sqrt(4000)
    assert distances_from_sample(simulate_sums(spec, 32, 4000, 1), 1.0) == d


def test_abs_product_moment_limits():
    assert abs_product_moment(0.0) == pytest.approx(2 / math.pi)
    assert abs_product_moment(1.0) == pytest.approx(1.0)


def test_interpolation_gap_scalar_matches_closed_form():
    r1, r0 = 0.6, -0.2
    gap, se = interpolation_gap(lambda x: np.abs(x[:, 0]), [[r1]], [[r0]], samples=10**5, seed=4)
    exact = float(abs_product_moment(r1) - abs_product_moment(r0))
    assert abs(gap - exact) <= 3 * se
    assert abs(exact) <= abs(r1 - r0)


def test_random_cross_covariance_norm():
    rng = np.random.default_rng(0)
    for _ in range(10):
        S = random_cross_covariance(rng, 2)
        assert np.linalg.norm(S, 2) < 0.95 + 1e-12
