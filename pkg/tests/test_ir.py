import math

import numpy as np
import pytest

from gaussub.applications.ir import (PathSpec, ZeroVarianceError, ir_clt_from_values, ir_rank, ir_statistic,
                                     ir_tangent_spec, ir_target, lambda_mc, lambda_of_H, lambda_of_rho, rho2,
                                     second_difference_var, second_increments, simulate_paths)
from gaussub.clt import sigma_limit


def lambda_closed_form(r):
    # independent route: E|Z1+Z2|/(|Z1|+|Z2|) integrated in closed form
    return math.acos(-r) / math.pi + math.sqrt((1 + r) / (1 - r)) * math.log(2 / (1 + r)) / math.pi


def test_constant_path_gives_one():
    assert ir_statistic(np.full(11, 3.0)).value == 1.0


def test_alternating_second_differences_give_zero():
    path = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    assert np.all(second_increments(path).delta == [-2, 2, -2, 2, -2])
    assert ir_statistic(path).value == 0.0


def test_second_differences_of_polynomials():
    n = 10
    t = np.arange(n + 1) / n
    assert np.allclose(second_increments(2 * t + 1).delta, 0.0, atol=1e-14)
    assert np.allclose(second_increments(t**2).delta, 2 / n**2)


def test_brownian_second_difference_variance():
    n = 40
    assert np.allclose(second_difference_var(PathSpec("fbm", n, H=0.5)), 2 / n)


def test_rho2_and_lambda_examples():
    assert rho2(0.5) == pytest.approx(-0.5)
    assert lambda_of_rho(1.0) == 1.0
    for H in (0.1, 0.3, 0.5, 0.7, 0.9):
        assert 0 < lambda_of_H(H).value < 1
    assert lambda_of_H(0.5).value == pytest.approx(0.588101, abs=1e-6)


@pytest.mark.parametrize("r", [-0.9, -0.5, 0.0, 0.3, 0.8])
def test_lambda_matches_closed_form(r):
    assert lambda_of_rho(r) == pytest.approx(lambda_closed_form(r), abs=1e-9)


def test_lambda_matches_monte_carlo():
    for H in (0.2, 0.5, 0.8):
        v = lambda_of_H(H, mc_check=True, samples=2 * 10**5, seed=1)
        assert not v.flagged and abs(v.mc - v.value) <= 3 * v.mc_se


def test_lambda_mc_is_seeded():
    assert lambda_mc(-0.3, 1000, 5) == lambda_mc(-0.3, 1000, 5)


def test_brownian_increments_uncorrelated():
    X = simulate_paths(PathSpec("fbm", 64, H=0.5), 4000, 0)
    dX = np.diff(X, axis=1) * math.sqrt(64)
    prod = dX[:, 10] * dX[:, 11]
    assert abs(prod.mean()) <= 3 * prod.std() / math.sqrt(len(prod))


def test_fbm_terminal_variance():
    X = simulate_paths(PathSpec("fbm", 50, H=0.7), 4000, 2)
    assert X[:, 0].max() == 0.0
    v = X[:, -1].var()
    assert abs(v - 1.0) <= 3 * math.sqrt(2 / 4000)


def test_paths_deterministic_and_chunk_invariant():
    spec = PathSpec("fbm", 32, H=0.3)
    a = simulate_paths(spec, 6, 9)
    np.testing.assert_array_equal(a, simulate_paths(spec, 6, 9))
    np.testing.assert_allclose(a, simulate_paths(spec, 6, 9, chunk=2), atol=1e-12)
    np.testing.assert_allclose(a[3], simulate_paths(spec, 1, 12)[0], atol=1e-12)


def test_mbm_target_reduces_to_fbm():
    flat = PathSpec("mbm", 50, H_curve=lambda t: 0.6 + 0 * t)
    assert ir_target(flat) == pytest.approx(ir_target(PathSpec("fbm", 50, H=0.6)), abs=1e-12)


@pytest.mark.parametrize("H", [0.3, 0.7, 0.9])
def test_tangent_envelope_bounds_lags_and_sigma_is_finite(H):
    spec = ir_tangent_spec(H)
    j = np.arange(0, 300)
    exact = np.abs(spec.model.tangent(0.0, j)).max(axis=(-2, -1))
    assert np.all(exact <= spec.model.envelope(j) * (1 + 1e-12))
    assert 0 < sigma_limit(spec, j_cut=2000, tail_tol=1e-3).value < 1


def test_ir_rank_two():
    assert ir_rank(0.5) == 2


def test_constant_statistic_is_refused():
    with pytest.raises(ZeroVarianceError, match="zero variance"):
        ir_clt_from_values(np.full(50, 0.6), 100, 0.6, 0)


def test_invalid_specs_rejected():
    with pytest.raises(ValueError):
        PathSpec("fbm", 10, H=1.2)
    with pytest.raises(ValueError):
        PathSpec("mbm", 10)
