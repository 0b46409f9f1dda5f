import math

import numpy as np
import pytest

from gaussub.applications.locstat import (ConditionError, LocStatSpec, TailEnergyError, check_memory_condition,
                                          default_locstat, locstat_clt_experiment, locstat_covariances,
                                          quadratic_family, simulate_locstat)

J = 64


def _delta(j):
    return (np.asarray(j) == 0).astype(float)


def _spec(c, b, alpha=0.05, K=2.0, nu=2):
    return LocStatSpec([(c, b)], alpha, K, J_max=J, nu=nu)


def test_delta_coefficients_give_iid():
    X = simulate_locstat(_spec(lambda t: 1 + 0 * t, _delta), 16, 5000, 0)
    assert abs(X.var() - 1.0) < 0.02
    prod = X[:, 5] * X[:, 6]
    assert abs(prod.mean()) <= 3 * prod.std() / math.sqrt(len(prod))


def test_time_varying_amplitude_variance():
    n, reps = 40, 8000
    X = simulate_locstat(_spec(lambda t: 1 + t, _delta), n, reps, 1)
    for tau in (0.25, 0.5, 0.75):
        t = int(tau * n)
        v = X[:, t - 1].var()  # column t - 1 holds X_{t,n}
        want = (1 + t / n) ** 2
        assert abs(v - want) <= 3 * want * math.sqrt(2 / reps)


def test_simulation_deterministic():
    s = default_locstat(J_max=J)
    a = simulate_locstat(s, 20, 5, 3, tail_tol=1.0)
    np.testing.assert_array_equal(a, simulate_locstat(s, 20, 5, 3, tail_tol=1.0))
    np.testing.assert_allclose(a[2], simulate_locstat(s, 20, 1, 5, tail_tol=1.0)[0], atol=1e-12)


def test_tail_energy_refusal():
    with pytest.raises(TailEnergyError):
        simulate_locstat(default_locstat(J_max=16), 10, 2, 0)


def test_stationary_gap_is_zero():
    cv = locstat_covariances(_spec(lambda t: 1 + 0 * t, lambda j: 0.5 ** np.asarray(j, dtype=float)))
    assert cv.gap(64) == pytest.approx(0.0, abs=1e-14)


def test_gap_decreases_with_n():
    cv = locstat_covariances(default_locstat(J_max=2**10))
    assert cv.gap(256) < cv.gap(64)


def test_delta_spectral_density_is_flat():
    cv = locstat_covariances(_spec(lambda t: 1 + 0 * t, _delta))
    _, g = cv.spectral_density(0.3)
    assert np.allclose(g, 1 / (2 * math.pi))


def test_spectral_quadratic_form_identity():
    cv = locstat_covariances(default_locstat(J_max=2**10))
    x = np.random.default_rng(0).standard_normal(5)
    for tau in (0.0, 0.6):
        h = np.arange(5)
        G = cv.tangent_lag(tau, h[None, :] - h[:, None])
        assert cv.quadratic_form_spectral(tau, x) == pytest.approx(x @ G @ x, rel=1e-6)


def test_stationary_reduction_h2():
    # a(j) = sqrt(3/4) 2^{-j} is an AR(1) with unit variance and lag correlation 2^{-h}
    spec = _spec(lambda t: 1 + 0 * t, lambda j: math.sqrt(0.75) * 0.5 ** np.asarray(j, dtype=float),
                 K=1.0, nu=1)
    ex = locstat_clt_experiment(spec, quadratic_family([[1.0]]), 2, 64, 200, 0)
    assert ex.sigma2 == pytest.approx(10 / 3, abs=1e-9)
    assert ex.gap == pytest.approx(0.0, abs=1e-12)
    assert ex.ranks == [2] * len(ex.ranks)


def test_memory_condition_refusal():
    with pytest.raises(ConditionError, match=r"m > 1/\(1 - 2 alpha\)"):
        check_memory_condition(1, 0.4)
    with pytest.raises(ConditionError):
        locstat_clt_experiment(default_locstat(alpha=0.4, J_max=J), quadratic_family(np.eye(2)), 1, 16, 4, 0)
    check_memory_condition(2, 0.2)


def test_envelope_holds_for_default():
    assert default_locstat(J_max=2**10).envelope_violation() <= 1.0
