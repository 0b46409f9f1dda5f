import math

import numpy as np
import pytest

from gaussub.gaussian_model import geometric, independent, polynomial, sample_replicates
from gaussub.hermite import build_expansion, hermite_monomial
from gaussub.moment_bounds import (BoundInstance, bound_rhs, fourth_moment_bound, holder_quantities, offdiag_sum,
                                   ratio_scan, rhs_value, trend_verdict)
from gaussub.wick import DiagramTable, enumerate_diagrams

H1, H2 = hermite_monomial((1,), 2), hermite_monomial((2,), 2)


def test_offdiag_independent_is_zero():
    inst = BoundInstance(independent(), 6, 3, 3, 1, [H1, H2, H2])
    assert offdiag_sum(inst) == 0.0


def test_offdiag_pairwise_h2():
    a, n = 0.5, 4
    inst = BoundInstance(geometric(a), n, 2, 2, 2, [H2, H2])
    want = sum(2 * a ** (2 * abs(t - s)) for t in range(n) for s in range(n) if t != s)
    assert offdiag_sum(inst) == pytest.approx(want, rel=1e-13)


def test_offdiag_mixed_orders_vanish():
    inst = BoundInstance(geometric(0.5), 6, 2, 1, 1, [H1, H2])
    assert offdiag_sum(inst) == pytest.approx(0.0, abs=1e-14)


def test_rhs_examples():
    assert rhs_value(3.0, 7, 3, 2, 0.0) == 0.0
    assert rhs_value(1.0, 4, 2, 2, 0.578125) == pytest.approx(2.3125)
    assert rhs_value(2.0, 5, 3, 0, 0.9) == pytest.approx(2.0 * 5**3)
    inst = BoundInstance(geometric(0.5), 4, 2, 2, 2, [H2, H2])
    assert bound_rhs(inst, 0.578125) == pytest.approx(inst.K() * 2.3125)


def test_ratio_scan_independent():
    rep = ratio_scan(BoundInstance(independent(), 4, 2, 2, 1, [H1, H1]), range(4, 10))
    assert rep.bounded and all(r == 0 for r in rep.ratio)


def test_h2_ratio_stays_below_its_limit():
    # lhs / (K n Q) -> 4a^2/(1-a^2) / (2 * 2a^2/(1-a^2)) = 1 from below
    inst = BoundInstance(geometric(0.5), 4, 2, 2, 2, [H2, H2])
    rep = ratio_scan(inst, [4, 8, 16, 64, 200])
    assert all(r <= 1 for r in rep.ratio)
    assert np.all(np.diff(rep.ratio) > 0)
    assert rep.ratio[-1] == pytest.approx(1.0, abs=0.01)


def test_misdeclared_rank_is_flagged():
    inst = BoundInstance(polynomial(0.6), 4, 2, 2, 2, [H1, H1])
    assert inst.misdeclared == [0, 1]
    rep = ratio_scan(inst, range(4, 15))
    assert rep.verdict == "growth"


def test_trend_verdict():
    assert trend_verdict([1, 1, 1, 1])[2] == "bounded"
    assert trend_verdict([1, 1.2, 1.5, 2.0])[2] == "growth"
    assert trend_verdict([0, 0, 0])[2] == "bounded"


def test_holder_identity_and_inequality():
    model = geometric(0.6)
    T = DiagramTable.of([2, 2, 2])
    for d in list(enumerate_diagrams(T))[:6]:
        hq = holder_quantities(d.ell, [2, 2, 2], model, 7)
        assert hq.identity_holds
        assert hq.I_exact <= hq.holder_min * (1 + 1e-12)


def test_holder_independent_R_zero():
    T = DiagramTable.of([2, 2])
    (d, *_) = list(enumerate_diagrams(T))
    hq = holder_quantities(d.ell, [2, 2], independent(), 5)
    assert hq.R[0, 1] == 0.0 and hq.R[1, 0] == 0.0


def test_fourth_moment_iid_h2():
    n = 5
    rep = fourth_moment_bound(independent(), H2, n, 2)
    assert rep.M_n == pytest.approx(60 * n + 12 * n * (n - 1))


def test_fourth_moment_odd_rank_one_all_distinct_vanishes():
    rep = fourth_moment_bound(independent(), build_expansion(lambda x: x[:, 0] ** 3, 1, 3), 5, 1)
    assert rep.by_pattern["all distinct"] == pytest.approx(0.0, abs=1e-12)


def test_fourth_moment_geometric_monte_carlo():
    n, reps = 8, 10**6
    rep = fourth_moment_bound(geometric(0.5), H2, n, 2)
    X = sample_replicates(geometric(0.5), n, reps, seed=11)[:, :, 0]
    S4 = (X**2 - 1).sum(axis=1) ** 4
    se = S4.std(ddof=1) / math.sqrt(reps)
    assert abs(S4.mean() - rep.M_n) <= 3 * se
