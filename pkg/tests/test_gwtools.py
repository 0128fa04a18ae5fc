import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lfpp.gwtools import (DriftedProcessSpec, GwError, TruncationError, dufresne_survival,
                          exp_integral_tail, exp_integral_truncation, gaussian_increment_check,
                          reflection_survival, sup_tail, sup_truncation_bound, wilson_interval)


@pytest.mark.parametrize("hits,n", [(0, 100), (7, 100), (50, 100), (999, 1000), (12345, 100000)])
def test_wilson_matches_scipy(hits, n):
    ref = stats.binomtest(hits, n).proportion_ci(method="wilson")
    lo, hi = wilson_interval(hits, n)
    assert lo == pytest.approx(ref.low, abs=1e-12)
    assert hi == pytest.approx(ref.high, abs=1e-12)


def test_spec_validation():
    with pytest.raises(GwError):
        DriftedProcessSpec(-1.0, 10.0, 0.01)
    with pytest.raises(GwError, match="horizon/100"):
        DriftedProcessSpec(1.0, 1.0, 0.05)
    with pytest.raises(GwError):
        DriftedProcessSpec(1.0, 10.0, 0.01, covariance_kind="custom")
    with pytest.raises(GwError):
        DriftedProcessSpec(1.0, 10.0, 0.01, covariance_kind="fractional")


def test_sup_tail_matches_reflection_law():
    spec = DriftedProcessSpec(1.0, 12.0, 0.01)
    y = [0.25, 0.5, 1.0, 1.5]
    rep = sup_tail(spec, y, 20_000, seed=1)
    exact = reflection_survival(1.0, y)
    for p, lo, hi, e in zip(rep.survival, rep.ci_low, rep.ci_high, exact):
        # 99.9% band around the exact value
        sd = math.sqrt(e * (1 - e) / rep.n_samples)
        assert abs(p - e) < 3.3 * sd + 1e-4
    assert rep.slope == pytest.approx(-2.0, abs=0.15)
    assert rep.truncation_bound < 1e-3


def test_sup_tail_zero_level_and_determinism():
    spec = DriftedProcessSpec(1.0, 5.0, 0.01)
    a = sup_tail(spec, [0.0], 10_000, seed=3)
    assert a.survival[0] >= 0.5
    b = sup_tail(spec, [0.0], 10_000, seed=3)
    assert a.hits == b.hits and a.survival == b.survival


def test_bridge_removes_grid_bias():
    spec = DriftedProcessSpec(1.0, 8.0, 0.05)
    y = [0.5, 1.0]
    exact = reflection_survival(1.0, y)
    with_b = sup_tail(spec, y, 20_000, seed=2).survival
    without = sup_tail(spec, y, 20_000, seed=2, bridge=False).survival
    assert np.all(np.asarray(without) < exact - 0.02)
    assert np.allclose(with_b, exact, atol=0.015)


def test_large_drift_and_dropped_thresholds():
    spec = DriftedProcessSpec(20.0, 2.0, 0.001)
    rep = sup_tail(spec, [1.0], 10_000, seed=4)
    assert rep.survival[0] < 1e-3
    assert rep.used == [False] and rep.flags
    assert math.isnan(rep.slope)


def test_sup_tail_preconditions():
    spec = DriftedProcessSpec(1.0, 5.0, 0.01)
    with pytest.raises(GwError):
        sup_tail(spec, [1.0, 0.5], 10_000, seed=0)
    with pytest.raises(GwError):
        sup_tail(spec, [1.0], 100, seed=0)
    custom = DriftedProcessSpec(1.0, 5.0, 0.01, "custom", lambda t0, t1: t1 - t0)
    with pytest.raises(GwError):
        sup_tail(custom, [1.0], 10_000, seed=0)


def test_custom_brownian_matches_builtin_without_bridge():
    base = DriftedProcessSpec(1.0, 5.0, 0.01)
    custom = DriftedProcessSpec(1.0, 5.0, 0.01, "custom", lambda t0, t1: t1 - t0)
    a = sup_tail(base, [0.5], 10_000, seed=6, bridge=False)
    b = sup_tail(custom, [0.5], 10_000, seed=6, bridge=False)
    assert a.hits == b.hits


def test_dufresne_oracle_against_quadrature():
    # density of 2/Gamma(2a,1): integrate directly
    a, x = 1.5, 3.0
    k = 2 * a
    dens = lambda v: stats.gamma.pdf(2 / v, k) * 2 / v**2
    from scipy.integrate import quad
    ref = quad(dens, x, np.inf)[0]
    assert dufresne_survival(a, x) == pytest.approx(ref, rel=1e-8)


def test_integral_tail_matches_dufresne():
    spec = DriftedProcessSpec(1.0, 30.0, 0.02)
    x = [1.0, 2.0, 4.0]
    rep = exp_integral_tail(spec, x, 10_000, seed=5)
    exact = dufresne_survival(1.0, x)
    for p, e in zip(rep.survival, exact):
        assert abs(p - e) < 4 * math.sqrt(e * (1 - e) / 10_000) + 0.01 * e
    assert rep.truncation_bound <= 1e-3


def test_truncation_certificate():
    short = DriftedProcessSpec(0.5, 2.0, 0.01)
    assert exp_integral_truncation(short, 1.0) > 1e-3
    with pytest.raises(TruncationError, match="too short"):
        exp_integral_tail(short, [1.0, 2.0], 10_000, seed=0)
    # doubling the horizon shrinks the bound
    long = DriftedProcessSpec(0.5, 40.0, 0.1)
    longer = DriftedProcessSpec(0.5, 80.0, 0.1)
    assert exp_integral_truncation(longer, 1.0) < exp_integral_truncation(long, 1.0)


def test_sup_truncation_bound_decreases_with_horizon():
    a = DriftedProcessSpec(1.0, 2.0, 0.01)
    b = DriftedProcessSpec(1.0, 4.0, 0.01)
    assert sup_truncation_bound(b, 1.0) < sup_truncation_bound(a, 1.0)


def test_gaussian_increment_tail_is_gaussian():
    spec = DriftedProcessSpec(1.0, 2.0, 0.01)
    rep = gaussian_increment_check(spec, [0.5, 1.0, 1.5, 2.0, 2.5], 20_000, seed=9)
    # sup of BM on [0,1] has P(> c) = 2 sf(c): log-slope in c^2 tends to -1/2
    assert -0.8 < rep["slope_vs_c2"] < -0.4


@settings(max_examples=20, deadline=None)
@given(hits=st.integers(0, 1000), extra=st.integers(0, 1000))
def test_wilson_contains_estimate(hits, extra):
    n = hits + extra
    if n == 0:
        return
    lo, hi = wilson_interval(hits, n)
    assert 0 <= lo <= hits / n <= hi <= 1


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.1, 5), x=st.floats(0.01, 100), y=st.floats(0, 10))
def test_oracles_are_survival_functions(a, x, y):
    assert 0 <= dufresne_survival(a, x) <= 1
    assert dufresne_survival(a, x * 1.1) <= dufresne_survival(a, x)
    assert reflection_survival(a, y + 0.1) <= reflection_survival(a, y)
