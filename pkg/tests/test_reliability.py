import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fixtures import REFERENCE_BASELINES, date_blackscholes_trace, trace_from_degrees
from thermoguard.reliability import (CYCLE_PEAK, TAU_CONSTANT, ReliabilityParams, cycle_stats, cycle_temperatures,
                                     cycles_to_failure, damage, mttf_ratio, mttf_tc)
from thermoguard.metrics import theta


def test_cycles_to_failure_formula():
    p = ReliabilityParams(a_tc=2.0, b_exp=2.0, e_a=300.0, t_th=1.0)
    assert cycles_to_failure(11.0, 350.0, p) == pytest.approx(2.0 * 10.0 ** -2 * math.exp(300 / 350))


def test_cycles_to_failure_defaults():
    assert cycles_to_failure(10.0, 350.0) == pytest.approx(0.01)


def test_zero_exponent_is_constant():
    p = ReliabilityParams(b_exp=0.0)
    assert cycles_to_failure(3.0, 350.0, p) == cycles_to_failure(30.0, 350.0, p) == 1.0


def test_below_inelastic_threshold():
    with pytest.raises(ValueError, match="below inelastic threshold"):
        cycles_to_failure(2.0, 350.0, ReliabilityParams(t_th=2.0))
    with pytest.raises(ValueError):
        cycles_to_failure(5.0, 0.0)


def test_params_validation():
    with pytest.raises(ValueError):
        ReliabilityParams(a_tc=0)
    with pytest.raises(ValueError):
        ReliabilityParams(b_exp=-1)


@given(st.floats(0.5, 50), st.floats(0.5, 50), st.floats(250, 450))
def test_larger_swings_fail_sooner(d1, d2, t):
    lo, hi = sorted((d1, d2))
    assert cycles_to_failure(hi, t) <= cycles_to_failure(lo, t)


@given(st.floats(0, 5000), st.floats(0, 5000))
def test_activation_energy_lengthens_life(e1, e2):
    lo, hi = sorted((e1, e2))
    assert cycles_to_failure(5.0, 350.0, ReliabilityParams(e_a=lo)) <= \
        cycles_to_failure(5.0, 350.0, ReliabilityParams(e_a=hi))


def test_mttf_examples():
    ondemand = mttf_tc(1.0, [9140 / 456] * 456)
    date = mttf_tc(1.0, [1904 / 271] * 271)
    assert ondemand == pytest.approx(9140 / 456)
    assert date == pytest.approx(1904 / 271)
    assert mttf_tc(3.0, [1.0, 2.0, 3.0]) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        mttf_tc(1.0, [])


def test_mttf_ratio_example():
    assert mttf_ratio(9140, 456, 1904, 271) == pytest.approx(2.853, abs=1e-3)
    with pytest.raises(ValueError):
        mttf_ratio(1, 0, 1, 1)
    with pytest.raises(ValueError):
        mttf_ratio(0, 1, 1, 1)


def test_ratio_is_quotient_of_mttf():
    a, b = [20.0] * 10, [7.0, 8.0] * 3
    assert mttf_ratio(sum(a), len(a), sum(b), len(b)) == pytest.approx(mttf_tc(5.0, a) / mttf_tc(5.0, b))


def test_cycle_temperatures_modes():
    tr = date_blackscholes_trace(cycles=20)
    taus = cycle_temperatures(tr, REFERENCE_BASELINES, TAU_CONSTANT)
    assert taus == [7.0] * 20
    peaks = cycle_temperatures(tr, REFERENCE_BASELINES, CYCLE_PEAK)
    assert sorted(set(round(p, 6) for p in peaks)) == [69.0, 72.0]
    with pytest.raises(ValueError):
        cycle_temperatures(tr, REFERENCE_BASELINES, "bogus")


def test_cycle_stats_count_equals_theta():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        rows = 60 + np.cumsum(rng.integers(-2, 3, size=(4, 60)), axis=1)
        tr = trace_from_degrees(rows, 0, 59)
        assert len(cycle_stats(tr)) == theta(tr)


def test_damage_sums_reciprocals():
    tr = date_blackscholes_trace(cycles=10)
    events = cycle_stats(tr)
    expect = sum(1.0 / cycles_to_failure(e.delta_t, e.t_max) for e in events)
    assert damage(events) == pytest.approx(expect)
    # cycles at or under the inelastic threshold do no damage
    assert damage(events, ReliabilityParams(t_th=100.0)) == 0.0
