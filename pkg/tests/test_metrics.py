import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fixtures import (REFERENCE_BASELINES, brute_force_cycles, date_blackscholes_trace, ondemand_blackscholes_trace,
                      trace_from_degrees)
from thermoguard.chip import BaselineSet
from thermoguard.metrics import (EMPIRICAL, SPATIAL, DegenerateRunError, btd, chip_max_series, extract_cycles,
                                 least_average, omega, per_core_btd, reduction, security_report, sptd, tau, theta,
                                 tsmp)


def one_core_trace(series):
    s = np.asarray(series)
    return trace_from_degrees([s, s - 5, s - 5, s - 5], 0, len(s) - 1)


def test_btd_example():
    assert btd(84, 68) == 16
    assert btd(60, 68) == 8


def test_reference_trace_tau():
    tr = ondemand_blackscholes_trace()
    assert per_core_btd(tr, REFERENCE_BASELINES) == [15, 11, 16, 20]
    assert tau(tr, REFERENCE_BASELINES) == 20


def test_tau_needs_every_baseline():
    with pytest.raises(ValueError, match="no baseline"):
        tau(ondemand_blackscholes_trace(), BaselineSet((4, 5), (61.0, 64.0)))


def test_sptd_example():
    assert sptd([60, 61, 64, 61]) == [1, 4, 1, 3, 0, 3]
    with pytest.raises(ValueError):
        sptd([60])


def test_least_average():
    assert least_average(np.array([5, 1, 1, 5, 5]), 2) == 1.0
    assert least_average(np.array([2, 4]), 10) == 3.0


def test_omega_empirical_example():
    # each core idles at its least average for 2 s, then peaks once
    least = [60, 61, 64, 61]
    peaks = [76, 75, 84, 82]
    rows = [[lo] * 20 + [pk] + [lo] * 5 for lo, pk in zip(least, peaks)]
    tr = trace_from_degrees(rows, 0, 25)
    assert omega(tr, mode=EMPIRICAL) == 21


def test_omega_spatial_example():
    rows = [[60] * 10, [61] * 10, [64] * 10, [61] * 10]
    assert omega(trace_from_degrees(rows, 0, 9), mode=SPATIAL) == 4


def test_omega_unknown_mode():
    with pytest.raises(ValueError, match="unknown omega mode"):
        omega(ondemand_blackscholes_trace(), mode="bogus")


def test_date_fixture_components():
    tr = date_blackscholes_trace()
    r = security_report(tr, REFERENCE_BASELINES)
    assert (r.tau, r.omega, r.theta) == (7, 8, 271)
    assert r.omega_mode == EMPIRICAL
    assert r.omega_empirical == 8
    assert r.tsmp == pytest.approx(0.003496, abs=1e-6)


def test_report_spatial_mode_reported_alongside():
    r = security_report(date_blackscholes_trace(), REFERENCE_BASELINES, mode=SPATIAL)
    assert r.omega == r.omega_spatial
    assert r.as_dict()["omega_empirical"] == 8


def test_theta_triangle_wave():
    wave = [60, 61, 62, 63, 62, 61] * 5 + [60]
    assert theta(one_core_trace(wave)) == 5


def test_theta_sub_threshold_is_zero():
    assert theta(one_core_trace([60, 61] * 50)) == 0


def test_theta_flat_and_short():
    assert theta(one_core_trace([60] * 40)) == 0
    assert extract_cycles([1, 5]) == []


def test_theta_hysteresis_floor():
    with pytest.raises(ValueError):
        theta(one_core_trace([60, 63, 60]), hysteresis=0.5)


def test_theta_uses_whole_trace_not_window():
    wave = [60, 63] * 10 + [60]
    tr = trace_from_degrees([wave] * 4, 0, 1)
    assert theta(tr) == 10


def test_chip_max_series():
    tr = trace_from_degrees([[1, 5], [3, 2]], 0, 1, core_ids=(0, 1))
    assert chip_max_series(tr).tolist() == [3, 5]


@pytest.mark.parametrize("comps, expect", [
    ((7, 8, 271), 0.003496),
    ((0, 0, 1), 1.0),
    ((20, 21, 456), 0.002012),
])
def test_tsmp_examples(comps, expect):
    assert tsmp(*comps) == pytest.approx(expect, abs=1e-6)


def test_tsmp_degenerate():
    with pytest.raises(DegenerateRunError):
        tsmp(0, 0, 0)


def test_flat_trace_is_degenerate():
    tr = trace_from_degrees([[61] * 30, [64] * 30, [68] * 30, [62] * 30], 0, 29)
    with pytest.raises(DegenerateRunError):
        security_report(tr, REFERENCE_BASELINES)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 500), st.integers(1, 50))
def test_tsmp_strictly_decreasing(a, b, c, d):
    if a + b + c == 0:
        return
    assert tsmp(a + d, b, c) < tsmp(a, b, c)
    assert tsmp(a, b, c + d) < tsmp(a, b, c)


def test_reduction_examples():
    assert reduction(456, 271) == pytest.approx(40.57, abs=0.01)
    assert reduction(832, 271) == pytest.approx(67.42, abs=0.05)
    assert reduction(100, 120) < 0
    with pytest.raises(ZeroDivisionError):
        reduction(0, 5)


@settings(max_examples=300)
@given(st.integers(0, 3), st.lists(st.integers(-3, 3), min_size=1, max_size=80))
def test_theta_offset_invariant(offset, steps):
    x = 60 + np.cumsum(steps)
    assert len(extract_cycles(x)) == len(extract_cycles(x + offset))


@settings(max_examples=300)
@given(st.lists(st.integers(-3, 3), min_size=1, max_size=60))
def test_cycles_match_oracle_hypothesis(steps):
    x = 60 + np.cumsum(steps)
    assert len(extract_cycles(x)) == brute_force_cycles(x)


def test_cycles_are_well_formed():
    rng = np.random.default_rng(3)
    x = 60 + np.cumsum(rng.integers(-2, 3, 500))
    for a, p, b in extract_cycles(x):
        assert a < p < b
        assert x[p] - x[a] > 1 and x[p] - x[b] > 1
