import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thermoguard.chip import (PRESETS, BaselineSet, ConfigError, Phase, ThermalTrace, TraceFormatError, WorkloadSpec,
                              load_config, load_document, load_preset, read_baselines, read_trace, snap_frequency,
                              write_baselines, write_trace)

MINIMAL = """
chip:
  ambient_temp: 25
  heat_capacity: 0.05
  ambient_conductance: 0.1
  cores:
    - {id: 0}
dvfs:
  - cluster: 0
    frequencies_mhz: [500, 1000]
    voltage_range_v: [0.8, 1.0]
"""


@pytest.fixture(scope="module")
def big():
    return load_preset("exynos5422-big").chip


def test_big_preset_shape(big):
    assert big.n_cores == 4
    t = big.dvfs[0]
    assert len(t.levels) == 19
    assert t.frequencies == tuple(range(200, 2001, 100))


def test_full_5422_preset_tables():
    chip = load_preset("exynos5422").chip
    little, bigt = chip.dvfs
    assert little.frequencies == tuple(range(200, 1401, 100))
    assert len(little.levels) == 13
    assert bigt.frequencies == tuple(range(200, 2001, 100))
    # only the big cores carry sensors
    assert [chip.cores[i].core_id for i in chip.sensor_indices] == [4, 5, 6, 7]


def test_9810_preset_tables():
    chip = load_preset("exynos9810").chip
    little, bigt = chip.dvfs
    assert little.frequencies == (455, 598, 715, 832, 949, 1053, 1248, 1456, 1690, 1794)
    assert bigt.frequencies == (650, 741, 858, 962, 1066, 1170, 1261, 1469, 1586, 1690, 1794, 1924, 2002, 2106,
                                2314, 2496, 2652, 2704)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_validate(name):
    doc = load_preset(name)
    assert doc.chip.sensor_indices
    assert "c_dyn" in doc.power


def test_minimal_document():
    cfg = load_config(MINIMAL)
    assert cfg.n_cores == 1
    assert cfg.dvfs[0].frequencies == (500, 1000)
    assert cfg.dvfs[0].voltage(1000) == pytest.approx(1.0)


def test_asymmetric_coupling_rejected():
    doc = MINIMAL.replace("    - {id: 0}", "    - {id: 0, pos: [0, 0]}\n    - {id: 1, pos: [0, 1]}")
    doc = doc.replace("  ambient_temp: 25", "  ambient_temp: 25\n  coupling: [[0, 0.1], [0.2, 0]]")
    with pytest.raises(ConfigError, match="coupling not symmetric"):
        load_config(doc)


def test_parse_error_has_line():
    with pytest.raises(ConfigError, match=r"parse error at line \d+"):
        load_document("chip:\n  cores: [\n  bad")


@pytest.mark.parametrize("patch, bad, field", [
    ("heat_capacity: 0.05", "heat_capacity: -1", "chip.heat_capacity"),
    ("ambient_conductance: 0.1", "ambient_conductance: 0", "chip.ambient_conductance"),
    ("frequencies_mhz: [500, 1000]", "frequencies_mhz: [1000]", "dvfs[0]"),
])
def test_invariant_violation_names_field(patch, bad, field):
    with pytest.raises(ConfigError, match=field.replace("[", r"\[").replace("]", r"\]")):
        load_config(MINIMAL.replace(patch, bad))


def test_missing_cluster_table():
    with pytest.raises(ConfigError, match="no table for cluster 3"):
        load_config(MINIMAL.replace("{id: 0}", "{id: 0, cluster: 3}"))


def test_workload_section():
    text = MINIMAL + """
workload:
  name: w
  deadline_ms: 1000
  phases:
    - {utilization: [1.0], work_mcycles: 100}
    - {utilization: [0.0], duration_ms: 50}
"""
    doc = load_document(text)
    assert doc.workload.total_work == 100
    assert len(doc.workload.phases) == 2


def test_phase_rules():
    with pytest.raises(ConfigError):
        Phase((0.5,), duration_ms=10, work_mcycles=10)
    with pytest.raises(ConfigError):
        Phase((1.5,), duration_ms=10)
    with pytest.raises(ConfigError):
        Phase((0.0,), work_mcycles=10)
    with pytest.raises(ConfigError):
        WorkloadSpec("w", (), 0)


@pytest.mark.parametrize("f, expect", [(1234, 1200), (2000, 2000), (150, 200), (99999, 2000)])
def test_snap_frequency(big, f, expect):
    assert snap_frequency(big.dvfs[0], f) == expect


@given(st.floats(1, 5000), st.floats(1, 5000))
def test_snap_monotone_and_idempotent(a, b):
    table = load_preset("exynos5422-big").chip.dvfs[0]
    lo, hi = sorted((a, b))
    assert snap_frequency(table, lo) <= snap_frequency(table, hi)
    s = snap_frequency(table, a)
    assert snap_frequency(table, s) == s
    assert s in table.frequencies


CANON = """# period_ms=100
# start_ms=100
# end_ms=200
time_ms,core,temp_mc
0,0,50000
0,1,51000
100,0,52000
100,1,53000
200,0,54000
200,1,55000
"""


def test_read_canonical():
    t = read_trace(CANON)
    assert len(t) == 3
    assert t.core_ids == (0, 1)
    assert (t.start_marker, t.end_marker) == (1, 2)
    assert write_trace(t) == CANON


def test_missing_core_in_row():
    with pytest.raises(TraceFormatError):
        read_trace(CANON.replace("100,1,53000\n", "100,53000\n"))


def test_inconsistent_core_set():
    with pytest.raises(TraceFormatError, match="inconsistent core set"):
        read_trace(CANON.replace("100,1,53000\n", ""))


def test_empty_trace():
    with pytest.raises(TraceFormatError, match="empty trace"):
        read_trace("time_ms,core,temp_mc\n")


def test_non_monotone_timestamps():
    bad = CANON.replace("200,0,54000\n200,1,55000\n", "") + "50,0,1\n50,1,1\n"
    with pytest.raises(TraceFormatError, match="non-monotone"):
        read_trace(bad)


def test_non_constant_period():
    bad = CANON.replace("200,", "300,").replace("# end_ms=200", "# end_ms=300")
    with pytest.raises(TraceFormatError, match="constant period"):
        read_trace(bad)


@st.composite
def traces(draw):
    n_cores = draw(st.integers(1, 4))
    n = draw(st.integers(1, 30))
    vals = draw(st.lists(st.integers(-40_000, 150_000), min_size=n * n_cores, max_size=n * n_cores))
    start = draw(st.integers(0, n - 1))
    end = draw(st.integers(start, n - 1))
    ids = tuple(sorted(draw(st.sets(st.integers(0, 15), min_size=n_cores, max_size=n_cores))))
    period = draw(st.sampled_from([1, 10, 100, 250]))
    t0 = draw(st.integers(0, 10)) * period
    return ThermalTrace(ids, np.array(vals).reshape(n_cores, n), period, start, end, t0)


@settings(max_examples=200)
@given(traces())
def test_trace_round_trip(t):
    text = write_trace(t)
    back = read_trace(text)
    assert back == t
    assert write_trace(back) == text


def test_trace_is_immutable():
    t = read_trace(CANON)
    with pytest.raises(ValueError):
        t.series[0, 0] = 1


def test_baseline_round_trip():
    b = BaselineSet((4, 5), (61.0, 64.5))
    assert read_baselines(write_baselines(b)) == b
    with pytest.raises(TraceFormatError):
        read_baselines("core,temp\n1,2\n")
