"""Synthetic traces with hand-chosen per-core extremes, and a tiny chip."""

from __future__ import annotations

import numpy as np

from thermoguard.chip import BaselineSet, ChipConfig, CoreSpec, DvfsTable, Phase, ThermalTrace, WorkloadSpec
from thermoguard.governors import Fixed
from thermoguard.sim import PowerParams, run, steady_state

CORES = (4, 5, 6, 7)
REFERENCE_BASELINES = BaselineSet(CORES, (61.0, 64.0, 68.0, 62.0))
QUIET = PowerParams(c_dyn=7.4e-4, p_static0=0.0, p_static_slope=0.0)


def trace_from_degrees(rows, start: int, end: int, core_ids=CORES, period_ms: int = 100) -> ThermalTrace:
    return ThermalTrace(tuple(core_ids), np.asarray(rows, dtype=np.int64) * 1000, period_ms, start, end)


def ondemand_blackscholes_trace() -> ThermalTrace:
    """Per-core in-window maxima 76, 75, 84, 82; idle at the baselines outside."""
    base = [61, 64, 68, 62]
    peaks = [76, 75, 84, 82]
    lead, body, tail = 30, 60, 20
    rows = []
    for b, p in zip(base, peaks):
        ramp = np.concatenate([np.linspace(b, p, body // 2), np.linspace(p, b, body - body // 2)])
        rows.append(np.concatenate([np.full(lead, b), np.round(ramp), np.full(tail, b)]))
    return trace_from_degrees(rows, lead, lead + body - 1)


def date_blackscholes_trace(cycles: int = 271) -> ThermalTrace:
    """
    Built so that against :data:`REFERENCE_BASELINES` tau = 7, the empirical
    omega = 8 and theta = ``cycles``.

    Core 6 idles at 64 then swings 66 <-> 69 ``cycles`` times with one
    swing reaching 72; the other cores stay flat except for one spike each,
    placed on that 72 sample so the chip maximum is unchanged.
    """
    flat = [61, 61, 64, 62]
    spikes = [68, 65, None, 67]
    lead, settle = 30, 20
    osc = []
    for k in range(cycles):
        osc += [66, 72 if k == cycles // 2 else 69]
    osc.append(66)
    hot = lead + settle + 2 * (cycles // 2) + 1
    n = lead + settle + len(osc) + settle + 20
    rows = np.tile(np.array(flat)[:, None], (1, n))
    rows[2, lead + settle:lead + settle + len(osc)] = osc
    for c, s in enumerate(spikes):
        if s is not None:
            rows[c, hot] = s
    return trace_from_degrees(rows, lead, lead + settle + len(osc) + settle - 1)


def toy_chip(levels=(500, 1000, 1500, 2000, 2500, 3000), resolution_mc: int = 1) -> ChipConfig:
    """4 cores on a 2x2 grid, one cluster, small linear-voltage table."""
    cores = tuple(CoreSpec(i, 0, (i // 2, i % 2)) for i in range(4))
    g = 0.05
    coupling = tuple(tuple(g if abs(a // 2 - b // 2) + abs(a % 2 - b % 2) == 1 else 0.0 for b in range(4))
                     for a in range(4))
    lo, hi = levels[0], levels[-1]
    table = DvfsTable(0, tuple((f, round(0.9 + 0.4 * (f - lo) / (hi - lo), 6)) for f in levels))
    return ChipConfig(cores, (table,), coupling, (0.1, 0.1, 0.09, 0.11), (0.06,) * 4, 40.0,
                      sensor_resolution_mc=resolution_mc, name="toy")


TOY_YAML = """
chip:
  name: toy
  ambient_temp: 40.0
  neighbor_conductance: 0.05
  heat_capacity: 0.06
  ambient_conductance: [0.1, 0.1, 0.09, 0.11]
  cores:
    - {id: 0, pos: [0, 0]}
    - {id: 1, pos: [0, 1]}
    - {id: 2, pos: [1, 0]}
    - {id: 3, pos: [1, 1]}
dvfs:
  - cluster: 0
    frequencies_mhz: [500, 1000, 1500, 2000, 2500, 3000]
    voltage_range_v: [0.9, 1.3]
power:
  c_dyn: 7.4e-4
  p_static0: 1.0
  p_static_slope: 0.01
  idle_ripple_amplitude: 0.05
workload:
  name: toy
  deadline_ms: 20000
  phases:
    - {utilization: [1.0, 1.0, 0.6, 0.6], work_mcycles: 1000}
    - {utilization: [0.5, 0.3, 0.3, 0.3], work_mcycles: 500}
    - {utilization: [1.0, 1.0, 0.6, 0.6], work_mcycles: 1000}
    - {utilization: [0.5, 0.3, 0.3, 0.3], work_mcycles: 500}
"""


def tree_bytes(root) -> dict:
    """Relative path -> content for every file under ``root``."""
    from pathlib import Path

    root = Path(root)
    if root.is_file():
        return {root.name: root.read_bytes()}
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# --- oracles ------------------------------------------------------------------

def brute_force_cycles(x, h=1.0) -> int:
    """
    Longest trough-peak-trough-... chain with every leg moving by more
    than ``h``, counted in completed peaks. O(n^2) dynamic programme.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    neg = -(10 ** 9)
    at_trough = np.full(n, neg)   # cycles completed when a chain ends on trough i
    at_peak = np.full(n, neg)     # cycles completed before peak i
    for i in range(n):
        start = np.maximum(at_trough[:i], 0)   # any earlier point may open a chain
        rise = x[i] - x[:i] > h
        if rise.any():
            at_peak[i] = start[rise].max()
        fall = x[:i] - x[i] > h
        if fall.any() and at_peak[:i][fall].max() > neg:
            at_trough[i] = at_peak[:i][fall].max() + 1
    return int(max(0, at_trough.max()))


def random_chip(rng) -> ChipConfig:
    cores = tuple(CoreSpec(i, 0, (i // 2, i % 2)) for i in range(4))
    g = np.zeros((4, 4))
    for a, b in ((0, 1), (2, 3), (0, 2), (1, 3)):
        g[a, b] = g[b, a] = rng.uniform(0.0, 0.1)
    table = DvfsTable(0, ((500, 0.9), (1000, 1.0), (2000, 1.2)))
    return ChipConfig(cores, (table,), tuple(map(tuple, g)), tuple(rng.uniform(0.05, 0.2, 4)),
                      tuple(rng.uniform(0.03, 0.15, 4)), 40.0)


def converge_run(cfg, util, f=1000, params=QUIET):
    """Hold constant power for 10 of the slowest time constants; final true temps (noise off)."""
    evals, _ = np.linalg.eig(np.diag(1 / np.array(cfg.heat_capacity)) @ cfg.conductance_matrix())
    slowest_ms = 1000.0 / np.real(evals).min()
    duration = int(np.ceil(10 * slowest_ms / 100.0)) * 100
    w = WorkloadSpec("hold", (Phase(tuple(util), duration_ms=duration),), duration * 2)
    tr, _ = run(cfg, w, Fixed(f), params, 0, noise_sigma=0.0, lead_ms=0, tail_ms=0)
    v = cfg.dvfs[0].voltage(f)
    power = params.c_dyn * np.asarray(util) * v * v * f + params.p_static0
    return tr.series[:, -1] / 1000.0, steady_state(cfg, power)
