"""Built-in synthetic workloads, sized for a chip with ``n_cores`` cores."""

from __future__ import annotations

import numpy as np

from .chip import ConfigError, Phase, WorkloadSpec


def blackscholes(n_cores: int = 4, deadline_ms: float = 30_000) -> WorkloadSpec:
    """
    Data-parallel kernel whose parallel efficiency drifts: >1 s stretches
    with every core near saturation alternate with imbalanced stretches
    where the worker cores drop to ~80-85%. About 13 s at 2 GHz.
    """
    rng = np.random.default_rng(2009)  # fixed shape, not a run seed
    phases = []
    for _ in range(9):
        busy = 0.96 + 0.04 * rng.random(n_cores)
        phases.append(Phase(tuple(np.round(busy, 3).tolist()),
                            work_mcycles=float(rng.integers(1400, 2200))))
        lull = 0.80 + 0.05 * rng.random(n_cores)
        lull[0] = 0.95
        phases.append(Phase(tuple(np.round(lull, 3).tolist()),
                            work_mcycles=float(rng.integers(1000, 1800))))
    return WorkloadSpec("blackscholes", tuple(phases), deadline_ms)


def single_core_bursts(n_cores: int = 4, core: int = 2, bursts: int = 6, burst_mcycles: float = 900,
                       gap_ms: float = 300, deadline_ms: float = 10_000) -> WorkloadSpec:
    """Full load on one core in short bursts, everything else idle (RSA-style)."""
    if not 0 <= core < n_cores:
        raise ConfigError(f"core index {core} out of range")
    util = [0.0] * n_cores
    util[core] = 1.0
    phases = []
    for k in range(bursts):
        phases.append(Phase(tuple(util), work_mcycles=burst_mcycles))
        if k < bursts - 1:
            phases.append(Phase((0.0,) * n_cores, duration_ms=gap_ms))
    return WorkloadSpec("rsa", tuple(phases), deadline_ms)


def burst_code(name: str, offsets_ms, n_cores: int = 4, core: int = 2, burst_mcycles: float = 400,
               task_ms: float = 5000, f_ref: float = 2000, deadline_ms: float = 15_000) -> WorkloadSpec:
    """
    A fixed-length task whose only signal is *when* bursts of full load hit
    ``core``. ``offsets_ms`` are burst start times at ``f_ref``; gaps are
    idle time so that the task spans ``task_ms`` at ``f_ref``.
    """
    burst_ms = burst_mcycles / f_ref * 1000.0
    util = [0.0] * n_cores
    util[core] = 1.0
    phases = []
    t = 0.0
    for off in sorted(offsets_ms):
        if off < t - 1e-9:
            raise ConfigError(f"{name}: overlapping bursts")
        if off > t:
            phases.append(Phase((0.0,) * n_cores, duration_ms=off - t))
        phases.append(Phase(tuple(util), work_mcycles=burst_mcycles))
        t = off + burst_ms
    if task_ms > t:
        phases.append(Phase((0.0,) * n_cores, duration_ms=task_ms - t))
    return WorkloadSpec(name, tuple(phases), deadline_ms)


BUILTIN = {
    "blackscholes": blackscholes,
    "rsa": single_core_bursts,
}


def builtin(name: str, n_cores: int) -> WorkloadSpec:
    if name not in BUILTIN:
        raise ConfigError(f"unknown workload {name!r}; built-ins: {', '.join(sorted(BUILTIN))}")
    return BUILTIN[name](n_cores)
