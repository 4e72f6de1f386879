"""
Discrete-time lumped-RC thermal and power simulator.

Each core is one thermal node with heat capacity C_i, a conductance to
ambient and lateral conductances to its neighbours. The network is
integrated with explicit Euler at a 10 ms step; sensor noise and
quantisation are applied to emitted samples only, never to the state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .chip import BaselineSet, ChipConfig, ThermalTrace, WorkloadSpec
from .governors import Governor, GovernorSetting, Performance

MAX_DT_MS = 10.0
MAX_STEP_DELTA = 5.0


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PowerParams:
    """
    Per-core power model: ``c_dyn * u * V^2 * f + p_static0 + p_static_slope * T``,
    plus a sinusoidal idle ripple on cores with zero utilisation.
    """

    c_dyn: float = 7.4e-4  # W / (V^2 MHz)
    p_static0: float = 0.2
    p_static_slope: float = 0.01
    idle_ripple_amplitude: float = 0.0
    idle_ripple_period: float = 4000.0  # ms

    def __post_init__(self):
        if self.c_dyn < 0 or self.p_static0 < 0:
            raise ValueError("c_dyn and p_static0 must be non-negative")
        if self.idle_ripple_period <= 0:
            raise ValueError("idle_ripple_period must be positive")

    @classmethod
    def from_mapping(cls, d: dict) -> "PowerParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"power: unknown keys {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})


def core_power(u: float, f: float, v: float, temp: float, params: PowerParams,
               time_ms: float = 0.0) -> float:
    if not 0.0 <= u <= 1.0:
        raise ValueError("utilization must lie in [0, 1]")
    p = params.c_dyn * u * v * v * f + params.p_static0 + params.p_static_slope * temp
    if u == 0.0 and params.idle_ripple_amplitude:
        p += params.idle_ripple_amplitude * math.sin(2 * math.pi * time_ms / params.idle_ripple_period)
    return p


@dataclass(frozen=True)
class SimState:
    time_ms: float
    temps: tuple[float, ...]
    remaining: tuple[float, ...]  # megacycles left per core in the current phase
    freqs: tuple[int, ...]        # effective MHz per cluster
    volts: tuple[float, ...]
    utilization: tuple[float, ...]


@dataclass(frozen=True)
class ExecStats:
    execution_time: float  # ms
    deadline_met: bool
    energy: float          # J over the execution window
    peak_temp: float       # hottest internal core temperature while executing, degC


class _Network:
    """Precomputed matrices shared by :func:`step` and :func:`run`."""

    def __init__(self, config: ChipConfig, params: PowerParams):
        self.config = config
        self.params = params
        self.k = config.conductance_matrix()
        self.inv_c = 1.0 / np.asarray(config.heat_capacity, dtype=float)
        self.t_amb = config.ambient_temp
        self.cluster_of = np.asarray(config.cluster_index())

    def dyn_power(self, util: np.ndarray, freqs, volts) -> np.ndarray:
        f = np.asarray(freqs, dtype=float)[self.cluster_of]
        v = np.asarray(volts, dtype=float)[self.cluster_of]
        return self.params.c_dyn * util * v * v * f

    def power(self, temps: np.ndarray, dyn: np.ndarray, idle: np.ndarray, time_ms: float) -> np.ndarray:
        p = self.params
        out = dyn + p.p_static0 + p.p_static_slope * temps
        if p.idle_ripple_amplitude:
            out = out + idle * (p.idle_ripple_amplitude * math.sin(2 * math.pi * time_ms / p.idle_ripple_period))
        return out

    def derivative(self, temps: np.ndarray, power: np.ndarray) -> np.ndarray:
        return self.inv_c * (power - self.k @ (temps - self.t_amb))

    def advance(self, temps, dyn, idle, time_ms, dt_ms):
        """One Euler step; returns (new temps, total power drawn)."""
        p = self.power(temps, dyn, idle, time_ms)
        delta = (dt_ms / 1000.0) * self.derivative(temps, p)
        worst = float(np.max(np.abs(delta)))
        if not worst <= MAX_STEP_DELTA:
            raise SimulationError(
                f"unstable integration at t={time_ms:.0f} ms: |dT|={worst:.2f} degC in one step "
                f"(reduce dt or check conductances)")
        return temps + delta, float(p.sum())

    def idle_equilibrium(self) -> np.ndarray:
        """Fixed point with u=0 everywhere and no ripple."""
        p = self.params
        n = self.config.n_cores
        a = self.k - p.p_static_slope * np.eye(n)
        rhs = np.full(n, p.p_static0 + p.p_static_slope * self.t_amb)
        return self.t_amb + np.linalg.solve(a, rhs)


def step(state: SimState, dt: float, setting: GovernorSetting, params: PowerParams,
         config: ChipConfig) -> SimState:
    """
    Advance the RC network by ``dt`` ms under ``setting``.

    Utilisation is taken from ``state.utilization``; remaining work drops by
    ``u * f * dt`` (MHz * ms = 1e-3 megacycles).
    """
    if not 0 < dt <= MAX_DT_MS:
        raise ValueError(f"dt must lie in (0, {MAX_DT_MS}] ms")
    setting.validate(config)
    net = _Network(config, params)
    util = np.asarray(state.utilization, dtype=float)
    volts = tuple(t.voltage(f) for t, f in zip(config.dvfs, setting.freqs))
    dyn = net.dyn_power(util, setting.freqs, volts)
    temps, _ = net.advance(np.asarray(state.temps, dtype=float), dyn, (util == 0).astype(float),
                           state.time_ms, dt)
    f_core = np.asarray(setting.freqs, dtype=float)[net.cluster_of]
    remaining = np.maximum(np.asarray(state.remaining) - util * f_core * dt / 1000.0, 0.0)
    return SimState(state.time_ms + dt, tuple(temps.tolist()), tuple(remaining.tolist()),
                    tuple(setting.freqs), volts, state.utilization)


def steady_state(config: ChipConfig, power) -> np.ndarray:
    """Solve ``G (T - T_amb) = P`` directly."""
    p = np.asarray(power, dtype=float)
    if p.shape != (config.n_cores,):
        raise ValueError("one power value per core required")
    try:
        return config.ambient_temp + np.linalg.solve(config.conductance_matrix(), p)
    except np.linalg.LinAlgError:
        raise SimulationError("singular conductance system") from None


def sample_mc(temps: np.ndarray, rng: np.random.Generator, noise_sigma: float, resolution_mc: int) -> np.ndarray:
    """Noisy sensor reading, quantised to ``resolution_mc`` milli-degC."""
    noise = rng.normal(0.0, 1.0, temps.shape) * noise_sigma
    mc = (temps + noise) * 1000.0
    return (np.rint(mc / resolution_mc) * resolution_mc).astype(np.int64)


def run(config: ChipConfig, workload: WorkloadSpec, governor: Optional[Governor] = None,
        params: Optional[PowerParams] = None, seed: int = 0, *,
        noise_sigma: float = 0.2, period_ms: int = 100, dt_ms: float = 10.0,
        lead_ms: int = 3000, tail_ms: int = 2000, max_exec_ms: Optional[float] = None,
        ) -> tuple[ThermalTrace, ExecStats]:
    """
    Simulate ``workload`` between an idle lead-in and an idle tail.

    The governor is consulted at every sampling instant. A sampling
    instant is also where the thermal cap acts: if any core of a cluster is
    above ``temp_threshold`` the cluster is forced one level below its
    current effective frequency; once all its cores are at least 1 degC
    below the cap the restriction is relaxed by one level.

    Returns the sensored cores' trace (markers delimit execution) and the
    execution statistics.
    """
    params = params or PowerParams()
    governor = governor or Performance()
    workload.check_cores(config.n_cores)
    if period_ms % dt_ms:
        raise ValueError("period_ms must be a multiple of dt_ms")
    if lead_ms % period_ms or tail_ms % period_ms:
        raise ValueError("lead/tail must be multiples of period_ms")
    ticks_per_period = int(round(period_ms / dt_ms))
    rng = np.random.default_rng(seed)
    net = _Network(config, params)
    n = config.n_cores
    tables = config.dvfs
    cluster_of = net.cluster_of
    cluster_cores = [np.flatnonzero(cluster_of == k) for k in range(len(tables))]
    sensors = list(config.sensor_indices)
    if not sensors:
        raise SimulationError("chip has no sensored cores")
    limit = max_exec_ms if max_exec_ms is not None else max(50.0 * workload.deadline, 600_000.0)

    temps = net.idle_equilibrium()
    throttle = [len(t.levels) - 1 for t in tables]
    eff_idx = [len(t.levels) - 1 for t in tables]
    setting: Optional[GovernorSetting] = None
    phases = workload.phases
    phase = -1  # -1: lead-in, len(phases): finished
    remaining = np.zeros(n)
    phase_left_ms = 0.0
    util = np.zeros(n)
    util_acc = np.zeros(n)

    samples: list[np.ndarray] = []
    tick = 0
    start_ms = float(lead_ms)
    end_ms: Optional[float] = None
    energy = 0.0
    peak = -math.inf
    stop_ms: Optional[float] = None

    def enter(k: int):
        nonlocal phase, remaining, phase_left_ms, util
        phase = k
        if k >= len(phases):
            util = np.zeros(n)
            return
        ph = phases[k]
        util = np.asarray(ph.utilization, dtype=float)
        if ph.work_mcycles is not None:
            remaining = ph.work_mcycles * util
            phase_left_ms = 0.0
        else:
            remaining = np.zeros(n)
            phase_left_ms = ph.duration_ms

    while True:
        t = tick * dt_ms
        if tick % ticks_per_period == 0:
            samples.append(sample_mc(temps[sensors], rng, noise_sigma, config.sensor_resolution_mc))
            if stop_ms is not None and t >= stop_ms:
                break
            avg_u = util_acc / ticks_per_period if tick else util
            util_acc = np.zeros(n)
            state = SimState(t, tuple(temps.tolist()), tuple(remaining.tolist()),
                             tuple(tables[k].levels[i][0] for k, i in enumerate(eff_idx)),
                             tuple(tables[k].levels[i][1] for k, i in enumerate(eff_idx)),
                             tuple(avg_u.tolist()))
            new = governor(state, config, setting)
            new.validate(config)
            for k, table in enumerate(tables):
                hot = temps[cluster_cores[k]]
                if hot.size and hot.max() > new.temp_threshold:
                    throttle[k] = max(0, eff_idx[k] - 1)
                elif hot.size == 0 or hot.max() < new.temp_threshold - 1.0:
                    throttle[k] = min(len(table.levels) - 1, throttle[k] + 1)
                eff_idx[k] = min(table.index(new.freqs[k]), throttle[k])
            setting = new
            freqs = [tables[k].levels[i][0] for k, i in enumerate(eff_idx)]
            volts = [tables[k].levels[i][1] for k, i in enumerate(eff_idx)]
            f_core = np.asarray(freqs, dtype=float)[cluster_of]

        if phase == -1 and t >= start_ms:
            enter(0)
        if phase == len(phases) and end_ms is None:
            end_ms = t
            stop_ms = _align(t + tail_ms, period_ms)
        if 0 <= phase < len(phases) and t - start_ms > limit:
            raise SimulationError(f"workload {workload.name!r} still running after {limit:.0f} ms")

        dyn = net.dyn_power(util, freqs, volts)
        temps, p_total = net.advance(temps, dyn, (util == 0).astype(float), t, dt_ms)
        util_acc += util
        if 0 <= phase < len(phases):
            energy += p_total * dt_ms / 1000.0
            peak = max(peak, float(temps.max()))
            if phases[phase].work_mcycles is not None:
                remaining = np.maximum(remaining - util * f_core * dt_ms / 1000.0, 0.0)
                if not remaining.any():
                    enter(phase + 1)
            else:
                phase_left_ms -= dt_ms
                if phase_left_ms <= 1e-9:
                    enter(phase + 1)
        tick += 1
        if phase == len(phases) and end_ms is None:
            end_ms = tick * dt_ms
            stop_ms = _align(end_ms + tail_ms, period_ms)

    exec_ms = end_ms - start_ms
    series = np.stack(samples, axis=1)
    trace = ThermalTrace(tuple(config.core_ids[i] for i in sensors), series, period_ms,
                         int(start_ms // period_ms), min(int(end_ms // period_ms), series.shape[1] - 1))
    if peak == -math.inf:
        peak = float(temps.max())
    return trace, ExecStats(exec_ms, exec_ms <= workload.deadline, energy, peak)


def _align(t: float, period: int) -> float:
    return math.ceil(t / period - 1e-9) * period


def idle_workload(config: ChipConfig, duration_ms: float, deadline: Optional[float] = None) -> WorkloadSpec:
    from .chip import Phase
    return WorkloadSpec("idle", (Phase((0.0,) * config.n_cores, duration_ms=duration_ms),),
                        deadline or duration_ms)


def baseline_run(config: ChipConfig, duration_ms: float = 10_000, params: Optional[PowerParams] = None,
                 seed: int = 0, *, noise_sigma: float = 0.2,
                 period_ms: int = 100) -> tuple[ThermalTrace, BaselineSet]:
    """
    Idle the chip for ``duration_ms`` and take each sensored core's mean
    sample, rounded to whole degC, as its baseline.
    """
    if duration_ms < 10_000:
        raise ValueError("baseline window must be at least 10 s")
    trace, _ = run(config, idle_workload(config, duration_ms), Performance(), params, seed,
                   noise_sigma=noise_sigma, period_ms=period_ms, lead_ms=0, tail_ms=0)
    return trace, baselines_from_trace(trace)


def baselines_from_trace(trace: ThermalTrace) -> BaselineSet:
    means = trace.series.mean(axis=1) / 1000.0
    return BaselineSet(trace.core_ids, tuple(float(math.floor(m + 0.5)) for m in means))


def with_jitter(params: PowerParams, rng: np.random.Generator, spread: float = 0.05) -> PowerParams:
    """Scale ``c_dyn`` by a uniform factor in [1 - spread, 1 + spread]."""
    return replace(params, c_dyn=params.c_dyn * rng.uniform(1.0 - spread, 1.0 + spread))
