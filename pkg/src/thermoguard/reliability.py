"""
Thermal-cycling reliability (modified Coffin-Manson).

    N_TC  = A_TC * (dT - T_th) ** -b * exp(E_a / T_max)
    MTTF  = N_TC * sum(t_i) / n

Comparing two governors on the same part, N_TC is assumed equal on both
sides and cancels, leaving ``(sum_a / n_a) / (sum_b / n_b)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .chip import BaselineSet, ThermalTrace
from .metrics import CycleEvent, chip_max_series, cycle_events, tau

# per-cycle temperature conventions for mttf_tc inputs
TAU_CONSTANT = "tau"      # every cycle contributes the run's tau
CYCLE_PEAK = "peak"       # every cycle contributes its own peak, degC


@dataclass(frozen=True)
class ReliabilityParams:
    """Placeholders: no published constants exist for these parts."""

    a_tc: float = 1.0
    b_exp: float = 2.0
    e_a: float = 0.0    # K, already divided by Boltzmann's constant
    t_th: float = 0.0   # degC

    def __post_init__(self):
        if not self.a_tc > 0:
            raise ValueError("a_tc must be positive")
        if self.b_exp < 0:
            raise ValueError("b_exp must be non-negative")


def cycles_to_failure(delta_t: float, t_max: float, params: ReliabilityParams = ReliabilityParams()) -> float:
    """
    Cycles to failure for a cycle of amplitude ``delta_t`` (degC) peaking at
    ``t_max`` (kelvin).
    """
    if delta_t <= params.t_th:
        raise ValueError(f"below inelastic threshold: delta_t={delta_t} <= t_th={params.t_th}")
    if t_max <= 0:
        raise ValueError("t_max must be in kelvin and positive")
    return params.a_tc * (delta_t - params.t_th) ** (-params.b_exp) * math.exp(params.e_a / t_max)


def mttf_tc(n_tc: float, cycle_temps: Sequence[float]) -> float:
    if len(cycle_temps) == 0:
        raise ValueError("empty cycle list")
    return n_tc * math.fsum(cycle_temps) / len(cycle_temps)


def mttf_ratio(sum_a: float, n_a: int, sum_b: float, n_b: int) -> float:
    """MTTF of side a over side b with N_TC cancelled."""
    if n_a < 1 or n_b < 1:
        raise ValueError("cycle counts must be >= 1")
    if sum_a <= 0 or sum_b <= 0:
        raise ValueError("temperature sums must be positive")
    return (sum_a / n_a) / (sum_b / n_b)


def cycle_stats(trace: ThermalTrace, hysteresis: float = 1.0) -> list[CycleEvent]:
    """One event per cycle counted by :func:`thermoguard.metrics.theta`."""
    if hysteresis < 1:
        raise ValueError("hysteresis must be >= 1 degC")
    return cycle_events(chip_max_series(trace), hysteresis)


def cycle_temperatures(trace: ThermalTrace, baselines: BaselineSet, mode: str = TAU_CONSTANT,
                       hysteresis: float = 1.0) -> list[float]:
    """The t_i series fed to :func:`mttf_tc`: tau per cycle, or each cycle's peak in degC."""
    events = cycle_stats(trace, hysteresis)
    if mode == TAU_CONSTANT:
        return [float(tau(trace, baselines))] * len(events)
    if mode == CYCLE_PEAK:
        return [e.t_max - 273.15 for e in events]
    raise ValueError(f"unknown cycle temperature mode {mode!r}")


def damage(events: Sequence[CycleEvent], params: ReliabilityParams = ReliabilityParams()) -> float:
    """Miner's-rule damage sum over cycles above the inelastic threshold."""
    return math.fsum(1.0 / cycles_to_failure(e.delta_t, e.t_max, params)
                     for e in events if e.delta_t > params.t_th)
