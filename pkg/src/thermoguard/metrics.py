"""
Thermal side-channel exposure metrics.

``tau``   largest deviation of any core's in-window peak from its idle baseline
``omega`` largest spatial disparity (two definitions, see :func:`omega`)
``theta`` number of thermal cycles in the whole trace
``tsmp``  1 / (tau + omega + theta); higher is harder to attack

All inputs are rounded to whole degC before they are compared, so every
metric is an integer count of degrees (or of cycles).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .chip import BaselineSet, ThermalTrace

SPATIAL = "spatial-eq5"
EMPIRICAL = "empirical-fig14"
OMEGA_MODES = (SPATIAL, EMPIRICAL)


class DegenerateRunError(ValueError):
    pass


@dataclass(frozen=True)
class CycleEvent:
    delta_t: float   # degC, peak minus the lower of its two troughs
    t_max: float     # K
    start: int       # sample index of the preceding trough
    peak: int
    end: int         # sample index of the following trough


@dataclass(frozen=True)
class SecurityReport:
    tau: int
    omega: int
    theta: int
    tsmp: float
    omega_mode: str
    omega_spatial: int
    omega_empirical: int

    def as_dict(self) -> dict:
        return {
            "tau": self.tau, "omega": self.omega, "theta": self.theta, "tsmp": self.tsmp,
            "omega_mode": self.omega_mode, "omega_spatial": self.omega_spatial,
            "omega_empirical": self.omega_empirical,
        }


def _whole(x) -> int:
    return int(math.floor(x + 0.5))


def btd(t_max: float, b: float) -> float:
    return abs(t_max - b)


def _aligned_baselines(trace: ThermalTrace, baselines: BaselineSet) -> list[int]:
    lookup = baselines.as_dict()
    missing = [c for c in trace.core_ids if c not in lookup]
    if missing:
        raise ValueError(f"no baseline for cores {missing}")
    return [_whole(lookup[c]) for c in trace.core_ids]


def _window_degrees(trace: ThermalTrace) -> np.ndarray:
    w = np.floor_divide(trace.window() + 500, 1000)
    if w.shape[1] == 0:
        raise ValueError("empty execution window")
    return w


def per_core_btd(trace: ThermalTrace, baselines: BaselineSet) -> list[int]:
    """BTD of each trace core: its in-window peak against its baseline."""
    peaks = _window_degrees(trace).max(axis=1)
    return [int(btd(int(t), b)) for t, b in zip(peaks, _aligned_baselines(trace, baselines))]


def tau(trace: ThermalTrace, baselines: BaselineSet) -> int:
    return max(per_core_btd(trace, baselines))


def sptd(avg_temps: Sequence[float]) -> list[float]:
    """All n(n-1)/2 unordered pairwise absolute differences."""
    if len(avg_temps) < 2:
        raise ValueError("need at least 2 cores")
    return [abs(a - b) for a, b in combinations(avg_temps, 2)]


def least_average(series_c: np.ndarray, window: int) -> float:
    """Minimum of the ``window``-sample moving average (whole series if shorter)."""
    x = np.asarray(series_c, dtype=float)
    if x.size <= window:
        return float(x.mean())
    return float(np.convolve(x, np.ones(window) / window, mode="valid").min())


def omega(trace: ThermalTrace, baselines: Optional[BaselineSet] = None, mode: str = EMPIRICAL,
          avg_window_ms: int = 1000) -> int:
    """
    Spatial deviation over the execution window.

    ``spatial-eq5``: largest pairwise difference between per-core mean
    temperatures. ``empirical-fig14``: largest per-core gap between the
    in-window peak and the lowest 1 s moving average of that core.
    ``baselines`` is accepted for call symmetry with :func:`tau`; neither
    mode uses it.
    """
    if trace.n_cores < 2:
        raise ValueError("need at least 2 cores")
    if mode == SPATIAL:
        means = trace.window().mean(axis=1) / 1000.0
        return int(max(sptd([_whole(m) for m in means])))
    if mode == EMPIRICAL:
        w = _window_degrees(trace)
        n = max(1, avg_window_ms // trace.period_ms)
        celsius = trace.window() / 1000.0
        return max(int(w[c].max()) - _whole(least_average(celsius[c], n)) for c in range(trace.n_cores))
    raise ValueError(f"unknown omega mode {mode!r}; choose from {OMEGA_MODES}")


def chip_max_series(trace: ThermalTrace) -> np.ndarray:
    """Per-sample hottest core, whole degC."""
    return trace.whole_degrees().max(axis=0)


def extract_cycles(x: Sequence[float], hysteresis: float = 1.0) -> list[tuple[int, int, int]]:
    """
    Alternating peak/trough extraction with hysteresis.

    A peak counts when the series rose by more than ``hysteresis`` from the
    preceding trough and later falls by more than ``hysteresis`` from it.
    Returns ``(trough_before, peak, trough_after)`` index triples; the last
    trough is the lowest point after the final peak if no further rise
    confirms it.
    """
    x = np.asarray(x)
    n = len(x)
    out: list[tuple[int, int, int]] = []
    if n < 3:
        return out
    h = hysteresis
    mode = 0  # 0 undetermined, +1 seeking a peak, -1 seeking a trough
    lo = hi = 0
    trough = peak = 0
    pending: Optional[tuple[int, int]] = None
    for i in range(1, n):
        v = x[i]
        if mode == 0:
            if v < x[lo]:
                lo = i
            if v > x[hi]:
                hi = i
            if v - x[lo] > h:
                mode, trough, peak = 1, lo, i
            elif x[hi] - v > h:
                mode, trough = -1, i
        elif mode == 1:
            if v > x[peak]:
                peak = i
            elif x[peak] - v > h:
                pending = (trough, peak)
                mode, trough = -1, i
        else:
            if v < x[trough]:
                trough = i
            elif v - x[trough] > h:
                if pending is not None:
                    out.append((pending[0], pending[1], trough))
                    pending = None
                mode, peak = 1, i
    if pending is not None:
        out.append((pending[0], pending[1], trough))
    return out


def cycle_events(x: Sequence[float], hysteresis: float = 1.0) -> list[CycleEvent]:
    x = np.asarray(x)
    return [CycleEvent(float(x[p] - min(x[a], x[b])), float(x[p]) + 273.15, int(a), int(p), int(b))
            for a, p, b in extract_cycles(x, hysteresis)]


def theta(trace: ThermalTrace, hysteresis: float = 1.0) -> int:
    """Thermal cycles of the chip-level maximum over the full trace."""
    if hysteresis < 1:
        raise ValueError("hysteresis must be >= 1 degC")
    return len(extract_cycles(chip_max_series(trace), hysteresis))


def tsmp(tau_: int, omega_: int, theta_: int) -> float:
    total = tau_ + omega_ + theta_
    if total < 1:
        raise DegenerateRunError("degenerate run: tau + omega + theta < 1")
    return 1.0 / total


def security_report(trace: ThermalTrace, baselines: BaselineSet, mode: str = EMPIRICAL,
                    hysteresis: float = 1.0) -> SecurityReport:
    t = tau(trace, baselines)
    spatial = omega(trace, baselines, SPATIAL)
    empirical = omega(trace, baselines, EMPIRICAL)
    if mode not in OMEGA_MODES:
        raise ValueError(f"unknown omega mode {mode!r}")
    w = spatial if mode == SPATIAL else empirical
    th = theta(trace, hysteresis)
    return SecurityReport(t, w, th, tsmp(t, w, th), mode, spatial, empirical)


def reduction(theta_other: int, theta_date: int) -> float:
    """Percentage fewer cycles than ``theta_other``; negative means more."""
    if theta_other <= 0:
        raise ZeroDivisionError("reference cycle count must be positive")
    return 100.0 * (theta_other - theta_date) / theta_other
