"""
Thermal side-channel defense governor: offline profiling plus a runtime
decision rule.

Profiling (:func:`learn`) sweeps thermal caps and DVFS levels, keeping the
(cap, frequency) pair with the smallest tau + omega + theta that still
meets the execution-time deadline. It also fits the linear
temperature/frequency model ``t = alpha * f + beta``.

At runtime (:class:`DateGovernor`) the profiled frequency is shifted by the
change in idle baseline since profiling (:func:`decide`), and whenever a
core goes above the cap the frequency is lowered by the amount that model
says buys 1 degC (:func:`enforce_cap`).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .chip import BaselineSet, ChipConfig, DvfsTable, WorkloadSpec, snap_frequency
from .governors import GovernorSetting
from .metrics import EMPIRICAL, security_report
from .sim import PowerParams, baseline_run, run

log = logging.getLogger(__name__)

DEFAULT_CAPS = (70.0, 75.0, 80.0, 85.0, 90.0)


class InfeasibleDeadline(RuntimeError):
    pass


class DegenerateFit(ValueError):
    pass


@dataclass(frozen=True)
class ProfilingGrid:
    t_available: tuple[float, ...] = DEFAULT_CAPS

    def __post_init__(self):
        caps = tuple(float(c) for c in self.t_available)
        if not caps:
            raise ValueError("t_available must not be empty")
        if any(b <= a for a, b in zip(caps, caps[1:])):
            raise ValueError("t_available must be strictly ascending")
        object.__setattr__(self, "t_available", caps)


@dataclass(frozen=True)
class AppProfile:
    t_threshold: float   # degC
    f_app: int           # MHz
    alpha: float         # degC / MHz
    beta: float          # degC
    baselines: BaselineSet

    def validate(self, table: DvfsTable) -> None:
        if not self.alpha > 0:
            raise ValueError("profile alpha must be positive")
        if self.f_app not in table.frequencies:
            raise ValueError(f"f_app {self.f_app} MHz is not a table level")
        if self.t_threshold <= max(self.baselines.values):
            raise ValueError("t_threshold must exceed every baseline")

    def to_json(self) -> str:
        return json.dumps({
            "t_threshold_c": self.t_threshold,
            "f_app_mhz": self.f_app,
            "alpha_c_per_mhz": self.alpha,
            "beta_c": self.beta,
            "core_ids": list(self.baselines.core_ids),
            "baseline_mc": [int(round(v * 1000)) for v in self.baselines.values],
        }, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "AppProfile":
        try:
            d = json.loads(text)
            mc = [int(v) for v in d["baseline_mc"]]
            ids = tuple(int(c) for c in d.get("core_ids", range(len(mc))))
            return cls(float(d["t_threshold_c"]), int(d["f_app_mhz"]), float(d["alpha_c_per_mhz"]),
                       float(d["beta_c"]), BaselineSet(ids, tuple(v / 1000.0 for v in mc)))
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"bad profile record: {e}") from None


@dataclass(frozen=True)
class ProfilePoint:
    """One simulated (cap, frequency) run of a profiling campaign."""
    cap: float
    freq: int
    tau: int
    omega: int
    theta: int
    peak_temp: float
    execution_time: float
    deadline_met: bool

    @property
    def objective(self) -> int:
        return self.tau + self.omega + self.theta


@dataclass(frozen=True)
class LearnResult:
    profile: AppProfile
    best: ProfilePoint
    points: tuple[ProfilePoint, ...]


def fit_alpha_beta(samples: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares line ``t = alpha * f + beta`` through (f, t) samples."""
    if len(samples) < 2:
        raise DegenerateFit("degenerate fit: need at least 2 samples")
    f = np.array([s[0] for s in samples], dtype=float)
    t = np.array([s[1] for s in samples], dtype=float)
    if np.ptp(f) == 0:
        raise DegenerateFit("degenerate fit: all frequencies identical")
    fc = f - f.mean()
    alpha = float(fc @ (t - t.mean()) / (fc @ fc))
    return alpha, float(t.mean() - alpha * f.mean())


def predict_frequency(t2: float, t1: float, f1: float, alpha: float) -> float:
    """Frequency expected to reach ``t2`` given a known point (f1, t1) on the line."""
    return (t2 - t1) / alpha + f1


def _controlled_table(config: ChipConfig) -> tuple[int, DvfsTable]:
    k = config.sensor_cluster
    return k, config.dvfs[k]


def _setting(config: ChipConfig, k: int, f: int, threshold: float) -> GovernorSetting:
    freqs = [t.f_max for t in config.dvfs]
    freqs[k] = f
    return GovernorSetting(tuple(freqs), threshold)


class _Pinned:
    """Profiling governor: the sensored cluster pinned to ``freq`` under ``cap``."""

    def __init__(self, k: int, freq: int, cap: float):
        self.k, self.freq, self.cap = k, freq, cap

    def __call__(self, state, config, previous=None):
        return _setting(config, self.k, self.freq, self.cap)


def profile_point(config: ChipConfig, workload: WorkloadSpec, baselines: BaselineSet, cap: float, freq: int,
                  params: Optional[PowerParams] = None, seed: int = 0) -> ProfilePoint:
    k, _ = _controlled_table(config)
    trace, stats = run(config, workload, _Pinned(k, freq, cap), params, seed)
    r = security_report(trace, baselines, EMPIRICAL)
    return ProfilePoint(cap, freq, r.tau, r.omega, r.theta, stats.peak_temp, stats.execution_time,
                        stats.deadline_met)


def learn(config: ChipConfig, workload: WorkloadSpec, deadline: Optional[float] = None,
          grid: Optional[ProfilingGrid] = None, seed: int = 0,
          params: Optional[PowerParams] = None) -> LearnResult:
    """
    Offline profiling search.

    For every cap, start at f_max and keep stepping one table level down
    while the run meets the deadline. Among the runs that met it, the one
    with the smallest tau + omega + theta wins; ties go to the lower cap,
    then the lower frequency. ``t_threshold`` is the winner's peak core
    temperature and (alpha, beta) are fitted over every profiling run.
    """
    grid = grid or ProfilingGrid()
    if deadline is not None:
        workload = replace(workload, deadline=float(deadline))
    k, table = _controlled_table(config)

    probe = run(config, workload, _Pinned(k, table.f_max, config.max_temp), params, seed)[1]
    if not probe.deadline_met:
        raise InfeasibleDeadline(
            f"infeasible deadline: {workload.deadline:.0f} ms, f_max run takes {probe.execution_time:.0f} ms")
    _, baselines = baseline_run(config, 10_000, params, seed)

    points: list[ProfilePoint] = []
    for cap in grid.t_available:
        for i in range(len(table.levels) - 1, -1, -1):
            p = profile_point(config, workload, baselines, cap, table.levels[i][0], params, seed)
            points.append(p)
            if not p.deadline_met:
                break

    feasible = [p for p in points if p.deadline_met]
    if not feasible:
        raise InfeasibleDeadline("infeasible deadline: no (cap, frequency) pair meets it")
    best = min(feasible, key=lambda p: (p.objective, p.cap, p.freq))
    alpha, beta = fit_alpha_beta([(p.freq, p.peak_temp) for p in points])
    if alpha <= 0:
        raise DegenerateFit(f"degenerate fit: non-positive slope {alpha:.3g} degC/MHz")
    profile = AppProfile(best.peak_temp, best.freq, alpha, beta, baselines)
    return LearnResult(profile, best, tuple(points))


def baseline_diff(profile: AppProfile, now: BaselineSet) -> list[float]:
    """Per-core profiling baseline minus current baseline (positive: cooler now)."""
    if tuple(profile.baselines.core_ids) != tuple(now.core_ids):
        raise ValueError(f"core sets differ: {profile.baselines.core_ids} vs {now.core_ids}")
    return [a - b for a, b in zip(profile.baselines.values, now.values)]


def decide(profile: AppProfile, b_diff, table: DvfsTable) -> tuple[int, float]:
    """
    Runtime (frequency, threshold) for a baseline shift.

    ``b_diff`` may be a per-core list, in which case the smallest entry
    governs. The frequency follows the fitted line: ``f_app + b_diff / alpha``
    snapped to the table. When a positive shift would ask for more than
    f_max the frequency is left at f_app and the cap moves up instead.
    """
    d = float(min(b_diff)) if np.ndim(b_diff) else float(b_diff)
    if d == 0:
        return profile.f_app, profile.t_threshold
    raw = profile.f_app + d / profile.alpha
    if d > 0 and raw > table.f_max:
        return profile.f_app, profile.t_threshold + d
    return snap_frequency(table, raw), profile.t_threshold


def enforce_cap(setting: GovernorSetting, temps: Sequence[float], alpha: float, table: DvfsTable,
                cluster: int = 0) -> GovernorSetting:
    """
    Cap check for one cluster: if any of ``temps`` is above the setting's
    threshold, lower that cluster's frequency by the ``1 / alpha`` MHz that
    buys 1 degC, and by at least one table level.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    f_now = setting.freqs[cluster]
    if max(temps) <= setting.temp_threshold:
        return setting
    i = table.index(f_now)
    if i == 0:
        log.warning("cap %.1f degC exceeded at the lowest level %d MHz; holding",
                    setting.temp_threshold, f_now)
        return setting
    f = snap_frequency(table, f_now - 1.0 / alpha)
    if f >= f_now:
        f = table.levels[i - 1][0]
    freqs = list(setting.freqs)
    freqs[cluster] = f
    return replace(setting, freqs=tuple(freqs))


class DateGovernor:
    """
    Runtime governor for a profiled application.

    Controls the sensored cluster; every other cluster is left at f_max.
    Frequency reductions from :func:`enforce_cap` persist for the rest of
    the run.
    """

    name = "date"

    def __init__(self, profile: AppProfile, b_now: Optional[BaselineSet] = None):
        self.profile = profile
        self.b_now = b_now or profile.baselines

    def __call__(self, state, config: ChipConfig, previous: Optional[GovernorSetting] = None):
        k, table = _controlled_table(config)
        if previous is None:
            f, thr = decide(self.profile, baseline_diff(self.profile, self.b_now), table)
            previous = _setting(config, k, f, thr)
        cores = [i for i, c in enumerate(config.cluster_index()) if c == k]
        return enforce_cap(previous, [state.temps[i] for i in cores], self.profile.alpha, table, k)


def rerun_meets_deadline(config: ChipConfig, workload: WorkloadSpec, profile: AppProfile,
                         params: Optional[PowerParams] = None, seed: int = 0) -> bool:
    return run(config, workload, DateGovernor(profile), params, seed)[1].deadline_met


__all__ = [
    "AppProfile", "DateGovernor", "DegenerateFit", "InfeasibleDeadline", "LearnResult", "ProfilePoint",
    "ProfilingGrid", "baseline_diff", "decide", "enforce_cap", "fit_alpha_beta", "learn", "predict_frequency",
    "profile_point", "rerun_meets_deadline",
]
