"""
The shipped defense scenario: the exynos5422-big preset running the
Blackscholes-like workload, scored under the performance governor and
under the profiled defense.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .chip import ChipConfig, WorkloadSpec, load_preset
from .date import AppProfile, DateGovernor, learn
from .governors import Performance
from .metrics import EMPIRICAL, SecurityReport, security_report
from .sim import PowerParams, baseline_run, run
from .workloads import blackscholes

PRESET = "exynos5422-big"
DEADLINE_MS = 30_000


@dataclass(frozen=True)
class Scenario:
    config: ChipConfig
    params: PowerParams
    workload: WorkloadSpec


@dataclass(frozen=True)
class Trial:
    seed: int
    performance: SecurityReport
    defended: SecurityReport
    profile: AppProfile
    defended_time_ms: float
    deadline_met: bool


def default_scenario() -> Scenario:
    doc = load_preset(PRESET)
    cfg = doc.chip
    return Scenario(cfg, PowerParams.from_mapping(doc.power), blackscholes(cfg.n_cores, DEADLINE_MS))


def trial(seed: int, scenario: Optional[Scenario] = None) -> Trial:
    """
    Profile with ``seed``, then measure fresh baselines and run both
    governors with the same run seed.
    """
    sc = scenario or default_scenario()
    profile = learn(sc.config, sc.workload, None, None, seed, sc.params).profile
    run_seed = seed + 10_000
    _, b_now = baseline_run(sc.config, 10_000, sc.params, run_seed)
    perf, _ = run(sc.config, sc.workload, Performance(), sc.params, run_seed)
    date, stats = run(sc.config, sc.workload, DateGovernor(profile, b_now), sc.params, run_seed)
    return Trial(seed, security_report(perf, b_now, EMPIRICAL), security_report(date, b_now, EMPIRICAL),
                 profile, stats.execution_time, stats.deadline_met)
