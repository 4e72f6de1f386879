"""
Reference DVFS governors: performance, ondemand-style and fixed frequency.

A governor is any callable ``(state, config, previous) -> GovernorSetting``
invoked by the simulator once per sampling period. ``previous`` is the
setting the governor itself returned last time (None on the first call).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional

from .chip import ChipConfig, snap_frequency

if TYPE_CHECKING:
    from .sim import SimState


@dataclass(frozen=True)
class GovernorSetting:
    """Requested frequency per cluster (``config.dvfs`` order) and thermal cap."""

    freqs: tuple[int, ...]
    temp_threshold: float

    def validate(self, config: ChipConfig) -> None:
        if len(self.freqs) != len(config.dvfs):
            raise ValueError(f"setting has {len(self.freqs)} frequencies for {len(config.dvfs)} clusters")
        for f, table in zip(self.freqs, config.dvfs):
            if f not in table.frequencies:
                raise ValueError(f"{f} MHz is not a level of cluster {table.cluster_id}")
        if self.temp_threshold <= config.ambient_temp:
            raise ValueError("temp_threshold must exceed ambient")


Governor = Callable[["SimState", ChipConfig, Optional[GovernorSetting]], GovernorSetting]


def performance_policy(state, config: ChipConfig, previous=None) -> GovernorSetting:
    return GovernorSetting(tuple(t.f_max for t in config.dvfs), config.max_temp)


def ondemand_policy(state, config: ChipConfig, previous=None, up_threshold: float = 0.8) -> GovernorSetting:
    """
    Jump to f_max when the busiest core of a cluster ran above
    ``up_threshold`` over the last period, otherwise scale proportionally.
    """
    if not 0 < up_threshold <= 1:
        raise ValueError("up_threshold must lie in (0, 1]")
    cluster_of = config.cluster_index()
    freqs = []
    for k, table in enumerate(config.dvfs):
        u = max((state.utilization[i] for i in range(config.n_cores) if cluster_of[i] == k), default=0.0)
        if u > up_threshold:
            freqs.append(table.f_max)
        else:
            freqs.append(snap_frequency(table, table.f_max * u / up_threshold))
    return GovernorSetting(tuple(freqs), config.max_temp)


class Ondemand:
    name = "ondemand"

    def __init__(self, up_threshold: float = 0.8):
        self.up_threshold = up_threshold

    def __call__(self, state, config, previous=None):
        return ondemand_policy(state, config, previous, self.up_threshold)


class Fixed:
    """Pin every cluster to the table level at or below ``mhz``."""

    def __init__(self, mhz: float, temp_threshold: Optional[float] = None):
        self.mhz = mhz
        self.temp_threshold = temp_threshold
        self.name = f"fixed:{mhz:g}"

    def __call__(self, state, config, previous=None):
        thr = config.max_temp if self.temp_threshold is None else self.temp_threshold
        return GovernorSetting(tuple(snap_frequency(t, self.mhz) for t in config.dvfs), thr)


class Performance:
    name = "performance"

    def __call__(self, state, config, previous=None):
        return performance_policy(state, config, previous)


def by_name(spec: str) -> Governor:
    """``performance``, ``ondemand`` or ``fixed:<MHz>``; ``date`` needs a profile (see date.py)."""
    if spec == "performance":
        return Performance()
    if spec == "ondemand":
        return Ondemand()
    if spec.startswith("fixed:"):
        try:
            return Fixed(float(spec.split(":", 1)[1]))
        except ValueError:
            raise ValueError(f"bad governor {spec!r}") from None
    raise ValueError(f"unknown governor {spec!r}")
