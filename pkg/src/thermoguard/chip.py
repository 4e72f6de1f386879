"""
Chip, workload and trace data model.

Everything here is an immutable value. Temperatures in traces are integer
milli-degrees Celsius, the same granularity Linux hwmon exposes; metrics
round to whole degrees themselves.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml


class ConfigError(ValueError):
    """Raised for malformed or invalid configuration documents."""


class TraceFormatError(ValueError):
    """Raised for malformed trace CSV text."""


@dataclass(frozen=True)
class CoreSpec:
    core_id: int
    cluster_id: int
    grid_position: tuple[int, int]
    has_sensor: bool = True


@dataclass(frozen=True)
class DvfsTable:
    """Discrete (MHz, V) operating points of one cluster, ascending."""

    cluster_id: int
    levels: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ConfigError(f"dvfs[{self.cluster_id}].levels: need at least 2 levels")
        freqs = [f for f, _ in self.levels]
        volts = [v for _, v in self.levels]
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise ConfigError(f"dvfs[{self.cluster_id}].levels: frequencies not strictly increasing")
        if any(b < a for a, b in zip(volts, volts[1:])):
            raise ConfigError(f"dvfs[{self.cluster_id}].levels: voltages decreasing")
        if freqs[0] <= 0 or volts[0] <= 0:
            raise ConfigError(f"dvfs[{self.cluster_id}].levels: non-positive operating point")

    @property
    def frequencies(self) -> tuple[int, ...]:
        return tuple(f for f, _ in self.levels)

    @property
    def f_min(self) -> int:
        return self.levels[0][0]

    @property
    def f_max(self) -> int:
        return self.levels[-1][0]

    def index(self, f: int) -> int:
        """Level index of a table member frequency."""
        for i, (fi, _) in enumerate(self.levels):
            if fi == f:
                return i
        raise ValueError(f"{f} MHz is not a level of cluster {self.cluster_id}")

    def voltage(self, f: int) -> float:
        return self.levels[self.index(f)][1]


def snap_frequency(table: DvfsTable, f: float) -> int:
    """Largest table frequency <= f, clamped to the minimum level."""
    best = table.f_min
    for fi, _ in table.levels:
        if fi <= f:
            best = fi
        else:
            break
    return best


@dataclass(frozen=True)
class ChipConfig:
    """
    A multi-core chip: cores, per-cluster DVFS tables and the lumped RC
    thermal network.

    ``coupling[i][j]`` is the lateral conductance between cores i and j in
    W/degC, ``ambient_conductance[i]`` the path from core i to ambient and
    ``heat_capacity[i]`` its thermal mass in J/degC. Core lists are indexed
    by position in ``cores``, not by ``core_id``.
    """

    cores: tuple[CoreSpec, ...]
    dvfs: tuple[DvfsTable, ...]
    coupling: tuple[tuple[float, ...], ...]
    ambient_conductance: tuple[float, ...]
    heat_capacity: tuple[float, ...]
    ambient_temp: float
    max_temp: float = 105.0
    sensor_resolution_mc: int = 1
    name: str = "custom"

    def __post_init__(self):
        n = len(self.cores)
        if n == 0:
            raise ConfigError("chip.cores: at least one core required")
        ids = [c.core_id for c in self.cores]
        if len(set(ids)) != n:
            raise ConfigError("chip.cores: duplicate core_id")
        pos = [c.grid_position for c in self.cores]
        if len(set(pos)) != n:
            raise ConfigError("chip.cores: duplicate grid_position")
        if len(self.coupling) != n or any(len(row) != n for row in self.coupling):
            raise ConfigError(f"chip.coupling: expected {n}x{n} matrix")
        for i in range(n):
            if self.coupling[i][i] != 0:
                raise ConfigError("chip.coupling: diagonal must be zero")
            for j in range(n):
                if self.coupling[i][j] < 0:
                    raise ConfigError("chip.coupling: negative conductance")
                if self.coupling[i][j] != self.coupling[j][i]:
                    raise ConfigError("chip.coupling: coupling not symmetric")
        if len(self.ambient_conductance) != n or min(self.ambient_conductance) <= 0:
            raise ConfigError("chip.ambient_conductance: must be strictly positive, one per core")
        if len(self.heat_capacity) != n or min(self.heat_capacity) <= 0:
            raise ConfigError("chip.heat_capacity: must be strictly positive, one per core")
        clusters = {t.cluster_id for t in self.dvfs}
        if len(clusters) != len(self.dvfs):
            raise ConfigError("dvfs: duplicate cluster table")
        for c in self.cores:
            if c.cluster_id not in clusters:
                raise ConfigError(f"dvfs: no table for cluster {c.cluster_id} (core {c.core_id})")
        if self.sensor_resolution_mc < 1:
            raise ConfigError("chip.sensor_resolution_mc: must be >= 1")
        if self.max_temp <= self.ambient_temp:
            raise ConfigError("chip.max_temp: must exceed ambient_temp")

    @property
    def n_cores(self) -> int:
        return len(self.cores)

    @property
    def core_ids(self) -> tuple[int, ...]:
        return tuple(c.core_id for c in self.cores)

    @property
    def sensor_indices(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.cores) if c.has_sensor)

    def table(self, cluster_id: int) -> DvfsTable:
        for t in self.dvfs:
            if t.cluster_id == cluster_id:
                return t
        raise KeyError(cluster_id)

    def cluster_index(self) -> tuple[int, ...]:
        """For each core, the position of its cluster's table in ``dvfs``."""
        pos = {t.cluster_id: k for k, t in enumerate(self.dvfs)}
        return tuple(pos[c.cluster_id] for c in self.cores)

    @property
    def sensor_cluster(self) -> int:
        """Position in ``dvfs`` of the cluster whose cores carry sensors."""
        idx = self.cluster_index()
        for i in self.sensor_indices:
            return idx[i]
        return 0

    def conductance_matrix(self) -> np.ndarray:
        """Laplacian of the coupling network plus the ambient paths."""
        g = np.array(self.coupling, dtype=float)
        lap = np.diag(g.sum(axis=1)) - g
        return lap + np.diag(self.ambient_conductance)


@dataclass(frozen=True)
class Phase:
    """One workload phase; exactly one of ``duration_ms`` / ``work_mcycles``."""

    utilization: tuple[float, ...]
    duration_ms: Optional[float] = None
    work_mcycles: Optional[float] = None

    def __post_init__(self):
        if (self.duration_ms is None) == (self.work_mcycles is None):
            raise ConfigError("workload.phases: give exactly one of duration_ms / work_mcycles")
        if any(not 0.0 <= u <= 1.0 for u in self.utilization):
            raise ConfigError("workload.phases.utilization: values must lie in [0, 1]")
        amount = self.duration_ms if self.duration_ms is not None else self.work_mcycles
        if amount <= 0:
            raise ConfigError("workload.phases: duration/work must be positive")
        if self.work_mcycles is not None and max(self.utilization, default=0) == 0:
            raise ConfigError("workload.phases: work phase needs a busy core")


@dataclass(frozen=True)
class WorkloadSpec:
    name: str
    phases: tuple[Phase, ...]
    deadline: float

    def __post_init__(self):
        if self.deadline <= 0:
            raise ConfigError("workload.deadline_ms: must be positive")

    def check_cores(self, n_cores: int) -> None:
        for p in self.phases:
            if len(p.utilization) != n_cores:
                raise ConfigError(
                    f"workload.phases.utilization: expected {n_cores} values, got {len(p.utilization)}")

    @property
    def total_work(self) -> float:
        return sum(p.work_mcycles or 0.0 for p in self.phases)


@dataclass(frozen=True, eq=False)
class ThermalTrace:
    """
    Per-core temperature samples at a fixed period.

    ``series`` is an int64 array of shape (n_cores, n_samples) in milli-degC.
    ``start_marker``/``end_marker`` are sample indices bounding the task
    execution window (inclusive).
    """

    core_ids: tuple[int, ...]
    series: np.ndarray
    period_ms: int = 100
    start_marker: int = 0
    end_marker: int = 0
    t0_ms: int = 0

    def __post_init__(self):
        arr = np.array(self.series, dtype=np.int64, copy=True)
        if arr.ndim != 2 or arr.shape[0] != len(self.core_ids):
            raise TraceFormatError("series must be (n_cores, n_samples)")
        if arr.shape[1] == 0:
            raise TraceFormatError("empty trace")
        if self.period_ms <= 0:
            raise TraceFormatError("period_ms must be positive")
        if not 0 <= self.start_marker <= self.end_marker < arr.shape[1]:
            raise TraceFormatError(
                f"markers out of range: {self.start_marker}..{self.end_marker} for {arr.shape[1]} samples")
        arr.flags.writeable = False
        object.__setattr__(self, "series", arr)
        object.__setattr__(self, "core_ids", tuple(int(c) for c in self.core_ids))

    def __eq__(self, other):
        if not isinstance(other, ThermalTrace):
            return NotImplemented
        return (self.core_ids == other.core_ids and self.period_ms == other.period_ms
                and self.start_marker == other.start_marker and self.end_marker == other.end_marker
                and self.t0_ms == other.t0_ms and np.array_equal(self.series, other.series))

    def __len__(self) -> int:
        return self.series.shape[1]

    @property
    def n_cores(self) -> int:
        return self.series.shape[0]

    @property
    def celsius(self) -> np.ndarray:
        return self.series / 1000.0

    def whole_degrees(self) -> np.ndarray:
        """Samples rounded half-up to integer degC."""
        return np.floor_divide(self.series + 500, 1000)

    def window(self) -> np.ndarray:
        """milli-degC samples inside the execution window."""
        return self.series[:, self.start_marker:self.end_marker + 1]


@dataclass(frozen=True)
class BaselineSet:
    """Idle temperature per sensored core, degC."""

    core_ids: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.core_ids) != len(self.values):
            raise ValueError("one baseline per core required")

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.core_ids, self.values))


# ---------------------------------------------------------------------------
# configuration documents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfigDocument:
    chip: ChipConfig
    power: dict = field(default_factory=dict)
    workload: Optional[WorkloadSpec] = None


def _grid_coupling(cores: Sequence[CoreSpec], g: float) -> tuple[tuple[float, ...], ...]:
    n = len(cores)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            (ri, ci), (rj, cj) = cores[i].grid_position, cores[j].grid_position
            same = cores[i].cluster_id == cores[j].cluster_id
            row.append(g if same and abs(ri - rj) + abs(ci - cj) == 1 else 0.0)
        rows.append(tuple(row))
    return tuple(rows)


def _per_core(value, n: int, name: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),) * n
    if not isinstance(value, list) or len(value) != n:
        raise ConfigError(f"{name}: expected a number or a list of {n} numbers")
    return tuple(float(v) for v in value)


def _parse_dvfs(entries) -> tuple[DvfsTable, ...]:
    if not isinstance(entries, list) or not entries:
        raise ConfigError("dvfs: expected a non-empty list of cluster tables")
    tables = []
    for k, e in enumerate(entries):
        try:
            cluster = int(e["cluster"])
            freqs = [int(f) for f in e["frequencies_mhz"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"dvfs[{k}]: missing or bad key {exc}") from None
        if "voltages_v" in e:
            volts = [float(v) for v in e["voltages_v"]]
            if len(volts) != len(freqs):
                raise ConfigError(f"dvfs[{k}].voltages_v: length differs from frequencies_mhz")
            levels = sorted(zip(freqs, volts))
        elif "voltage_range_v" in e:
            vlo, vhi = (float(v) for v in e["voltage_range_v"])
            freqs.sort()
            lo, hi = freqs[0], freqs[-1]
            span = (hi - lo) or 1
            levels = [(f, round(vlo + (vhi - vlo) * (f - lo) / span, 6)) for f in freqs]
        else:
            raise ConfigError(f"dvfs[{k}]: need voltages_v or voltage_range_v")
        tables.append(DvfsTable(cluster, tuple(levels)))
    return tuple(tables)


def _parse_chip(chip: dict, dvfs: tuple[DvfsTable, ...]) -> ChipConfig:
    if not isinstance(chip, dict):
        raise ConfigError("chip: expected a mapping")
    raw_cores = chip.get("cores")
    if not isinstance(raw_cores, list) or not raw_cores:
        raise ConfigError("chip.cores: expected a non-empty list")
    cores = []
    for k, c in enumerate(raw_cores):
        try:
            pos = c.get("pos", [0, k])
            cores.append(CoreSpec(int(c["id"]), int(c.get("cluster", 0)),
                                  (int(pos[0]), int(pos[1])), bool(c.get("sensor", True))))
        except (KeyError, TypeError, ValueError, IndexError) as exc:
            raise ConfigError(f"chip.cores[{k}]: bad entry ({exc})") from None
    n = len(cores)
    if "coupling" in chip:
        try:
            coupling = tuple(tuple(float(x) for x in row) for row in chip["coupling"])
        except (TypeError, ValueError):
            raise ConfigError("chip.coupling: expected a numeric matrix") from None
    else:
        coupling = _grid_coupling(cores, float(chip.get("neighbor_conductance", 0.0)))
    try:
        return ChipConfig(
            cores=tuple(cores),
            dvfs=dvfs,
            coupling=coupling,
            ambient_conductance=_per_core(chip.get("ambient_conductance"), n, "chip.ambient_conductance"),
            heat_capacity=_per_core(chip.get("heat_capacity"), n, "chip.heat_capacity"),
            ambient_temp=float(chip.get("ambient_temp", 25.0)),
            max_temp=float(chip.get("max_temp", 105.0)),
            sensor_resolution_mc=int(chip.get("sensor_resolution_mc", 1)),
            name=str(chip.get("name", "custom")),
        )
    except TypeError as exc:
        raise ConfigError(f"chip: {exc}") from None


def parse_workload(doc: dict) -> WorkloadSpec:
    if not isinstance(doc, dict):
        raise ConfigError("workload: expected a mapping")
    phases = []
    for k, p in enumerate(doc.get("phases") or []):
        try:
            phases.append(Phase(
                utilization=tuple(float(u) for u in p["utilization"]),
                duration_ms=None if p.get("duration_ms") is None else float(p["duration_ms"]),
                work_mcycles=None if p.get("work_mcycles") is None else float(p["work_mcycles"]),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"workload.phases[{k}]: bad entry ({exc})") from None
    if "deadline_ms" not in doc:
        raise ConfigError("workload.deadline_ms: missing")
    return WorkloadSpec(str(doc.get("name", "workload")), tuple(phases), float(doc["deadline_ms"]))


def load_document(text: str) -> ConfigDocument:
    """
    Parse a YAML configuration document with sections ``chip``, ``dvfs``
    and optionally ``power`` and ``workload``.

    Raises
    ------
    ConfigError
        On YAML syntax errors (message carries the line number) or when an
        invariant is violated (message names the offending field).
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark is not None else "unknown line"
        raise ConfigError(f"parse error at {where}: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(doc, dict):
        raise ConfigError("parse error at line 1: document must be a mapping")
    for key in ("chip", "dvfs"):
        if key not in doc:
            raise ConfigError(f"{key}: missing section")
    chip = _parse_chip(doc["chip"], _parse_dvfs(doc["dvfs"]))
    workload = None
    if doc.get("workload") is not None:
        workload = parse_workload(doc["workload"])
        workload.check_cores(chip.n_cores)
    power = doc.get("power") or {}
    if not isinstance(power, dict):
        raise ConfigError("power: expected a mapping")
    return ConfigDocument(chip, dict(power), workload)


def load_config(text: str) -> ChipConfig:
    return load_document(text).chip


PRESETS = ("exynos5422-big", "exynos5422", "exynos9810")


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("thermoguard").joinpath("presets").joinpath(f"{name}.yaml").read_text()


def load_preset(name: str) -> ConfigDocument:
    return load_document(preset_text(name))


def resolve_document(ref: str) -> ConfigDocument:
    """A preset name or a path to a YAML document."""
    if ref in PRESETS:
        return load_preset(ref)
    path = Path(ref)
    if not path.is_file():
        raise ConfigError(f"no such preset or file: {ref}")
    return load_document(path.read_text())


# ---------------------------------------------------------------------------
# trace CSV
# ---------------------------------------------------------------------------

_COMMENT = re.compile(r"#\s*(\w+)\s*=\s*(-?\d+)\s*$")


def write_trace(trace: ThermalTrace) -> str:
    """Canonical CSV text: marker comments, header, sample-major rows."""
    buf = io.StringIO()
    t0, p = trace.t0_ms, trace.period_ms
    buf.write(f"# period_ms={p}\n")
    buf.write(f"# start_ms={t0 + trace.start_marker * p}\n")
    buf.write(f"# end_ms={t0 + trace.end_marker * p}\n")
    buf.write("time_ms,core,temp_mc\n")
    series = trace.series
    for k in range(series.shape[1]):
        t = t0 + k * p
        for c, cid in enumerate(trace.core_ids):
            buf.write(f"{t},{cid},{series[c, k]}\n")
    return buf.getvalue()


def read_trace(text: str) -> ThermalTrace:
    meta: dict[str, int] = {}
    rows: list[tuple[int, int, int]] = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _COMMENT.match(line)
            if m:
                meta[m.group(1)] = int(m.group(2))
            continue
        if not header_seen:
            if line.replace(" ", "") != "time_ms,core,temp_mc":
                raise TraceFormatError(f"line {lineno}: expected header time_ms,core,temp_mc")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise TraceFormatError(f"line {lineno}: malformed row")
        try:
            rows.append((int(parts[0]), int(parts[1]), int(parts[2])))
        except ValueError:
            raise TraceFormatError(f"line {lineno}: malformed row") from None
    if not header_seen:
        raise TraceFormatError("missing header")
    if not rows:
        raise TraceFormatError("empty trace")

    times: list[int] = []
    by_time: dict[int, dict[int, int]] = {}
    for t, c, v in rows:
        if t not in by_time:
            if times and t <= times[-1]:
                raise TraceFormatError(f"non-monotone timestamps at time_ms={t}")
            times.append(t)
            by_time[t] = {}
        elif t != times[-1]:
            raise TraceFormatError(f"non-monotone timestamps at time_ms={t}")
        if c in by_time[t]:
            raise TraceFormatError(f"duplicate core {c} at time_ms={t}")
        by_time[t][c] = v
    core_ids = sorted(by_time[times[0]])
    for t in times:
        if sorted(by_time[t]) != core_ids:
            raise TraceFormatError(f"inconsistent core set at time_ms={t}")

    if len(times) > 1:
        period = times[1] - times[0]
    else:
        period = meta.get("period_ms", 100)
    if "period_ms" in meta and meta["period_ms"] != period:
        raise TraceFormatError("period_ms comment disagrees with timestamps")
    if period <= 0 or any(b - a != period for a, b in zip(times, times[1:])):
        raise TraceFormatError("timestamps must advance by a constant period")

    t0 = times[0]
    series = np.array([[by_time[t][c] for t in times] for c in core_ids], dtype=np.int64)

    def marker(key: str, default: int) -> int:
        if key not in meta:
            return default
        off = meta[key] - t0
        if off % period:
            raise TraceFormatError(f"{key} not aligned to a sample")
        return off // period

    return ThermalTrace(tuple(core_ids), series, period, marker("start_ms", 0),
                        marker("end_ms", len(times) - 1), t0)


def write_baselines(b: BaselineSet) -> str:
    lines = ["core,baseline_mc"]
    lines += [f"{c},{int(round(v * 1000))}" for c, v in zip(b.core_ids, b.values)]
    return "\n".join(lines) + "\n"


def read_baselines(text: str) -> BaselineSet:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0].replace(" ", "") != "core,baseline_mc":
        raise TraceFormatError("baseline file needs header core,baseline_mc")
    ids, vals = [], []
    for k, ln in enumerate(lines[1:], 2):
        try:
            c, v = (int(x) for x in ln.split(","))
        except ValueError:
            raise TraceFormatError(f"line {k}: malformed row") from None
        ids.append(c)
        vals.append(v / 1000.0)
    if not ids:
        raise TraceFormatError("empty baseline file")
    return BaselineSet(tuple(ids), tuple(vals))
