"""
Thermal side-channel attack harness.

Each secret is modelled as a workload whose only distinguishing feature is
when bursts of full load hit one core. Traces are simulated under a
governor, turned into fixed-length vectors and classified with 1-nearest
neighbour. Comparing holdout accuracy under the performance governor and
under the defense shows how much the defense hides.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .chip import ChipConfig, ThermalTrace, WorkloadSpec, read_trace, write_trace
from .date import AppProfile, DateGovernor, learn
from .governors import Governor, Performance
from .io import atomic_write
from .sim import PowerParams, run, with_jitter
from .workloads import burst_code

SPLITS = ("train", "validation", "holdout")
FEATURE_POINTS = 128

# burst start offsets (ms, at 2 GHz) inside a 5 s task; each code moves
# one burst of a common rhythm by 400 ms
DEFAULT_CODES = {
    "123456": (500, 1500, 2500, 3500),
    "passw0rd": (500, 1500, 2900, 3500),
    "111111": (500, 1900, 2500, 3500),
    "football": (500, 1500, 2500, 3900),
}


@dataclass(frozen=True)
class SecretClass:
    label: str
    workload: WorkloadSpec


def default_classes(n_cores: int = 4, core: int = 2, deadline_ms: float = 10_000) -> list[SecretClass]:
    return [SecretClass(label, burst_code(label, offs, n_cores=n_cores, core=core, deadline_ms=deadline_ms))
            for label, offs in DEFAULT_CODES.items()]


@dataclass(frozen=True)
class AttackDataset:
    traces: tuple[ThermalTrace, ...]
    labels: tuple[str, ...]
    splits: tuple[str, ...]
    seed: int
    classes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not len(self.traces) == len(self.labels) == len(self.splits):
            raise ValueError("traces, labels and splits differ in length")
        bad = set(self.splits) - set(SPLITS)
        if bad:
            raise ValueError(f"unknown split names {sorted(bad)}")
        if not self.classes:
            object.__setattr__(self, "classes", tuple(dict.fromkeys(self.labels)))

    def indices(self, split: str) -> list[int]:
        return [i for i, s in enumerate(self.splits) if s == split]

    def subset(self, split: str) -> tuple[list[ThermalTrace], list[str]]:
        idx = self.indices(split)
        return [self.traces[i] for i in idx], [self.labels[i] for i in idx]


def split_counts(runs_per_class: int) -> tuple[int, int, int]:
    """(train, validation, holdout) per class: 20% holdout, then 75/25."""
    holdout = int(round(0.2 * runs_per_class))
    rest = runs_per_class - holdout
    train = int(round(0.75 * rest))
    return train, rest - train, holdout


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("THERMOGUARD_THREADS", "1")))
    except ValueError:
        return 1


GovernorChoice = Union[Governor, Mapping[str, Governor]]


def _sim_one(job) -> ThermalTrace:
    config, workload, governor, params, run_seed, jitter, noise = job
    rng = np.random.default_rng(run_seed)
    p = with_jitter(params, rng, jitter) if jitter else params
    sim_seed = int(rng.integers(2**31))
    return run(config, workload, governor, p, sim_seed, noise_sigma=noise)[0]


def gen_dataset(config: ChipConfig, governor: GovernorChoice, classes: Sequence[SecretClass],
                runs_per_class: int, seed: int, params: Optional[PowerParams] = None, *,
                jitter: float = 0.05, noise_sigma: float = 0.2) -> AttackDataset:
    """
    Simulate ``runs_per_class`` traces per class and split them.

    ``governor`` is either one governor for every class or a mapping from
    class label to governor (the defense needs a per-application profile).
    Every run draws its own power jitter and sensor noise from a child of
    ``seed``.
    """
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    labels = [c.label for c in classes]
    if len(set(labels)) != len(labels):
        raise ValueError("class labels must be unique")
    if runs_per_class < 8:
        raise ValueError("runs_per_class must be >= 8")
    params = params or PowerParams()

    children = np.random.SeedSequence(seed).spawn(len(classes) * runs_per_class + 1)
    jobs = []
    for k, cls in enumerate(classes):
        gov = governor[cls.label] if isinstance(governor, Mapping) else governor
        for r in range(runs_per_class):
            child = children[k * runs_per_class + r]
            jobs.append((config, cls.workload, gov, params, child, jitter, noise_sigma))

    n = _threads()
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            traces = list(pool.map(_sim_one, jobs, chunksize=8))
    else:
        traces = [_sim_one(j) for j in jobs]

    n_train, n_val, n_hold = split_counts(runs_per_class)
    split_rng = np.random.default_rng(children[-1])
    splits: list[str] = []
    for _ in classes:
        order = np.array(["train"] * n_train + ["validation"] * n_val + ["holdout"] * n_hold)
        splits.extend(split_rng.permutation(order).tolist())
    out_labels = [c.label for c in classes for _ in range(runs_per_class)]
    return AttackDataset(tuple(traces), tuple(out_labels), tuple(splits), seed, tuple(labels))


def featurize(trace: ThermalTrace, points: int = FEATURE_POINTS) -> np.ndarray:
    """
    Per core: z-normalize (a constant series becomes zeros), linearly
    resample to ``points`` samples; then concatenate the cores.
    """
    x = trace.series.astype(float)
    if x.shape[1] == 0:
        raise ValueError("empty trace")
    mu = x.mean(axis=1, keepdims=True)
    sd = x.std(axis=1, keepdims=True)
    z = np.divide(x - mu, sd, out=np.zeros_like(x), where=sd > 0)
    src = np.linspace(0.0, 1.0, x.shape[1])
    dst = np.linspace(0.0, 1.0, points)
    return np.concatenate([np.interp(dst, src, row) for row in z])


@dataclass(frozen=True)
class NearestNeighbor:
    vectors: np.ndarray   # (n_train, n_features)
    labels: tuple[str, ...]

    def classify_vector(self, v: np.ndarray) -> str:
        d = np.einsum("ij,ij->i", self.vectors - v, self.vectors - v)
        return self.labels[int(np.argmin(d))]  # argmin keeps the lowest index on ties

    def to_json(self) -> str:
        return json.dumps({"labels": list(self.labels), "vectors": self.vectors.tolist()}) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "NearestNeighbor":
        d = json.loads(text)
        return cls(np.asarray(d["vectors"], dtype=float), tuple(d["labels"]))


def train(dataset: AttackDataset) -> NearestNeighbor:
    traces, labels = dataset.subset("train")
    if not traces:
        raise ValueError("empty training set")
    return NearestNeighbor(np.stack([featurize(t) for t in traces]), tuple(labels))


def classify(model: NearestNeighbor, trace: ThermalTrace) -> str:
    return model.classify_vector(featurize(trace))


@dataclass(frozen=True)
class EvalReport:
    classes: tuple[str, ...]
    confusion: np.ndarray   # rows: true class, columns: predicted

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion)) / self.total

    @property
    def per_class(self) -> dict[str, float]:
        rows = self.confusion.sum(axis=1)
        return {c: float(self.confusion[i, i] / rows[i]) if rows[i] else float("nan")
                for i, c in enumerate(self.classes)}

    def as_dict(self) -> dict:
        return {"classes": list(self.classes), "confusion": self.confusion.tolist(),
                "accuracy": self.accuracy, "per_class": self.per_class}


def evaluate(model: Union[NearestNeighbor, Callable[[ThermalTrace], str]], dataset: AttackDataset,
             split: str = "holdout") -> EvalReport:
    traces, labels = dataset.subset(split)
    if not traces:
        raise ValueError(f"empty {split} split")
    predict = (lambda t: classify(model, t)) if isinstance(model, NearestNeighbor) else model
    pos = {c: i for i, c in enumerate(dataset.classes)}
    m = np.zeros((len(pos), len(pos)), dtype=int)
    for t, y in zip(traces, labels):
        m[pos[y], pos[predict(t)]] += 1
    return EvalReport(dataset.classes, m)


def learn_profiles(config: ChipConfig, classes: Sequence[SecretClass], seed: int = 0,
                   params: Optional[PowerParams] = None) -> dict[str, AppProfile]:
    return {c.label: learn(config, c.workload, None, None, seed, params).profile for c in classes}


@dataclass(frozen=True)
class Comparison:
    baseline: EvalReport
    defended: EvalReport

    @property
    def delta(self) -> float:
        return self.baseline.accuracy - self.defended.accuracy


def compare_governors(config: ChipConfig, classes: Sequence[SecretClass], runs_per_class: int, seed: int,
                      params: Optional[PowerParams] = None, *,
                      profiles: Optional[Mapping[str, AppProfile]] = None,
                      baseline: Optional[GovernorChoice] = None,
                      defended: Optional[GovernorChoice] = None) -> Comparison:
    """
    Same classes, same seed, two governors: performance (or ``baseline``)
    against the defense (or ``defended``). Profiles are learned first when
    neither ``profiles`` nor ``defended`` is given.
    """
    if defended is None:
        if profiles is None:
            profiles = learn_profiles(config, classes, seed, params)
        defended = {label: DateGovernor(p) for label, p in profiles.items()}
    baseline = baseline if baseline is not None else Performance()
    reports = []
    for gov in (baseline, defended):
        ds = gen_dataset(config, gov, classes, runs_per_class, seed, params)
        reports.append(evaluate(train(ds), ds))
    return Comparison(*reports)


# --- persistence ---------------------------------------------------------

MANIFEST = "manifest.json"


def save_dataset(ds: AttackDataset, directory: Union[str, Path], extra: Optional[dict] = None) -> None:
    d = Path(directory)
    (d / "traces").mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (t, y, s) in enumerate(zip(ds.traces, ds.labels, ds.splits)):
        name = f"traces/{i:05d}.csv"
        atomic_write(d / name, write_trace(t))
        entries.append({"file": name, "label": y, "split": s})
    doc = {"seed": ds.seed, "classes": list(ds.classes), "entries": entries}
    if extra:
        doc.update(extra)
    atomic_write(d / MANIFEST, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_dataset(directory: Union[str, Path]) -> AttackDataset:
    d = Path(directory)
    try:
        doc = json.loads((d / MANIFEST).read_text())
        entries = doc["entries"]
        traces = tuple(read_trace((d / e["file"]).read_text()) for e in entries)
        return AttackDataset(traces, tuple(e["label"] for e in entries), tuple(e["split"] for e in entries),
                             int(doc["seed"]), tuple(doc.get("classes", ())))
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as e:
        raise ValueError(f"bad dataset directory {d}: {e}") from None
