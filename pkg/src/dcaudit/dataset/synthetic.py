"""The three-variable (a, b, c) toy dataset.

a and b are categorical over {0, 1, 2}; c is continuous on [0, 1].  Six of
the nine (a, b) pairs are normal, each with its own truncated-Gaussian band
for c.  The other three pairs only ever appear as local anomalies.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .schema import ContinuousFeature, LabeledDataset, Schema

C_SIGMA = 0.08
BAND_HALF_WIDTH = 3 * C_SIGMA
C_LOW, C_HIGH = 0.1, 0.9

# (a, b) -> centre of its c band
NORMAL_COMBOS: dict[tuple[int, int], float] = {
    (0, 0): 0.20,
    (0, 1): 0.68,
    (1, 1): 0.44,
    (1, 2): 0.80,
    (2, 2): 0.32,
    (2, 0): 0.56,
}
FORBIDDEN_COMBOS = [(a, b) for a in range(3) for b in range(3) if (a, b) not in NORMAL_COMBOS]

SYNTHETIC_SCHEMA = Schema(
    categorical_groups=(("a", ("0", "1", "2")), ("b", ("0", "1", "2"))),
    continuous_features=(ContinuousFeature("c", "none", 0.0, 1.0),),
)


def band(combo: tuple[int, int]) -> tuple[float, float]:
    """Support of c for a normal combination."""
    mu = NORMAL_COMBOS[combo]
    return max(C_LOW, mu - BAND_HALF_WIDTH), min(C_HIGH, mu + BAND_HALF_WIDTH)


def is_normal(a: int, b: int, c: float) -> bool:
    combo = (int(a), int(b))
    if combo not in NORMAL_COMBOS:
        return False
    lo, hi = band(combo)
    return lo <= c <= hi


@dataclass(frozen=True)
class AnomalySpec:
    ratio: float
    n_global: int
    n_local: int

    @classmethod
    def from_ratio(cls, ratio: float, test_size: int) -> "AnomalySpec":
        """Split ``round(ratio * test_size)`` anomalies evenly, extra one to global."""
        total = int(round(ratio * test_size))
        n_local = total // 2
        return cls(ratio, total - n_local, n_local)


def _truncated_normal(rng: np.random.Generator, mu: float, lo: float, hi: float) -> float:
    while True:
        c = rng.normal(mu, C_SIGMA)
        if lo <= c <= hi:
            return float(c)


def _make(rows: list[tuple[int, int, float]], labels: list[str]) -> LabeledDataset:
    a = [str(r[0]) for r in rows]
    b = [str(r[1]) for r in rows]
    c = [r[2] for r in rows]
    feats = SYNTHETIC_SCHEMA.encode([a, b], [c])
    return LabeledDataset(SYNTHETIC_SCHEMA, feats, labels, list(rows))


def gen_synthetic_normal(n: int, seed: int) -> LabeledDataset:
    """``n`` normal rows; combinations drawn uniformly from the normal set."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    combos = list(NORMAL_COMBOS)
    picks = rng.integers(len(combos), size=n)
    rows = []
    for p in picks:
        combo = combos[p]
        rows.append((combo[0], combo[1], _truncated_normal(rng, NORMAL_COMBOS[combo], *band(combo))))
    return _make(rows, ["normal"] * n)


def _global_row(rng: np.random.Generator) -> tuple[int, int, float]:
    combos = list(NORMAL_COMBOS)
    a, b = combos[rng.integers(len(combos))]
    if rng.random() < 0.5:
        c = rng.uniform(0.0, C_LOW)
    else:
        c = 1.0 - rng.uniform(0.0, 1.0 - C_HIGH)  # (0.9, 1]
    return a, b, float(c)


def _local_row(rng: np.random.Generator) -> tuple[int, int, float]:
    if rng.random() < 0.5:
        a, b = FORBIDDEN_COMBOS[rng.integers(len(FORBIDDEN_COMBOS))]
        return a, b, float(rng.uniform(C_LOW, C_HIGH))
    combos = list(NORMAL_COMBOS)
    own = combos[rng.integers(len(combos))]
    mu = NORMAL_COMBOS[own]
    donors = [k for k in combos if abs(NORMAL_COMBOS[k] - mu) >= 0.3]
    donor = donors[rng.integers(len(donors))]
    lo, hi = band(own)
    while True:
        c = _truncated_normal(rng, NORMAL_COMBOS[donor], *band(donor))
        if not lo <= c <= hi:
            return own[0], own[1], c


def inject_synthetic_anomalies(test: LabeledDataset, spec: AnomalySpec, seed: int) -> LabeledDataset:
    """Overwrite randomly chosen rows with global and local anomalies."""
    n = len(test)
    if spec.n_global < 0 or spec.n_local < 0 or spec.n_global + spec.n_local > n:
        raise ValueError(f"cannot place {spec.n_global}+{spec.n_local} anomalies in {n} rows")
    if np.any(test.labels != "normal"):
        raise ValueError("test set must be all-normal before injection")
    if spec.n_global + spec.n_local == 0:
        return test.subset(np.arange(n))
    rng = np.random.default_rng(seed)
    rows = list(test.records)
    labels = list(test.labels)
    chosen = rng.choice(n, size=spec.n_global + spec.n_local, replace=False)
    for k, i in enumerate(chosen):
        if k < spec.n_global:
            rows[i] = _global_row(rng)
            labels[i] = "global"
        else:
            rows[i] = _local_row(rng)
            labels[i] = "local"
    return _make(rows, labels)


def write_synthetic_csv(path, data: LabeledDataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "c", "label"])
        for (a, b, c), lab in zip(data.records, data.labels):
            w.writerow([a, b, repr(float(c)), lab])


def read_synthetic_csv(path) -> LabeledDataset:
    rows, labels = [], []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[:3] != ["a", "b", "c"]:
            raise ValueError(f"{path}: expected header a,b,c[,label]")
        for rec in reader:
            rows.append((int(rec["a"]), int(rec["b"]), float(rec["c"])))
            labels.append(rec.get("label") or "normal")
    if not rows:
        return LabeledDataset(SYNTHETIC_SCHEMA, np.zeros((0, SYNTHETIC_SCHEMA.width)), [], [])
    return _make(rows, labels)
