"""Average precision and its decomposition by anomaly type."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, UndefinedMetricError

COMPONENTS = ("ap_all", "ap_global", "ap_local")


def average_precision(scores, labels) -> float:
    """Sum of precision times recall gain over distinct thresholds, high to low.

    Tied scores form one threshold.  ``labels`` are truthy for positives.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise DimensionError(f"{s.size} scores but {y.size} labels")
    if np.any(np.isnan(s)):
        raise ValueError("scores contain NaN")
    positives = int(y.sum())
    if positives == 0:
        raise UndefinedMetricError("average precision needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each block of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    seen = ends + 1
    gain = np.diff(np.r_[0, tp])
    return float(np.sum(gain * (tp / seen)) / positives)


@dataclass(frozen=True)
class ApTriple:
    ap_all: float | None
    ap_global: float | None
    ap_local: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {k: getattr(self, k) for k in COMPONENTS}


def _maybe_ap(scores, positives) -> float | None:
    try:
        return average_precision(scores, positives)
    except UndefinedMetricError:
        return None


def ap_triple(scores, labels, *, other_as_negative: bool = False) -> ApTriple:
    """AP over all anomalies, globals only and locals only.

    By default the type-specific scores drop the other anomaly type from the
    evaluation set; ``other_as_negative=True`` keeps it as a negative.
    A component with no positives is reported as ``None``.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    lab = np.asarray(labels).ravel()
    if s.shape != lab.shape:
        raise DimensionError(f"{s.size} scores but {lab.size} labels")
    unknown = set(np.unique(lab)) - {"normal", "global", "local"}
    if unknown:
        raise ValueError(f"unknown labels {sorted(unknown)}")
    result = {"ap_all": _maybe_ap(s, lab != "normal")}
    for kind, other in (("global", "local"), ("local", "global")):
        keep = np.ones(s.size, bool) if other_as_negative else lab != other
        result[f"ap_{kind}"] = _maybe_ap(s[keep], lab[keep] == kind)
    return ApTriple(**result)


@dataclass(frozen=True)
class Summary:
    mean: float | None
    std: float | None
    n: int


def summarize(values: Sequence[float | None]) -> Summary:
    """Mean and sample standard deviation of the present values (std is NaN for one value)."""
    vals = np.array([v for v in values if v is not None], dtype=np.float64)
    if vals.size == 0:
        return Summary(None, None, 0)
    std = float(np.std(vals, ddof=1)) if vals.size > 1 else float("nan")
    return Summary(float(np.mean(vals)), std, int(vals.size))


def aggregate_runs(runs: Sequence[ApTriple]) -> dict[str, Summary]:
    if not runs:
        raise ValueError("no runs to aggregate")
    return {k: summarize([getattr(r, k) for r in runs]) for k in COMPONENTS}
