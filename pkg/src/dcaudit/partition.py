"""Split a normal training pool across organisations."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset.schema import LabeledDataset
from .errors import ClusteringError
from .numerics import kmeans

MODES = ("iid", "noniid_kmeans", "natural")


@dataclass(frozen=True)
class PartitionPlan:
    mode: str
    org_count: int
    seed: int

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown partition mode {self.mode!r}")
        if self.mode != "natural" and self.org_count < 1:
            raise ValueError("org_count must be positive")


def _check(data: LabeledDataset, orgs: int) -> None:
    if np.any(data.labels != "normal"):
        raise ValueError("training pool must contain only normal rows")
    if orgs < 1 or orgs > len(data):
        raise ValueError(f"cannot split {len(data)} rows into {orgs} organisations")


def split_iid(data: LabeledDataset, orgs: int, seed: int) -> list[LabeledDataset]:
    """Shuffle, then cut into ``orgs`` near-equal parts (earlier parts get the remainder)."""
    _check(data, orgs)
    perm = np.random.default_rng(seed).permutation(len(data))
    return [data.subset(part) for part in np.array_split(perm, orgs)]


def split_noniid_kmeans(data: LabeledDataset, orgs: int, seed: int) -> list[LabeledDataset]:
    """One k-means cluster per organisation, largest cluster first.

    An empty cluster triggers one retry with ``seed + 1`` before giving up.
    """
    _check(data, orgs)
    try:
        labels = kmeans(data.features, orgs, seed)
    except ClusteringError:
        labels = kmeans(data.features, orgs, seed + 1)
    sizes = np.bincount(labels, minlength=orgs)
    order = sorted(range(orgs), key=lambda j: (-sizes[j], j))
    return [data.subset(np.flatnonzero(labels == j)) for j in order]


def split(data: LabeledDataset | Sequence[LabeledDataset], plan: PartitionPlan) -> list[LabeledDataset]:
    if plan.mode == "natural":
        if isinstance(data, LabeledDataset):
            raise ValueError("'natural' partitioning needs per-organisation datasets")
        return list(data)
    if not isinstance(data, LabeledDataset):
        data = LabeledDataset.concat(list(data))
    if plan.mode == "iid":
        return split_iid(data, plan.org_count, plan.seed)
    return split_noniid_kmeans(data, plan.org_count, plan.seed)


def participants(splits: Sequence, lam: int, indices: Sequence[int] | None = None) -> list[int]:
    """Organisation indices taking part when only ``lam`` of them join (default: the first ``lam``)."""
    if not 1 <= lam <= len(splits):
        raise ValueError(f"lambda must be in [1, {len(splits)}], got {lam}")
    if indices is None:
        return list(range(lam))
    indices = list(indices)
    if len(indices) != lam or len(set(indices)) != lam or not all(0 <= i < len(splits) for i in indices):
        raise ValueError("participant indices must be lam distinct valid organisation indices")
    return indices
