"""Feature layout of encoded records: one-hot blocks followed by scaled continuous columns."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import DimensionError

OTHER = "<other>"
LABELS = ("normal", "global", "local")


@dataclass(frozen=True)
class ContinuousFeature:
    """Affine scaling sending ``min`` to 0 and ``max`` to 1 after ``transform``."""

    name: str
    transform: str  # "none" | "log1p"
    min: float
    max: float

    def __post_init__(self):
        if self.transform not in ("none", "log1p"):
            raise ValueError(f"unknown transform {self.transform!r}")
        if not self.min < self.max:
            raise ValueError(f"{self.name}: min must be below max")

    def apply(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=np.float64)
        if self.transform == "log1p":
            v = np.log1p(v)
        # no clipping: values outside the fitted range must stay distinguishable
        return (v - self.min) / (self.max - self.min)

    def invert(self, scaled) -> np.ndarray:
        v = np.asarray(scaled, dtype=np.float64) * (self.max - self.min) + self.min
        return np.expm1(v) if self.transform == "log1p" else v


@dataclass(frozen=True)
class Schema:
    categorical_groups: tuple[tuple[str, tuple[str, ...]], ...]
    continuous_features: tuple[ContinuousFeature, ...]

    def __post_init__(self):
        for name, vocab in self.categorical_groups:
            if not vocab:
                raise ValueError(f"group {name!r} has an empty vocabulary")
            if len(set(vocab)) != len(vocab):
                raise ValueError(f"group {name!r} has duplicate tokens")

    @property
    def width(self) -> int:
        return sum(len(v) for _, v in self.categorical_groups) + len(self.continuous_features)

    @property
    def group_slices(self) -> list[slice]:
        out, start = [], 0
        for _, vocab in self.categorical_groups:
            out.append(slice(start, start + len(vocab)))
            start += len(vocab)
        return out

    @property
    def continuous_slice(self) -> slice:
        start = sum(len(v) for _, v in self.categorical_groups)
        return slice(start, start + len(self.continuous_features))

    def encode(self, tokens: Sequence[Sequence[str]], values: Sequence[Sequence[float]]) -> np.ndarray:
        """Encode column-wise inputs: ``tokens[g][i]`` and ``values[j][i]``."""
        if len(tokens) != len(self.categorical_groups) or len(values) != len(self.continuous_features):
            raise DimensionError("column count does not match schema")
        n = len(tokens[0]) if tokens else len(values[0])
        out = np.zeros((n, self.width))
        for (name, vocab), sl, col in zip(self.categorical_groups, self.group_slices, tokens):
            index = {t: i for i, t in enumerate(vocab)}
            fallback = index.get(OTHER)
            for row, tok in enumerate(col):
                j = index.get(str(tok), fallback)
                if j is None:
                    raise KeyError(f"token {tok!r} not in vocabulary of {name!r}")
                out[row, sl.start + j] = 1.0
        cs = self.continuous_slice
        for k, (feat, col) in enumerate(zip(self.continuous_features, values)):
            out[:, cs.start + k] = feat.apply(col)
        return out

    def decode(self, features) -> tuple[list[list[str]], list[np.ndarray]]:
        """Inverse of :meth:`encode` (argmax per block, inverse scaling)."""
        x = np.asarray(features, dtype=np.float64)
        tokens = [
            [vocab[j] for j in np.argmax(x[:, sl], axis=1)]
            for (_, vocab), sl in zip(self.categorical_groups, self.group_slices)
        ]
        cs = self.continuous_slice
        values = [f.invert(x[:, cs.start + k]) for k, f in enumerate(self.continuous_features)]
        return tokens, values

    def to_dict(self) -> dict:
        return {
            "categorical_groups": [[n, list(v)] for n, v in self.categorical_groups],
            "continuous_features": [
                {"name": f.name, "transform": f.transform, "min": f.min, "max": f.max}
                for f in self.continuous_features
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        return cls(
            categorical_groups=tuple((n, tuple(v)) for n, v in d["categorical_groups"]),
            continuous_features=tuple(ContinuousFeature(**f) for f in d["continuous_features"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "Schema":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class LabeledDataset:
    """Encoded rows plus a label per row and the raw records they came from."""

    schema: Schema
    features: np.ndarray
    labels: np.ndarray
    records: list = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype="<U6")
        if self.features.ndim != 2 or self.features.shape[1] != self.schema.width:
            raise DimensionError("features do not match schema width")
        if len(self.labels) != len(self.features):
            raise DimensionError("one label per row required")
        bad = set(np.unique(self.labels)) - set(LABELS)
        if bad:
            raise ValueError(f"unknown labels {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index, dtype=np.int64)
        records = [self.records[i] for i in index] if self.records else []
        return LabeledDataset(self.schema, self.features[index], self.labels[index], records)

    @classmethod
    def concat(cls, parts: Sequence["LabeledDataset"]) -> "LabeledDataset":
        schema = parts[0].schema
        records = [r for p in parts for r in p.records]
        return cls(
            schema,
            np.vstack([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            records if all(p.records for p in parts) else [],
        )

    def counts(self) -> dict[str, int]:
        return {lab: int(np.sum(self.labels == lab)) for lab in LABELS}
