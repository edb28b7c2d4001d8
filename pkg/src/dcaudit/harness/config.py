"""Experiment configuration: one flat YAML document per grid."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from ..autoencoder import JOURNAL_HIDDEN, SYNTHETIC_HIDDEN
from ..dataset.journal import AMOUNT_SCALINGS, AMOUNT_TRANSFORMS
from ..dc import OFFSETS, RANK_POLICIES
from ..federated import METHODS

DATASETS = ("synthetic", "journal_csv", "journal_surrogate")
SETTINGS = ("iid", "noniid")
AMOUNT_SCOPES = ("per_org", "pooled")
JOURNAL_ORG_SIZES = (17070, 22978, 10708, 11230, 14984, 8525, 8133, 8611)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic"
    setting: str = "iid"
    methods: tuple[str, ...] = METHODS
    lambdas: tuple[int, ...] = (8,)
    ratios: tuple[float, ...] = (0.25, 0.10, 0.05)  # synthetic only
    repetitions: int = 10
    seed: int = 0
    org_count: int = 8

    # synthetic data
    train_size: int = 1600
    test_size: int = 200

    # journal data
    journal_sizes: tuple[int, ...] = JOURNAL_ORG_SIZES
    journal_scale: float = 1.0
    journal_test_size: int = 2737
    journal_dir: str | None = None
    heterogeneity: float = 1.0
    amount_transform: str = "none"
    amount_scaling: str = "standard"
    amount_scope: str = "per_org"  # whose statistics fit the amount scaling
    n_global: int = 6
    n_pair_local: int = 10
    n_recurring_local: int = 4

    # model and training
    hidden: tuple[int, ...] | None = None
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    rounds: int = 10
    local_epochs: int = 20
    mu: float = 0.1

    # collaboration
    anchor_rows: int = 1000
    m_tilde: int | None = None
    m_hat: int | None = None
    rank_policy: str = "complete"
    offset: str = "anchor"
    dc_standardize: bool = False

    # evaluation
    other_as_negative: bool = False

    def __post_init__(self):
        for name in ("methods", "lambdas", "ratios", "journal_sizes", "hidden"):
            value = getattr(self, name)
            if isinstance(value, list):
                object.__setattr__(self, name, tuple(value))
        checks = [
            (self.dataset in DATASETS, f"dataset must be one of {DATASETS}"),
            (self.setting in SETTINGS, f"setting must be one of {SETTINGS}"),
            (bool(self.methods) and all(m in METHODS for m in self.methods), f"methods must be drawn from {METHODS}"),
            (self.repetitions >= 1, "repetitions must be at least 1"),
            (self.org_count >= 1, "org_count must be positive"),
            (bool(self.lambdas) and all(1 <= lam <= self.org_count for lam in self.lambdas),
             f"every lambda must be in [1, {self.org_count}]"),
            (all(0 < r < 1 for r in self.ratios), "ratios must lie in (0, 1)"),
            (self.amount_transform in AMOUNT_TRANSFORMS, f"amount_transform must be one of {AMOUNT_TRANSFORMS}"),
            (self.amount_scaling in AMOUNT_SCALINGS, f"amount_scaling must be one of {AMOUNT_SCALINGS}"),
            (self.amount_scope in AMOUNT_SCOPES, f"amount_scope must be one of {AMOUNT_SCOPES}"),
            (self.rank_policy in RANK_POLICIES, f"rank_policy must be one of {RANK_POLICIES}"),
            (self.offset in OFFSETS, f"offset must be one of {OFFSETS}"),
            (self.journal_scale > 0, "journal_scale must be positive"),
            (self.dataset != "journal_csv" or self.journal_dir is not None, "journal_csv needs journal_dir"),
            (self.dataset != "journal_surrogate" or len(self.journal_sizes) == self.org_count,
             "journal_sizes needs one entry per organisation"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValueError(message)

    @property
    def hidden_layers(self) -> tuple[int, ...]:
        if self.hidden is not None:
            return self.hidden
        return SYNTHETIC_HIDDEN if self.dataset == "synthetic" else JOURNAL_HIDDEN

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected a key-value document")
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))
