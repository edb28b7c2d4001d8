"""Grid driver: data preparation, per-cell training and scoring."""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..autoencoder import TrainConfig
from ..dataset.journal import (
    JournalSurrogate,
    fit_schema,
    gen_journal_corpus,
    inject_journal_anomalies,
    journal_dataset,
    read_journal_csv,
    with_local_amount,
)
from ..dataset.schema import LabeledDataset, Schema
from ..dataset.synthetic import SYNTHETIC_SCHEMA, AnomalySpec, gen_synthetic_normal, inject_synthetic_anomalies
from ..federated import DcConfig, FedConfig, MethodRun, run_method, stream_seed
from ..metrics import ap_triple
from ..partition import split_iid, split_noniid_kmeans
from .config import ExperimentConfig

# seed streams derived from the base seed; data streams never depend on the repetition
POOL, SPLIT, TEST, INJECT, CORPUS, REP = 1, 2, 3, 4, 5, 10_000


@dataclass
class PreparedData:
    splits: list[LabeledDataset]
    tests: dict[float, LabeledDataset]  # anomaly ratio -> test set held by the first organisation
    schema: Schema


@dataclass(frozen=True)
class ResultRow:
    method: str
    setting: str
    lam: int
    ratio: float
    rep: int
    ap_all: float | None
    ap_global: float | None
    ap_local: float | None
    uploads: int
    downloads: int
    status: str = "ok"
    error: str = ""


@dataclass(frozen=True)
class CellTiming:
    method: str
    lam: int
    rep: int
    train_seconds: float
    score_seconds: float


def _split(pool: LabeledDataset, cfg: ExperimentConfig) -> list[LabeledDataset]:
    splitter = split_iid if cfg.setting == "iid" else split_noniid_kmeans
    return splitter(pool, cfg.org_count, stream_seed(cfg.seed, SPLIT))


def _prepare_synthetic(cfg: ExperimentConfig) -> PreparedData:
    pool = gen_synthetic_normal(cfg.train_size, stream_seed(cfg.seed, POOL))
    base = gen_synthetic_normal(cfg.test_size, stream_seed(cfg.seed, TEST))
    tests = {
        ratio: inject_synthetic_anomalies(base, AnomalySpec.from_ratio(ratio, cfg.test_size),
                                          stream_seed(cfg.seed, INJECT + k))
        for k, ratio in enumerate(cfg.ratios)
    }
    return PreparedData(_split(pool, cfg), tests, SYNTHETIC_SCHEMA)


def _journal_from_entries(cfg: ExperimentConfig, per_org: list[list], test_entries: list,
                          test_labels: list[str] | None) -> PreparedData:
    """Encode journal data; with ``amount_scope="per_org"`` each organisation
    scales amounts by its own statistics and the test set uses the first one's."""
    train = [e for org in per_org for e in org]
    if test_labels is None:
        test_entries, test_labels = inject_journal_anomalies(
            test_entries, stream_seed(cfg.seed, INJECT), reference=train, n_global=cfg.n_global,
            n_pair_local=cfg.n_pair_local, n_recurring_local=cfg.n_recurring_local)
    pooled = fit_schema(train, cfg.amount_transform, cfg.amount_scaling)
    if cfg.setting == "iid":
        splits = _split(journal_dataset(train, pooled), cfg)
    else:
        splits = [journal_dataset(org, pooled) for org in per_org]
    schema = pooled
    if cfg.amount_scope == "per_org":
        local = [with_local_amount(pooled, s.records, cfg.amount_transform, cfg.amount_scaling) for s in splits]
        splits = [journal_dataset(s.records, sch) for s, sch in zip(splits, local)]
        schema = local[0]
    test = journal_dataset(test_entries, schema, test_labels)
    ratio = round(float(np.mean(test.labels != "normal")), 6)
    return PreparedData(splits, {ratio: test}, schema)


def _prepare_surrogate(cfg: ExperimentConfig) -> PreparedData:
    sizes = [max(1, int(round(n * cfg.journal_scale))) for n in cfg.journal_sizes]
    corpus_seed = stream_seed(cfg.seed, CORPUS)
    per_org = gen_journal_corpus(cfg.org_count, sizes, corpus_seed, cfg.heterogeneity)
    gen = JournalSurrogate(cfg.org_count, corpus_seed, cfg.heterogeneity)
    test = gen.sample(0, cfg.journal_test_size, np.random.default_rng(stream_seed(cfg.seed, TEST)))
    return _journal_from_entries(cfg, per_org, test, None)


def _prepare_journal_csv(cfg: ExperimentConfig) -> PreparedData:
    root = Path(cfg.journal_dir)
    per_org = []
    for k in range(1, cfg.org_count + 1):
        entries, labels = read_journal_csv(root / f"org_{k}.csv")
        if labels is not None and any(lab != "normal" for lab in labels):
            raise ValueError(f"org_{k}.csv: training data must be all normal")
        per_org.append(entries)
    test, labels = read_journal_csv(root / "test.csv")
    return _journal_from_entries(cfg, per_org, test, labels)


def prepare_data(cfg: ExperimentConfig) -> PreparedData:
    if cfg.dataset == "synthetic":
        return _prepare_synthetic(cfg)
    if cfg.dataset == "journal_surrogate":
        return _prepare_surrogate(cfg)
    return _prepare_journal_csv(cfg)


def participants_for(method: str, lam: int, org_count: int) -> list[int]:
    """IA always uses the first organisation and CA pools every organisation."""
    if method == "IA":
        return [0]
    if method == "CA":
        return list(range(org_count))
    return list(range(lam))


def train_cell(cfg: ExperimentConfig, data: PreparedData, method: str, lam: int, rep: int) -> MethodRun:
    splits = [data.splits[i] for i in participants_for(method, lam, len(data.splits))]
    train_cfg = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, learning_rate=cfg.learning_rate)
    fed = FedConfig(rounds=cfg.rounds, local_epochs=cfg.local_epochs, mu=cfg.mu)
    dc = DcConfig(anchor_rows=cfg.anchor_rows, m_tilde=cfg.m_tilde, m_hat=cfg.m_hat, rank_policy=cfg.rank_policy,
                  offset=cfg.offset, standardize=cfg.dc_standardize)
    return run_method(method, splits, cfg.hidden_layers, train_cfg, stream_seed(cfg.seed, REP + rep),
                      schema=data.schema, fed=fed, dc=dc)


def run_cell(cfg: ExperimentConfig, data: PreparedData, method: str, lam: int, rep: int
             ) -> tuple[list[ResultRow], CellTiming]:
    """Train once, then score every test set; failures become error rows."""
    t0 = time.perf_counter()
    try:
        run = train_cell(cfg, data, method, lam, rep)
    except Exception as err:  # recorded per cell so the grid continues
        rows = [ResultRow(method, cfg.setting, lam, ratio, rep, None, None, None, 0, 0, "error",
                          f"{type(err).__name__}: {err}") for ratio in data.tests]
        return rows, CellTiming(method, lam, rep, time.perf_counter() - t0, 0.0)
    t1 = time.perf_counter()
    uploads = sum(run.ledger.uploads.values())
    downloads = sum(run.ledger.downloads.values())
    rows = []
    for ratio, test in data.tests.items():
        try:
            t = ap_triple(run.score(test), test.labels, other_as_negative=cfg.other_as_negative)
            rows.append(ResultRow(method, cfg.setting, lam, ratio, rep, t.ap_all, t.ap_global, t.ap_local,
                                  uploads, downloads))
        except Exception as err:
            rows.append(ResultRow(method, cfg.setting, lam, ratio, rep, None, None, None, uploads, downloads,
                                  "error", f"{type(err).__name__}: {err}"))
    return rows, CellTiming(method, lam, rep, t1 - t0, time.perf_counter() - t1)


def grid(cfg: ExperimentConfig, reps: Sequence[int] | None = None) -> list[tuple[str, int, int]]:
    """Every (method, lambda, repetition) cell, optionally restricted to some repetitions."""
    reps = range(cfg.repetitions) if reps is None else reps
    for rep in reps:
        if not 0 <= rep < cfg.repetitions:
            raise ValueError(f"repetition {rep} outside [0, {cfg.repetitions})")
    return [(m, lam, rep) for m in cfg.methods for lam in cfg.lambdas for rep in reps]


_WORKER: dict = {}


def _worker_init(cfg: ExperimentConfig) -> None:
    _WORKER["cfg"] = cfg
    _WORKER["data"] = prepare_data(cfg)


def _worker_cell(cell):
    return run_cell(_WORKER["cfg"], _WORKER["data"], *cell)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, data: PreparedData | None = None,
                   reps: Sequence[int] | None = None) -> tuple[list[ResultRow], list[CellTiming]]:
    """Run every grid cell; rows come back sorted by method, lambda, ratio and repetition."""
    cells = grid(cfg, reps)
    if jobs > 1:
        with ProcessPoolExecutor(jobs, initializer=_worker_init, initargs=(cfg,)) as pool:
            outputs = list(pool.map(_worker_cell, cells))
    else:
        data = data or prepare_data(cfg)
        outputs = [run_cell(cfg, data, *cell) for cell in cells]
    rows = [row for out, _ in outputs for row in out]
    order = {m: i for i, m in enumerate(cfg.methods)}
    rows.sort(key=lambda r: (order[r.method], r.lam, -r.ratio, r.rep))
    return rows, [timing for _, timing in outputs]
