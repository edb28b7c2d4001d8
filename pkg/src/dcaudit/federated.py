"""Training regimes: individual, centralised, FedAvg, FedProx and DC.

Every regime returns a :class:`MethodRun` whose ``score`` method maps an
organisation's test rows to reconstruction errors.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autoencoder import (
    AEArchitecture,
    AEModel,
    Adam,
    Head,
    TrainConfig,
    init_model,
    reconstruction_errors,
    train,
)
from .dataset.schema import LabeledDataset, Schema
from .dc import DEFAULT_ANCHOR_ROWS, Analyst, CommLedger, Organization
from .errors import AggregationError, DivergenceError

METHODS = ("IA", "CA", "FedAvg", "FedProx", "DC")
ANALYST_STREAM = 1_000_003


def stream_seed(seed: int, stream: int) -> int:
    """Independent 32-bit seed for one consumer of a run seed."""
    return int(np.random.SeedSequence([seed, stream]).generate_state(1)[0])


@dataclass(frozen=True)
class FedConfig:
    rounds: int = 10
    local_epochs: int = 20
    mu: float = 0.1

    def __post_init__(self):
        if self.rounds < 1 or self.local_epochs < 1:
            raise ValueError("rounds and local_epochs must be positive")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")


@dataclass(frozen=True)
class DcConfig:
    anchor_rows: int = DEFAULT_ANCHOR_ROWS
    m_tilde: int | None = None  # default: input width - 1
    m_hat: int | None = None  # default: smallest m_tilde
    rank_policy: str = "complete"
    offset: str = "anchor"
    standardize: bool = False
    anchor_seed: int | None = None  # default: the run seed


@dataclass
class MethodRun:
    method: str
    org_ids: list[str]
    seed: int
    model: AEModel
    ledger: CommLedger
    history: list[float] = field(default_factory=list)
    train_rows: int = 0
    orgs: dict[str, Organization] | None = None
    scale: tuple[np.ndarray, np.ndarray] | None = None

    def score(self, test, org_id: str | None = None) -> np.ndarray:
        """Anomaly scores for test rows held by ``org_id`` (default: first participant)."""
        x = test.features if isinstance(test, LabeledDataset) else np.asarray(test, dtype=np.float64)
        if self.orgs is not None:
            x = self.orgs[org_id or self.org_ids[0]].collab(x)
            if self.scale is not None:
                x = (x - self.scale[0]) / self.scale[1]
        return reconstruction_errors(self.model, x)


def _features(split) -> np.ndarray:
    return split.features if isinstance(split, LabeledDataset) else np.asarray(split, dtype=np.float64)


def _raw_arch(width: int, hidden, schema: Schema | None) -> AEArchitecture:
    head = Head.mixed(schema) if schema is not None else Head.identity()
    return AEArchitecture.for_input(width, hidden, head)


def aggregate_fedavg(models: Sequence[AEModel], sizes: Sequence[int]) -> AEModel:
    """Weighted parameter average with weights n_k / n.

    Written as ``w_0 + sum (n_k/n)(w_k - w_0)`` so that identical inputs
    (and a single client) come back bit-for-bit.
    """
    if not models or len(models) != len(sizes):
        raise AggregationError("need one size per client model")
    arch = models[0].arch
    if any(m.arch != arch for m in models):
        raise AggregationError("client models have different architectures")
    n = float(sum(sizes))
    if n <= 0 or any(s < 0 for s in sizes):
        raise AggregationError("client sizes must be non-negative with a positive total")
    base = models[0].params
    out = base.copy()
    for m, n_k in zip(models, sizes):
        out += (n_k / n) * (m.params - base)
    return AEModel(arch, out, models[0].seed)


def run_ia(split, hidden, train_cfg: TrainConfig, seed: int, *, schema: Schema | None = None,
           org_index: int = 0) -> MethodRun:
    """Train on one organisation's data alone."""
    x = _features(split)
    model = init_model(_raw_arch(x.shape[1], hidden, schema), seed)
    cfg = dataclasses.replace(train_cfg, shuffle_seed=stream_seed(seed, org_index), prox_mu=0.0)
    res = train(model, x, cfg)
    return MethodRun("IA", [str(org_index)], seed, res.model, CommLedger(), res.history, len(x))


def run_ca(splits: Sequence, hidden, train_cfg: TrainConfig, seed: int, *, schema: Schema | None = None) -> MethodRun:
    """Train on the pooled raw data of every organisation given."""
    x = np.vstack([_features(s) for s in splits])
    run = run_ia(x, hidden, train_cfg, seed, schema=schema, org_index=0)
    ledger = CommLedger()
    ids = [str(i) for i in range(len(splits))]
    for org in ids:
        ledger.upload(org)  # raw data leaves the organisation
    return dataclasses.replace(run, method="CA", org_ids=ids, ledger=ledger)


def _run_fl(method: str, splits: Sequence, hidden, train_cfg: TrainConfig, fed: FedConfig, seed: int,
            schema: Schema | None, mu: float) -> MethodRun:
    data = [_features(s) for s in splits]
    ids = [str(i) for i in range(len(data))]
    global_model = init_model(_raw_arch(data[0].shape[1], hidden, schema), seed)
    cfgs = [dataclasses.replace(train_cfg, epochs=fed.local_epochs, shuffle_seed=stream_seed(seed, k), prox_mu=mu)
            for k in range(len(data))]
    optimizers = [Adam(global_model.params.size, c) for c in cfgs]
    ledger = CommLedger()
    history = []
    for t in range(fed.rounds):
        local = []
        for k, (x, cfg) in enumerate(zip(data, cfgs)):
            ledger.download(ids[k])
            try:
                res = train(global_model, x, cfg, optimizer=optimizers[k], epoch_offset=t * fed.local_epochs,
                            prox_ref=global_model.params if mu > 0 else None)
            except DivergenceError as err:
                raise DivergenceError(f"{method} round {t}, client {ids[k]}: {err}", err.epoch, err.batch,
                                      fl_round=t, client=ids[k]) from err
            ledger.upload(ids[k])
            local.append(res.model)
            history.extend(res.history)
        global_model = aggregate_fedavg(local, [len(x) for x in data])
    return MethodRun(method, ids, seed, global_model, ledger, history, sum(len(x) for x in data))


def run_fedavg(splits: Sequence, hidden, train_cfg: TrainConfig, fed: FedConfig, seed: int, *,
               schema: Schema | None = None) -> MethodRun:
    return _run_fl("FedAvg", splits, hidden, train_cfg, fed, seed, schema, 0.0)


def run_fedprox(splits: Sequence, hidden, train_cfg: TrainConfig, fed: FedConfig, seed: int, *,
                schema: Schema | None = None) -> MethodRun:
    return _run_fl("FedProx", splits, hidden, train_cfg, fed, seed, schema, fed.mu)


def train_collab_model(x_hat, hidden, train_cfg: TrainConfig, seed: int, standardize: bool = False):
    """Analyst-side training on the stacked collaboration representation.

    Returns the training result and the per-column (mean, std) applied to the
    input, or None when ``standardize`` is off.
    """
    x_hat = np.asarray(x_hat, dtype=np.float64)
    scale = None
    if standardize:
        mu, sd = x_hat.mean(axis=0), x_hat.std(axis=0)
        sd[sd == 0] = 1.0
        scale = (mu, sd)
        x_hat = (x_hat - mu) / sd
    model = init_model(AEArchitecture.for_input(x_hat.shape[1], hidden, Head.identity()), seed)
    cfg = dataclasses.replace(train_cfg, shuffle_seed=stream_seed(seed, ANALYST_STREAM), prox_mu=0.0)
    return train(model, x_hat, cfg), scale


def run_dc(splits: Sequence, hidden, train_cfg: TrainConfig, dc: DcConfig, seed: int) -> MethodRun:
    """One upload of intermediate representations, one download of (G_i, model) per organisation."""
    data = [_features(s) for s in splits]
    width = data[0].shape[1]
    m_tilde = dc.m_tilde if dc.m_tilde is not None else width - 1
    anchor_seed = seed if dc.anchor_seed is None else dc.anchor_seed
    ledger = CommLedger()
    orgs = {str(i): Organization(str(i), x, m_tilde, rank_policy=dc.rank_policy, offset=dc.offset)
            for i, x in enumerate(data)}
    analyst = Analyst(anchor_seed, dc.m_hat)
    analyst.collect(org.share(anchor_seed, dc.anchor_rows, ledger) for org in orgs.values())
    x_hat = analyst.fit()
    res, scale = train_collab_model(x_hat, hidden, train_cfg, seed, dc.standardize)
    for org_id, org in orgs.items():
        org.receive(analyst.transform.g[org_id], res.model, ledger)
    return MethodRun("DC", list(orgs), seed, res.model, ledger, res.history, len(x_hat), orgs, scale)


def run_method(method: str, splits: Sequence, hidden, train_cfg: TrainConfig, seed: int, *,
               schema: Schema | None = None, fed: FedConfig | None = None, dc: DcConfig | None = None) -> MethodRun:
    """Dispatch by name; IA uses the first split."""
    fed = fed or FedConfig()
    if method == "IA":
        return run_ia(splits[0], hidden, train_cfg, seed, schema=schema)
    if method == "CA":
        return run_ca(splits, hidden, train_cfg, seed, schema=schema)
    if method == "FedAvg":
        return run_fedavg(splits, hidden, train_cfg, fed, seed, schema=schema)
    if method == "FedProx":
        return run_fedprox(splits, hidden, train_cfg, fed, seed, schema=schema)
    if method == "DC":
        return run_dc(splits, hidden, train_cfg, dc or DcConfig(), seed)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
