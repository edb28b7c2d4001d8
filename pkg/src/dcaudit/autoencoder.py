"""Fully-connected autoencoder trained by minibatch Adam.

Parameters live in one flat float64 buffer; per-layer weights and biases are
views into it.  That keeps optimiser updates, federated averaging and
proximal terms to a few vector operations on the whole parameter set.

Two output heads:

* ``identity``: linear output, per-sample loss = mean squared error.
* ``mixed``: softmax over each categorical block with binary cross-entropy
  (mean over the block's units), linear output with MSE over the continuous
  columns; the per-sample loss is the sum of the block losses.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset.schema import Schema
from .errors import ArchitectureError, DimensionError, DivergenceError

PROB_CLIP = 1e-12
SCORE_CHUNK = 8192

SYNTHETIC_HIDDEN = (6, 4, 2, 4, 6)
JOURNAL_HIDDEN = (128, 64, 32, 16, 8, 4, 8, 16, 32, 64, 128)


@dataclass(frozen=True)
class Head:
    kind: str  # "identity" | "mixed"
    groups: tuple[tuple[int, int], ...] = ()
    continuous: tuple[int, int] | None = None

    @classmethod
    def identity(cls) -> "Head":
        return cls("identity")

    @classmethod
    def mixed(cls, schema: Schema) -> "Head":
        groups = tuple((s.start, s.stop) for s in schema.group_slices)
        cs = schema.continuous_slice
        return cls("mixed", groups, (cs.start, cs.stop) if cs.stop > cs.start else None)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "groups": [list(g) for g in self.groups],
                "continuous": list(self.continuous) if self.continuous else None}

    @classmethod
    def from_dict(cls, d: dict) -> "Head":
        return cls(d["kind"], tuple(tuple(g) for g in d["groups"]),
                   tuple(d["continuous"]) if d["continuous"] else None)


@dataclass(frozen=True)
class AEArchitecture:
    layer_sizes: tuple[int, ...]
    head: Head = field(default_factory=Head.identity)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 3 or min(sizes) < 1:
            raise ArchitectureError(f"bad layer sizes {sizes}")
        if sizes != sizes[::-1]:
            raise ArchitectureError(f"layer sizes must be symmetric, got {sizes}")
        if self.head.kind not in ("identity", "mixed"):
            raise ArchitectureError(f"unknown head {self.head.kind!r}")
        if self.head.kind == "mixed":
            covered = sorted(list(self.head.groups) + ([self.head.continuous] if self.head.continuous else []))
            pos = 0
            for a, b in covered:
                if a != pos or b <= a:
                    raise ArchitectureError("mixed head blocks must tile the output")
                pos = b
            if pos != sizes[-1]:
                raise ArchitectureError("mixed head does not cover the output width")

    @classmethod
    def for_input(cls, width: int, hidden, head: Head | None = None) -> "AEArchitecture":
        return cls((width, *hidden, width), head or Head.identity())

    @property
    def shapes(self) -> list[tuple[int, int]]:
        s = self.layer_sizes
        return [(s[i], s[i + 1]) for i in range(len(s) - 1)]

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in self.shapes)


class AEModel:
    """Architecture plus a flat parameter vector with per-layer views."""

    def __init__(self, arch: AEArchitecture, params: np.ndarray, seed: int | None = None):
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (arch.n_params,):
            raise DimensionError(f"expected {arch.n_params} parameters, got {params.shape}")
        self.arch = arch
        self.params = params
        self.seed = seed
        self.weights, self.biases = _views(params, arch)

    def copy(self) -> "AEModel":
        return AEModel(self.arch, self.params.copy(), self.seed)

    @property
    def input_dim(self) -> int:
        return self.arch.layer_sizes[0]


def _views(flat: np.ndarray, arch: AEArchitecture):
    weights, biases = [], []
    pos = 0
    for a, b in arch.shapes:
        weights.append(flat[pos: pos + a * b].reshape(a, b))
        pos += a * b
        biases.append(flat[pos: pos + b])
        pos += b
    return weights, biases


def init_model(arch: AEArchitecture, seed: int) -> AEModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    model = AEModel(arch, np.zeros(arch.n_params), seed)
    for w in model.weights:
        limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return model


# --- forward / loss ------------------------------------------------------


def _softmax_blocks(z: np.ndarray, head: Head) -> np.ndarray:
    out = z.copy()
    for a, b in head.groups:
        block = z[:, a:b]
        e = np.exp(block - block.max(axis=1, keepdims=True))
        out[:, a:b] = e / e.sum(axis=1, keepdims=True)
    return out


def _hidden_pass(model: AEModel, x: np.ndarray):
    acts = [x]
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w
        z += b
        if i < last:
            np.maximum(z, 0.0, out=z)
        acts.append(z)
        h = z
    return acts


def _output(model: AEModel, z: np.ndarray) -> np.ndarray:
    return _softmax_blocks(z, model.arch.head) if model.arch.head.kind == "mixed" else z


def _check_width(model: AEModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(f"expected width {model.input_dim}, got shape {x.shape}")
    return x


def forward(model: AEModel, batch) -> np.ndarray:
    x = _check_width(model, batch)
    return _output(model, _hidden_pass(model, x)[-1])


def _sample_loss_and_dz(head: Head, x: np.ndarray, out: np.ndarray, need_grad: bool):
    """Per-sample loss and d(loss_i)/d(output pre-activation)."""
    if head.kind == "identity":
        diff = out - x
        loss = np.mean(diff * diff, axis=1)
        return loss, (2.0 / x.shape[1]) * diff if need_grad else None
    loss = np.zeros(x.shape[0])
    dz = np.empty_like(out) if need_grad else None
    for a, b in head.groups:
        y = x[:, a:b]
        p = np.clip(out[:, a:b], PROB_CLIP, 1.0 - PROB_CLIP)
        k = b - a
        loss -= np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p), axis=1) / k
        if need_grad:
            g = -(y / p - (1.0 - y) / (1.0 - p)) / k
            pg = out[:, a:b] * g
            dz[:, a:b] = pg - out[:, a:b] * pg.sum(axis=1, keepdims=True)
    if head.continuous:
        a, b = head.continuous
        diff = out[:, a:b] - x[:, a:b]
        loss += np.mean(diff * diff, axis=1)
        if need_grad:
            dz[:, a:b] = (2.0 / (b - a)) * diff
    return loss, dz


def reconstruction_errors(model: AEModel, data) -> np.ndarray:
    """Per-row anomaly score: the per-sample training loss."""
    x = _check_width(model, data)
    scores = np.empty(x.shape[0])
    for start in range(0, x.shape[0], SCORE_CHUNK):
        chunk = x[start: start + SCORE_CHUNK]
        out = _output(model, _hidden_pass(model, chunk)[-1])
        scores[start: start + SCORE_CHUNK] = _sample_loss_and_dz(model.arch.head, chunk, out, False)[0]
    return scores


def loss_and_grad(model: AEModel, x: np.ndarray, grad: np.ndarray | None = None,
                  prox_mu: float = 0.0, prox_ref: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Batch-mean loss (plus ``mu/2 * ||w - ref||²``) and its gradient w.r.t. the flat parameters."""
    if grad is None:
        grad = np.empty_like(model.params)
    gw, gb = _views(grad, model.arch)
    acts = _hidden_pass(model, x)
    out = _output(model, acts[-1])
    per_sample, delta = _sample_loss_and_dz(model.arch.head, x, out, True)
    n = x.shape[0]
    delta /= n
    for i in range(len(model.weights) - 1, -1, -1):
        np.matmul(acts[i].T, delta, out=gw[i])
        np.sum(delta, axis=0, out=gb[i])
        if i > 0:
            delta = delta @ model.weights[i].T
            delta *= acts[i] > 0
    loss = float(per_sample.mean())
    if prox_mu:
        diff = model.params - prox_ref
        grad += prox_mu * diff
        loss += 0.5 * prox_mu * float(diff @ diff)
    return loss, grad


# --- training --------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    prox_mu: float = 0.0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.prox_mu < 0:
            raise ValueError("prox_mu must be non-negative")


class Adam:
    """Adam state for one flat parameter vector."""

    def __init__(self, size: int, cfg: TrainConfig):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.cfg = cfg
        self._tmp = np.empty(size)

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        c = self.cfg
        self.t += 1
        self.m *= c.beta1
        self.m += (1.0 - c.beta1) * grad
        self.v *= c.beta2
        np.multiply(grad, grad, out=self._tmp)
        self._tmp *= 1.0 - c.beta2
        self.v += self._tmp
        step = c.learning_rate / (1.0 - c.beta1**self.t)
        vcorr = 1.0 / (1.0 - c.beta2**self.t)
        np.multiply(self.v, vcorr, out=self._tmp)
        np.sqrt(self._tmp, out=self._tmp)
        self._tmp += c.eps
        np.divide(self.m, self._tmp, out=self._tmp)
        self._tmp *= step
        params -= self._tmp


@dataclass
class TrainResult:
    model: AEModel
    history: list[float]


def epoch_order(n: int, shuffle_seed: int, epoch: int) -> np.ndarray:
    """Row order for one epoch; keyed by (seed, absolute epoch) so training
    split into several calls visits rows exactly as one long call would."""
    return np.random.default_rng([shuffle_seed, epoch]).permutation(n)


def train(model: AEModel, data, cfg: TrainConfig, *, optimizer: Adam | None = None,
          epoch_offset: int = 0, prox_ref: np.ndarray | None = None) -> TrainResult:
    """Minibatch Adam on a copy of ``model``.

    ``optimizer`` carries Adam moments across calls (federated clients keep
    theirs between rounds); ``epoch_offset`` continues the shuffle sequence.
    With ``cfg.prox_mu > 0`` the gradient gains ``mu * (w - prox_ref)``.
    """
    x = _check_width(model, data)
    if x.shape[0] == 0:
        raise ValueError("no training rows")
    if cfg.prox_mu and prox_ref is None:
        raise ValueError("prox_mu > 0 needs prox_ref")
    model = model.copy()
    opt = optimizer or Adam(model.params.size, cfg)
    grad = np.empty_like(model.params)
    n = x.shape[0]
    history = []
    for e in range(cfg.epochs):
        order = epoch_order(n, cfg.shuffle_seed, epoch_offset + e)
        total = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            batch = x[order[start: start + cfg.batch_size]]
            loss, _ = loss_and_grad(model, batch, grad, cfg.prox_mu, prox_ref)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch_offset + e}, batch {bi}",
                    epoch=epoch_offset + e, batch=bi,
                )
            opt.step(model.params, grad)
            total += loss * batch.shape[0]
        history.append(total / n)
    return TrainResult(model, history)


# --- persistence -----------------------------------------------------------


def save_model(model: AEModel, path) -> None:
    meta = {"layer_sizes": list(model.arch.layer_sizes), "head": model.arch.head.to_dict(),
            "seed": model.seed}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), params=model.params)


def load_model(path) -> AEModel:
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        params = z["params"].copy()
    arch = AEArchitecture(tuple(meta["layer_sizes"]), Head.from_dict(meta["head"]))
    return AEModel(arch, params, meta["seed"])
