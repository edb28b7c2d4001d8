"""Non-model-sharing collaboration: anchors, intermediate representations
and the alignment maps G_i.

Each organisation reduces its data with a private PCA f_i and shares only
``f_i(X_i)`` and ``f_i(anchor)``.  The analyst aligns the anchor images to a
common basis U1 and returns one G_i per organisation.
"""
from __future__ import annotations

import dataclasses
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, RankError
from .numerics import PcaModel, as_matrix, pca_fit, pinv, rank_cutoff, svd_lowrank

DEFAULT_ANCHOR_ROWS = 1000
RANK_POLICIES = ("complete", "reduce")
OFFSETS = ("anchor", "data")
ARTIFACT_MAGIC = "# dcaudit-artifact v1"


@dataclass(frozen=True)
class AnchorData:
    matrix: np.ndarray
    seed: int

    @property
    def r(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        return self.matrix.shape[1]


def gen_anchor(m: int, r: int = DEFAULT_ANCHOR_ROWS, seed: int = 0, min_rows: int | None = None) -> AnchorData:
    """Uniform [0, 1) anchor of shape ``r x m``; ``min_rows`` is the collaboration dimension it must support."""
    if m < 2:
        raise ValueError(f"anchor width must be at least 2, got {m}")
    if r < 1 or (min_rows is not None and r < min_rows):
        raise ValueError(f"anchor needs at least {min_rows or 1} rows, got {r}")
    return AnchorData(np.random.default_rng(seed).random((r, m)), seed)


@dataclass(frozen=True)
class IntermediateRep:
    """What an organisation uploads: its reduced data and reduced anchor."""

    org_id: str
    x_tilde: np.ndarray
    anchor_tilde: np.ndarray

    def __post_init__(self):
        if self.x_tilde.shape[1] != self.anchor_tilde.shape[1]:
            raise DimensionError("x_tilde and anchor_tilde widths differ")

    @property
    def m_tilde(self) -> int:
        return self.anchor_tilde.shape[1]


def make_intermediate(
    org_id: str,
    data,
    anchor: AnchorData,
    target_dim: int,
    *,
    rank_policy: str = "complete",
    offset: str = "anchor",
) -> tuple[IntermediateRep, PcaModel]:
    """Fit the private reduction and apply it to the data and the anchor.

    Components come from the centred organisation data.  With
    ``offset="anchor"`` the translation uses the public anchor column mean,
    so organisations whose components span the same subspace produce anchor
    images with identical column spaces.  ``rank_policy="reduce"`` lowers
    the target to the data rank instead of completing from the null space.
    """
    if rank_policy not in RANK_POLICIES:
        raise ValueError(f"rank_policy must be one of {RANK_POLICIES}")
    if offset not in OFFSETS:
        raise ValueError(f"offset must be one of {OFFSETS}")
    x = as_matrix(data, "data")
    if x.shape[1] != anchor.m:
        raise DimensionError(f"data has {x.shape[1]} columns, anchor has {anchor.m}")
    pca = pca_fit(x, target_dim)
    if rank_policy == "reduce" and pca.rank < target_dim:
        pca = pca_fit(x, pca.rank)
    if offset == "anchor":
        pca = dataclasses.replace(pca, mean=anchor.matrix.mean(axis=0))
    rep = IntermediateRep(str(org_id), pca.transform(x), pca.transform(anchor.matrix))
    return rep, pca


@dataclass(frozen=True)
class CollabTransform:
    g: dict[str, np.ndarray]
    m_hat: int
    u1_c: np.ndarray

    def residual(self, rep: IntermediateRep) -> float:
        """Relative alignment error of one organisation's anchor image."""
        diff = rep.anchor_tilde @ self.g[rep.org_id] - self.u1_c
        return float(np.linalg.norm(diff) / np.linalg.norm(self.u1_c))


def fit_collaboration(reps: Sequence[IntermediateRep], m_hat: int | None = None) -> CollabTransform:
    """G_i = pinv(anchor_tilde_i) U1 with U1 from the rank-``m_hat`` SVD of the stacked anchor images."""
    if not reps:
        raise ValueError("need at least one organisation")
    ids = [rep.org_id for rep in reps]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate organisation ids: {ids}")
    rows = {rep.anchor_tilde.shape[0] for rep in reps}
    if len(rows) != 1:
        raise DimensionError(f"anchor images have differing row counts {sorted(rows)}")
    min_tilde = min(rep.m_tilde for rep in reps)
    m_hat = min_tilde if m_hat is None else m_hat
    if not 1 <= m_hat <= min_tilde:
        raise DimensionError(f"m_hat must be in [1, {min_tilde}], got {m_hat}")
    stacked = np.hstack([rep.anchor_tilde for rep in reps])
    s = np.linalg.svd(stacked, compute_uv=False)
    rank = int(np.sum(s > rank_cutoff(stacked.shape, s[0]))) if s[0] > 0 else 0
    if m_hat > rank:
        raise RankError(f"m_hat {m_hat} exceeds rank {rank} of the stacked anchor images")
    u1 = svd_lowrank(stacked, m_hat).u
    g = {rep.org_id: pinv(rep.anchor_tilde) @ u1 for rep in reps}
    return CollabTransform(g=g, m_hat=m_hat, u1_c=u1)


def to_collab(transform: CollabTransform, org_id: str, x_tilde) -> np.ndarray:
    """Map reduced data into the collaboration space."""
    if org_id not in transform.g:
        raise KeyError(f"no alignment map for organisation {org_id!r}")
    x = as_matrix(x_tilde, "x_tilde")
    g = transform.g[org_id]
    if x.shape[1] != g.shape[0]:
        raise DimensionError(f"expected {g.shape[0]} columns, got {x.shape[1]}")
    return x @ g


def transform_test(data, pca: PcaModel, transform: CollabTransform, org_id: str) -> np.ndarray:
    return to_collab(transform, org_id, pca.transform(data))


@dataclass
class CommLedger:
    """Counts transfers across the organisation/analyst boundary."""

    uploads: Counter = field(default_factory=Counter)
    downloads: Counter = field(default_factory=Counter)

    def upload(self, org_id: str) -> None:
        self.uploads[org_id] += 1

    def download(self, org_id: str) -> None:
        self.downloads[org_id] += 1

    def counts(self, org_id: str) -> tuple[int, int]:
        return self.uploads[org_id], self.downloads[org_id]


class Organization:
    """Holds raw data and the reduction privately; exposes only shareable outputs."""

    def __init__(self, org_id: str, data, target_dim: int, *, rank_policy: str = "complete",
                 offset: str = "anchor"):
        self.org_id = str(org_id)
        self._data = as_matrix(data, "data")
        self._target_dim = target_dim
        self._rank_policy = rank_policy
        self._offset = offset
        self._pca: PcaModel | None = None
        self.g: np.ndarray | None = None
        self.model = None

    def share(self, anchor_seed: int, anchor_rows: int, ledger: CommLedger) -> IntermediateRep:
        anchor = gen_anchor(self._data.shape[1], anchor_rows, anchor_seed)
        rep, self._pca = make_intermediate(self.org_id, self._data, anchor, self._target_dim,
                                           rank_policy=self._rank_policy, offset=self._offset)
        ledger.upload(self.org_id)
        return rep

    def receive(self, g: np.ndarray, model, ledger: CommLedger) -> None:
        self.g, self.model = g, model
        ledger.download(self.org_id)

    def collab(self, data) -> np.ndarray:
        if self._pca is None or self.g is None:
            raise RuntimeError("organisation has not completed the collaboration round")
        return self._pca.transform(data) @ self.g


class Analyst:
    """Sees only uploaded intermediate representations and the anchor seed."""

    def __init__(self, anchor_seed: int, m_hat: int | None = None):
        self.anchor_seed = anchor_seed
        self.m_hat = m_hat
        self.reps: list[IntermediateRep] = []
        self.transform: CollabTransform | None = None

    def collect(self, reps: Iterable[IntermediateRep]) -> None:
        for rep in reps:
            if not isinstance(rep, IntermediateRep):
                raise TypeError(f"analyst accepts only IntermediateRep, got {type(rep).__name__}")
            self.reps.append(rep)

    def fit(self) -> np.ndarray:
        """Fit the alignment and return the stacked collaboration representation."""
        self.transform = fit_collaboration(self.reps, self.m_hat)
        return np.vstack([to_collab(self.transform, rep.org_id, rep.x_tilde) for rep in self.reps])


# --- text artifacts ------------------------------------------------------------


def _check_ids(ids) -> None:
    bad = [i for i in ids if "," in i or "\n" in i]
    if bad:
        raise ValueError(f"organisation ids may not contain commas or newlines: {bad}")


def _write_block(lines: list[str], name: str, mat: np.ndarray) -> None:
    lines.append(f"{name},{mat.shape[0]},{mat.shape[1]}")
    lines.extend(",".join(repr(float(v)) for v in row) for row in mat)


def _read_block(lines: list[str], pos: int) -> tuple[str, np.ndarray, int]:
    name, rows, cols = lines[pos].split(",")
    rows, cols = int(rows), int(cols)
    body = lines[pos + 1 : pos + 1 + rows]
    mat = np.array([[float(v) for v in ln.split(",")] for ln in body], dtype=np.float64).reshape(rows, cols)
    return name, mat, pos + 1 + rows


def save_transform(path, transform: CollabTransform, anchor_seed: int) -> None:
    """Write every G_i plus the anchor target as a plain-text matrix dump."""
    _check_ids(transform.g)
    lines = [ARTIFACT_MAGIC, "kind,anchor_seed,orgs", f"transform,{anchor_seed},{len(transform.g)}",
             "org_id,m_tilde,m_hat"]
    lines += [f"{org},{g.shape[0]},{transform.m_hat}" for org, g in transform.g.items()]
    for org, g in transform.g.items():
        _write_block(lines, f"G:{org}", g)
    _write_block(lines, "u1_c", transform.u1_c)
    Path(path).write_text("\n".join(lines) + "\n")


def save_intermediate(path, rep: IntermediateRep, anchor_seed: int) -> None:
    _check_ids([rep.org_id])
    lines = [ARTIFACT_MAGIC, "kind,anchor_seed,orgs", f"intermediate,{anchor_seed},1", "org_id,m_tilde,m_hat",
             f"{rep.org_id},{rep.m_tilde},"]
    _write_block(lines, "x_tilde", rep.x_tilde)
    _write_block(lines, "anchor_tilde", rep.anchor_tilde)
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_artifact(path) -> tuple[str, int, list[tuple[str, str, str]], dict[str, np.ndarray]]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != ARTIFACT_MAGIC:
        raise ValueError(f"{path}: not a dcaudit artifact")
    kind, seed, count = lines[2].split(",")
    pos = 4 + int(count)
    headers = [tuple(ln.split(",")) for ln in lines[4:pos]]
    blocks = {}
    while pos < len(lines):
        name, mat, pos = _read_block(lines, pos)
        blocks[name] = mat
    return kind, int(seed), headers, blocks


def load_transform(path) -> tuple[CollabTransform, int]:
    kind, seed, headers, blocks = _parse_artifact(path)
    if kind != "transform":
        raise ValueError(f"{path}: expected a transform artifact, found {kind!r}")
    g = {org: blocks[f"G:{org}"] for org, _, _ in headers}
    return CollabTransform(g=g, m_hat=int(headers[0][2]), u1_c=blocks["u1_c"]), seed


def load_intermediate(path) -> tuple[IntermediateRep, int]:
    kind, seed, headers, blocks = _parse_artifact(path)
    if kind != "intermediate":
        raise ValueError(f"{path}: expected an intermediate artifact, found {kind!r}")
    return IntermediateRep(headers[0][0], blocks["x_tilde"], blocks["anchor_tilde"]), seed


def save_private(path, pca: PcaModel) -> None:
    """Organisation-side file holding the fitted reduction; never sent to the analyst."""
    with open(path, "wb") as fh:
        np.savez(fh, mean=pca.mean, components=pca.components, explained_variance=pca.explained_variance,
                 rank=np.array(pca.rank))


def load_private(path) -> PcaModel:
    with np.load(Path(path), allow_pickle=False) as z:
        return PcaModel(z["mean"].copy(), z["components"].copy(), z["explained_variance"].copy(), int(z["rank"]))
