"""Linear-algebra and clustering primitives.

All routines take and return float64 numpy arrays and are deterministic for a
given input (and seed, where one is taken).  The SVD is LAPACK's divide-and-
conquer driver via ``numpy.linalg.svd``; everything built on top of it
(truncation, pseudoinverse cutoff, PCA null-space completion, k-means) lives
here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClusteringError, DimensionError, RankError

KMEANS_MAX_ITER = 300


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def rank_cutoff(shape: tuple[int, int], s_max: float) -> float:
    return max(shape) * s_max * 1e-12


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


@dataclass(frozen=True)
class PcaModel:
    """Affine projection ``(x - mean) @ components``."""

    mean: np.ndarray
    components: np.ndarray  # m x target_dim, orthonormal columns
    explained_variance: np.ndarray
    rank: int

    @property
    def input_dim(self) -> int:
        return self.components.shape[0]

    @property
    def output_dim(self) -> int:
        return self.components.shape[1]

    def transform(self, data) -> np.ndarray:
        x = as_matrix(data, "data")
        if x.shape[1] != self.input_dim:
            raise DimensionError(
                f"expected {self.input_dim} columns, got {x.shape[1]}"
            )
        return (x - self.mean) @ self.components

    def inverse_transform(self, reduced) -> np.ndarray:
        return as_matrix(reduced, "reduced") @ self.components.T + self.mean


def svd_lowrank(a, rank: int) -> SvdResult:
    """Best rank-``rank`` factorisation of ``a`` (Eckart-Young)."""
    a = as_matrix(a, "a")
    if rank < 1 or rank > min(a.shape):
        raise DimensionError(f"rank must be in [1, {min(a.shape)}], got {rank}")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    return SvdResult(u=u[:, :rank], s=s[:rank], v=vt[:rank].T)


def pinv(a) -> np.ndarray:
    """Moore-Penrose pseudoinverse with cutoff ``max(shape) * s_1 * 1e-12``."""
    a = as_matrix(a, "a")
    if a.size == 0:
        raise DimensionError("pinv of an empty matrix")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros(a.T.shape)
    keep = s > rank_cutoff(a.shape, s[0])
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def _canonical_null_basis(null: np.ndarray, count: int) -> np.ndarray:
    """Pick ``count`` orthonormal vectors from span(null) by projecting the
    standard basis onto it in index order (Gram-Schmidt).

    The result depends only on the subspace, not on which basis LAPACK
    happened to return, so parties whose data share a degenerate subspace
    get the same completion.
    """
    m = null.shape[0]
    proj = null @ null.T
    basis: list[np.ndarray] = []
    for j in range(m):
        v = proj[:, j].copy()
        for b in basis:
            v -= (b @ v) * b
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            basis.append(v / norm)
            if len(basis) == count:
                break
    return np.column_stack(basis) if basis else np.zeros((m, 0))


def _fix_signs(components: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of each column made positive
    idx = np.argmax(np.abs(components), axis=0)
    signs = np.sign(components[idx, np.arange(components.shape[1])])
    signs[signs == 0] = 1.0
    return components * signs


def pca_fit(data, target_dim: int, *, strict: bool = False) -> PcaModel:
    """Fit a ``target_dim``-component PCA on mean-centred ``data``.

    When the centred data have rank below ``target_dim`` the missing
    directions are filled from the null space in a canonical order (one-hot
    blocks always leave such directions).  ``strict=True`` raises instead.
    Data with no variance at all always raise.
    """
    x = as_matrix(data, "data")
    n, m = x.shape
    if not 1 <= target_dim < m:
        raise DimensionError(f"target_dim must be in [1, {m - 1}], got {target_dim}")
    if n < 2:
        raise DimensionError("pca_fit needs at least 2 rows")
    mean = x.mean(axis=0)
    xc = x - mean
    # the complete right basis is needed for null completion; U is only n x n when n < m
    _, s, vt = np.linalg.svd(xc, full_matrices=n < m)
    s_full = np.zeros(m)
    s_full[: s.size] = s
    rank = int(np.sum(s_full > rank_cutoff(x.shape, s_full[0]))) if s_full[0] > 0 else 0
    if target_dim > rank and (strict or rank == 0):
        raise RankError(f"data rank {rank} is below target_dim {target_dim}")

    kept = min(rank, target_dim)
    components = _fix_signs(vt[:kept].T)
    if kept < target_dim:
        filler = _canonical_null_basis(vt[rank:].T, target_dim - kept)
        components = np.column_stack([components, filler])
    variance = s_full[:target_dim] ** 2 / (n - 1)
    variance[kept:] = 0.0
    return PcaModel(mean=mean, components=components, explained_variance=variance, rank=rank)


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++: each new centre is the best of ``2 + ln k`` D²-draws."""
    n = x.shape[0]
    trials = 2 + int(np.log(k))
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            cand = rng.choice(n, size=trials, p=d2 / total)
        else:
            cand = rng.integers(n, size=trials)
        best_d2, best_pot, best_idx = None, np.inf, -1
        for idx in cand:
            trial = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
            pot = trial.sum()
            if pot < best_pot:
                best_d2, best_pot, best_idx = trial, pot, int(idx)
        centers[j] = x[best_idx]
        d2 = best_d2
    return centers


def _assign(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = (
        np.sum(x**2, axis=1)[:, None]
        - 2.0 * x @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def kmeans(data, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER) -> np.ndarray:
    """Lloyd's algorithm from k-means++ seeds; returns a label per row."""
    x = as_matrix(data, "data")
    n = x.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(x, k, rng)
    labels = _assign(x, centers)
    for _ in range(max_iter):
        for j in range(k):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
        new = _assign(x, centers)
        if np.array_equal(new, labels):
            break
        labels = new
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise ClusteringError(f"{int(np.sum(counts == 0))} empty cluster(s)")
    return labels


def inertia(data, labels: np.ndarray) -> float:
    x = as_matrix(data, "data")
    total = 0.0
    for j in np.unique(labels):
        members = x[labels == j]
        total += float(np.sum((members - members.mean(axis=0)) ** 2))
    return total
