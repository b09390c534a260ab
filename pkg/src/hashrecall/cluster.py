"""K-means partitioning of code embeddings into recall categories.

Seeding is greedy k-means++ (several candidate centers per step, keeping the
one that most reduces the potential), repeated for a configurable number of
restarts with the best final inertia kept.  A single seeded generator drives
every draw, so a fit is a pure function of (data, k, seed).  Lloyd iterations
stop at an assignment fixpoint or max_iter; empty clusters are reseeded with
the point currently farthest from its assigned centroid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .store import EmbeddingMatrix, read_embeddings, write_embeddings

DEFAULT_RESTARTS = 4


@dataclass(frozen=True)
class ClusterModel:
    """Fitted centroids plus the training assignments and final inertia."""

    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    inertia: float
    inertia_history: list[float] = field(default_factory=list, repr=False)

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances, clipped at zero against rounding."""
    d2 = (
        (points * points).sum(axis=1)[:, None]
        - 2.0 * (points @ centroids.T)
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def _plusplus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    n_trials = 2 + int(np.log(k)) if k > 1 else 1
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    centroids[0] = points[int(rng.integers(n))]
    closest = squared_distances(points, centroids[:1]).ravel()
    for c in range(1, k):
        total = closest.sum()
        if total > 0.0:
            candidates = rng.choice(n, size=n_trials, p=closest / total)
        else:
            candidates = rng.integers(n, size=n_trials)
        best_idx, best_pot, best_closest = -1, np.inf, None
        for idx in candidates:
            trial = np.minimum(
                closest, squared_distances(points, points[None, int(idx)]).ravel()
            )
            pot = trial.sum()
            if pot < best_pot:
                best_idx, best_pot, best_closest = int(idx), pot, trial
        centroids[c] = points[best_idx]
        closest = best_closest
    return centroids


def _repair_empty(
    points: np.ndarray,
    centroids: np.ndarray,
    assignments: np.ndarray,
    point_dists: np.ndarray,
) -> bool:
    """Reseed each empty cluster with the point farthest from its own centroid."""
    k = centroids.shape[0]
    counts = np.bincount(assignments, minlength=k)
    if (counts > 0).all():
        return False
    dist_to_own = point_dists[np.arange(points.shape[0]), assignments].copy()
    for j in np.flatnonzero(counts == 0):
        far = int(np.argmax(dist_to_own))
        centroids[j] = points[far]
        dist_to_own[far] = -np.inf
        assignments[far] = j
    return True


def _lloyd(
    points: np.ndarray, k: int, max_iter: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    centroids = _plusplus_init(points, k, rng)
    assignments = np.argmin(squared_distances(points, centroids), axis=1)
    history: list[float] = []
    for _ in range(max_iter):
        for j in range(k):
            members = assignments == j
            if members.any():
                centroids[j] = points[members].mean(axis=0)
        dists = squared_distances(points, centroids)
        new_assignments = np.argmin(dists, axis=1)
        if _repair_empty(points, centroids, new_assignments, dists):
            dists = squared_distances(points, centroids)
            new_assignments = np.argmin(dists, axis=1)
        inertia = float(dists[np.arange(points.shape[0]), new_assignments].sum())
        history.append(inertia)
        converged = np.array_equal(new_assignments, assignments)
        assignments = new_assignments
        if converged:
            break
    return centroids, assignments, history[-1], history


def kmeans_fit(
    code: EmbeddingMatrix,
    k: int,
    max_iter: int = 100,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
) -> ClusterModel:
    """Fit k categories to the code embeddings; deterministic for a fixed seed."""
    if k <= 0:
        raise ValueError("k must be positive")
    if code.count < k:
        raise ValueError(f"insufficient points: {code.count} rows for k={k}")
    points = code.data.astype(np.float64)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(restarts, 1)):
        centroids, assignments, inertia, history = _lloyd(points, k, max_iter, rng)
        if best is None or inertia < best[2]:
            best = (centroids, assignments, inertia, history)
    centroids, assignments, inertia, history = best
    return ClusterModel(
        k=k,
        centroids=centroids,
        assignments=assignments.astype(np.int64),
        inertia=inertia,
        inertia_history=history,
    )


def assign(model: ClusterModel, vectors: EmbeddingMatrix | np.ndarray) -> np.ndarray:
    """Nearest-centroid index per row; ties go to the lowest centroid index."""
    data = vectors.data if isinstance(vectors, EmbeddingMatrix) else np.asarray(vectors)
    data = np.atleast_2d(data)
    if data.shape[1] != model.dim:
        raise ValueError(
            f"dimension mismatch: vectors have dim {data.shape[1]}, "
            f"centroids have dim {model.dim}"
        )
    out = np.empty(data.shape[0], dtype=np.int64)
    block = 16384  # bounds the float64 working set on large corpora
    for start in range(0, data.shape[0], block):
        chunk = data[start : start + block].astype(np.float64)
        out[start : start + block] = np.argmin(
            squared_distances(chunk, model.centroids), axis=1
        )
    return out


def save_centroids(model: ClusterModel, path: Path | str) -> None:
    write_embeddings(EmbeddingMatrix(model.centroids.astype(np.float32)), path)


def load_centroids(
    path: Path | str, assignments: np.ndarray, inertia: float = 0.0
) -> ClusterModel:
    """Rebuild a ClusterModel from persisted centroids and assignments."""
    centroids = read_embeddings(path).data.astype(np.float64)
    assignments = np.asarray(assignments, dtype=np.int64)
    if assignments.ndim != 1:
        raise ValueError("assignments must be 1-D")
    return ClusterModel(
        k=centroids.shape[0],
        centroids=centroids,
        assignments=assignments,
        inertia=inertia,
    )
