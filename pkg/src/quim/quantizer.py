"""Prototype learning (spherical k-means) and nearest-prototype assignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import DimMismatch, TooFewVectors


@dataclass(frozen=True)
class PrototypeSet:
    """Unit-norm cluster centers keyed by dense ids 0..k_p-1."""

    vectors: np.ndarray  # (k_p, dim), unit rows
    embedder_id: str = ""
    seed: int = 0

    @property
    def k_p(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _as_matrix(vectors) -> np.ndarray:
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("expected a non-empty (n, dim) array of vectors")
    return X


def _normalize_rows(X: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return X / norms


class SphericalKMeans(BaseEstimator):
    """K-means on the unit sphere with cosine distance.

    Centers are initialized with seeded k-means++ over cosine distance
    (1 - similarity), assignment is by maximal cosine similarity with ties
    going to the smallest center id, and recentering takes the normalized
    mean of each cluster. Empty clusters are reseeded from the point least
    similar to its current center. Iteration stops when assignments stop
    changing or after ``max_iter`` rounds.
    """

    def __init__(self, n_clusters=8, max_iter=50, random_state=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = _normalize_rows(_as_matrix(X))
        n = X.shape[0]
        k = self.n_clusters
        if k < 1:
            raise ValueError("n_clusters must be >= 1")
        if k > n:
            raise TooFewVectors(f"n_clusters={k} exceeds {n} vectors")
        rng = np.random.default_rng(self.random_state)
        centers = self._init_plusplus(X, k, rng)
        labels = np.full(n, -1, dtype=np.int64)
        for _ in range(self.max_iter):
            sims = X @ centers.T
            new_labels = np.argmax(sims, axis=1)  # first max: smallest id on ties
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
            for j in range(k):
                members = X[labels == j]
                if members.shape[0] == 0:
                    # reseed from the point least similar to its own center
                    own = sims[np.arange(n), labels]
                    centers[j] = X[int(np.argmin(own))]
                    continue
                mean = members.mean(axis=0)
                norm = np.linalg.norm(mean)
                if norm > 0.0:
                    centers[j] = mean / norm
        self.cluster_centers_ = centers
        self.labels_ = labels
        return self

    def predict(self, X):
        X = _normalize_rows(_as_matrix(X))
        if X.shape[1] != self.cluster_centers_.shape[1]:
            raise DimMismatch("query dim differs from center dim")
        return np.argmax(X @ self.cluster_centers_.T, axis=1)

    def _init_plusplus(self, X, k, rng):
        n = X.shape[0]
        centers = np.empty((k, X.shape[1]), dtype=np.float64)
        first = int(rng.integers(n))
        centers[0] = X[first]
        closest = 1.0 - X @ centers[0]
        for j in range(1, k):
            d = np.clip(closest, 0.0, None)
            total = d.sum()
            if total <= 0.0:
                idx = int(rng.integers(n))
            else:
                idx = int(rng.choice(n, p=d / total))
            centers[j] = X[idx]
            closest = np.minimum(closest, 1.0 - X @ centers[j])
        return centers


def learn_prototypes(vectors, k_p: int, seed: int = 0, max_iters: int = 50,
                     embedder_id: str = "") -> PrototypeSet:
    """Cluster embeddings into k_p unit-norm prototypes."""
    X = _as_matrix(vectors)
    if k_p < 1 or k_p > X.shape[0]:
        raise TooFewVectors(f"need 1 <= k_p <= {X.shape[0]}, got {k_p}")
    km = SphericalKMeans(n_clusters=k_p, max_iter=max_iters, random_state=seed).fit(X)
    return PrototypeSet(vectors=km.cluster_centers_, embedder_id=embedder_id, seed=seed)


def quantize(v, ps: PrototypeSet) -> int:
    """Id of the prototype most cosine-similar to v; ties go to the smallest id."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (ps.dim,):
        raise DimMismatch(f"vector dim {v.shape} vs prototype dim {ps.dim}")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise ValueError("cannot quantize the zero vector")
    return int(np.argmax(ps.vectors @ (v / norm)))


def quantize_batch(X, ps: PrototypeSet) -> np.ndarray:
    X = _normalize_rows(_as_matrix(X))
    if X.shape[1] != ps.dim:
        raise DimMismatch(f"vector dim {X.shape[1]} vs prototype dim {ps.dim}")
    return np.argmax(X @ ps.vectors.T, axis=1)


def nearest_prototypes(v, ps: PrototypeSet, n_probe: int) -> list[int]:
    """Ids of the n_probe most similar prototypes, best first, ties by id."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (ps.dim,):
        raise DimMismatch(f"vector dim {v.shape} vs prototype dim {ps.dim}")
    sims = ps.vectors @ v
    n_probe = min(max(n_probe, 1), ps.k_p)
    # stable sort on -sims keeps smaller ids first among equal scores
    order = np.argsort(-sims, kind="stable")
    return [int(i) for i in order[:n_probe]]
