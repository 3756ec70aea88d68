"""Seeded k-means (k-means++ starts, Lloyd updates) for background summarization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_ITER = 300
TOL = 1e-6


@dataclass(frozen=True)
class BackgroundSet:
    """Weighted reference points that stand in for "unknown" feature values."""

    points: np.ndarray
    weights: np.ndarray
    source_count: int

    def __post_init__(self):
        p = np.array(self.points, dtype=np.float64, ndmin=2)
        w = np.array(self.weights, dtype=np.float64).ravel()
        if p.shape[0] < 1 or w.shape != (p.shape[0],):
            raise ValueError("need k >= 1 points and one weight per point")
        if not np.all(np.isfinite(p)):
            raise ValueError("background points must be finite")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("background weights must be non-negative and sum to 1")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @property
    def k(self) -> int:
        return self.points.shape[0]

    @property
    def width(self) -> int:
        return self.points.shape[1]

    @classmethod
    def uniform(cls, data: np.ndarray) -> "BackgroundSet":
        data = np.asarray(data, dtype=np.float64)
        n = data.shape[0]
        return cls(data, np.full(n, 1.0 / n), n)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x * x).sum(1)[:, None] - 2.0 * x @ c.T + (c * c).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    idx = [int(rng.integers(n))]
    closest = _sq_dists(x, x[idx])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=closest / total))
        else:
            # all remaining points coincide with chosen centres
            nxt = int(rng.integers(n))
        idx.append(nxt)
        closest = np.minimum(closest, _sq_dists(x, x[nxt:nxt + 1])[:, 0])
    return x[idx].copy()


def kmeans(x: np.ndarray, k: int, seed: int = 0, max_iter: int = MAX_ITER, tol: float = TOL
           ) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(centroids, labels)``.

    An empty cluster is re-seeded at the point farthest from its own centroid.
    Stops once no centroid moves more than `tol` or after `max_iter` rounds.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    centroids = kmeans_pp_init(x, k, rng)
    for _ in range(max_iter):
        dist = _sq_dists(x, centroids)
        labels = dist.argmin(axis=1)
        new = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                new[j] = x[labels == j].mean(axis=0)
        for j in np.flatnonzero(counts == 0):
            own = dist[np.arange(n), labels]
            far = int(own.argmax())
            new[j] = x[far]
            labels[far] = j
            dist[far] = 0.0
        shift = np.sqrt(((new - centroids) ** 2).sum(axis=1)).max()
        centroids = new
        if shift < tol:
            break
    labels = _sq_dists(x, centroids).argmin(axis=1)
    return centroids, labels


def kmeans_summarize(data: np.ndarray, k: int, seed: int = 0) -> BackgroundSet:
    """Summarize `data` by `k` centroids weighted by cluster population."""
    data = np.asarray(data, dtype=np.float64)
    if k == 1:
        return BackgroundSet(data.mean(axis=0, keepdims=True), np.ones(1), data.shape[0])
    centroids, labels = kmeans(data, k, seed)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    return BackgroundSet(centroids, counts / counts.sum(), data.shape[0])
