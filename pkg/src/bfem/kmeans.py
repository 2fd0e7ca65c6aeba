"""Lloyd's k-means with k-means++ seeding, used for initialization and as a baseline."""

from __future__ import annotations

import numpy as np

__all__ = ["kmeans", "kmeans_plusplus"]


def _sq_dists(Y: np.ndarray, sq_norms: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d2 = sq_norms[:, None] - 2.0 * Y @ centers.T + np.sum(centers**2, axis=1)[None, :]
    return np.maximum(d2, 0.0)


def kmeans_plusplus(Y: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of K seed points drawn by D^2 weighting."""
    n = Y.shape[0]
    sq = np.einsum("ij,ij->i", Y, Y)
    idx = [int(rng.integers(n))]
    closest = _sq_dists(Y, sq, Y[idx])[:, 0]
    for _ in range(1, K):
        total = closest.sum()
        if total > 0:
            cand = int(rng.choice(n, p=closest / total))
        else:
            # fewer distinct points than clusters left: pick an unused index
            free = np.setdiff1d(np.arange(n), idx)
            cand = int(rng.choice(free))
        idx.append(cand)
        closest = np.minimum(closest, _sq_dists(Y, sq, Y[[cand]])[:, 0])
    return np.asarray(idx)


def kmeans(Y, K: int, seed=None, max_iter: int = 25, return_history: bool = False):
    """Partition the rows of ``Y`` into ``K`` clusters.

    Args:
        Y: (n, p) data.
        K: number of clusters, ``K <= n``.
        seed: anything accepted by ``np.random.default_rng``.
        max_iter: cap on Lloyd iterations.
        return_history: also return the inertia after each iteration.

    Returns:
        0-based labels of shape (n,), and the inertia history if requested.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"need 1 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    sq = np.einsum("ij,ij->i", Y, Y)
    centers = Y[kmeans_plusplus(Y, K, rng)].copy()
    labels = np.full(n, -1)
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists(Y, sq, centers)
        new_labels = np.argmin(d2, axis=1)
        counts = np.bincount(new_labels, minlength=K)
        for _ in range(K):
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0:
                break
            # move an empty center onto the point worst served by its center
            worst = int(np.argmax(d2[np.arange(n), new_labels]))
            centers[empty[0]] = Y[worst]
            d2 = _sq_dists(Y, sq, centers)
            new_labels = np.argmin(d2, axis=1)
            new_labels[worst] = empty[0]
            counts = np.bincount(new_labels, minlength=K)
        history.append(float(d2[np.arange(n), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        onehot = np.zeros((n, K))
        onehot[np.arange(n), labels] = 1.0
        filled = counts > 0
        centers[filled] = (onehot.T @ Y)[filled] / counts[filled, None]
    if return_history:
        return labels, history
    return labels
