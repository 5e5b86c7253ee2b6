"""Small deterministic k-means used by clustering-based heuristics.

Farthest-point seeding, a handful of restarts, Lloyd iterations with a
fixed cap. Written in-repo (rather than pulling a library) so results are
bit-reproducible from a seed across platforms and library versions.
"""

from __future__ import annotations

import numpy as np


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           n_restarts: int = 10, max_iter: int = 100):
    """Cluster ``points`` (m, 2) into ``k`` groups; returns (labels, inertia).

    Each restart seeds the first center at a random point and the rest by
    farthest-point traversal; the best restart by inertia wins.
    """
    pts = np.asarray(points, dtype=float)
    m = len(pts)
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, m)
    if k == m:
        return np.arange(m), 0.0
    best_labels, best_inertia = None, np.inf
    for _ in range(n_restarts):
        centers = _farthest_point_init(pts, k, rng)
        labels = None
        for _ in range(max_iter):
            d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = d2.argmin(axis=1)
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            for j in range(k):
                members = pts[labels == j]
                if len(members):
                    centers[j] = members.mean(axis=0)
                else:
                    # re-seed an empty cluster at the farthest point
                    far = int(d2.min(axis=1).argmax())
                    centers[j] = pts[far]
        d2 = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        inertia = float(d2.min(axis=1).sum())
        if inertia < best_inertia - 1e-12:
            best_inertia = inertia
            best_labels = labels
    return best_labels, best_inertia


def _farthest_point_init(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    first = int(rng.integers(len(pts)))
    centers = [pts[first]]
    for _ in range(1, k):
        d2 = np.min(
            [((pts - c) ** 2).sum(axis=1) for c in centers], axis=0
        )
        centers.append(pts[int(d2.argmax())])
    return np.array(centers)
