"""Relation-to-group assignment by k-means over relation embeddings.

Hard assignments implement the EM view of minimizing
sum_r ||R_r - c_{group(r)}||^2. Updates warm-start Lloyd iterations from the
previous centroids so group identities stay stable across epochs.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class GroupAssignment:
    """One group index per relation plus the centroids that induced them."""

    groups: np.ndarray
    centroids: np.ndarray
    sse: float

    @property
    def n_groups(self):
        return self.centroids.shape[0]

    def group_of(self, relation_id):
        relation_id = int(relation_id)
        if not 0 <= relation_id < len(self.groups):
            raise IndexError(f"relation id {relation_id} out of range")
        return int(self.groups[relation_id])

    def one_hot(self):
        b = np.zeros((len(self.groups), self.n_groups), dtype=np.int64)
        b[np.arange(len(self.groups)), self.groups] = 1
        return b


def _squared_distances(points, centroids):
    # (n_points, n_centroids) matrix of squared Euclidean distances.
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _assign(points, centroids):
    """Nearest centroid per point; ties broken to the lowest index."""
    d2 = _squared_distances(points, centroids)
    groups = np.argmin(d2, axis=1)
    sse = float(d2[np.arange(len(points)), groups].sum())
    return groups, sse


def lloyd(points, centroids, max_iter=50):
    """Lloyd iterations from given centroids.

    Returns (groups, centroids, sse_history) where sse_history holds the
    objective after each assignment step. An empty cluster is reseeded to
    the point currently farthest from its assigned centroid; moving that
    point's distance to zero cannot increase the objective.
    """
    points = np.asarray(points, dtype=np.float64)
    centroids = np.asarray(centroids, dtype=np.float64).copy()
    n_clusters = centroids.shape[0]
    groups, sse = _assign(points, centroids)
    history = [sse]
    for _ in range(max_iter):
        reseeded = False
        for k in range(n_clusters):
            members = points[groups == k]
            if len(members):
                centroids[k] = members.mean(axis=0)
        for k in range(n_clusters):
            if not (groups == k).any():
                d2 = _squared_distances(points, centroids)
                per_point = d2[np.arange(len(points)), groups]
                far = int(np.argmax(per_point))
                centroids[k] = points[far]
                groups[far] = k
                reseeded = True
        new_groups, sse = _assign(points, centroids)
        history.append(sse)
        stable = np.array_equal(new_groups, groups)
        groups = new_groups
        # a reseed leaves a centroid computed from stale membership, so the
        # stable check is only trusted on clean iterations
        if stable and not reseeded:
            break
    return groups, centroids, history


def update_assignments(relation_vectors, state, max_iter=50):
    """Refresh a GroupAssignment against current relation embeddings."""
    groups, centroids, history = lloyd(
        relation_vectors, state.centroids, max_iter=max_iter
    )
    return GroupAssignment(groups, centroids, history[-1])


def _kmeans_plus_plus(points, n_clusters, rng):
    n = len(points)
    centroids = np.empty((n_clusters, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    closest = np.einsum("nd,nd->n", points - centroids[0], points - centroids[0])
    for k in range(1, n_clusters):
        total = closest.sum()
        if total <= 0.0:
            # All remaining points coincide with a centroid; pick uniformly.
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[k] = points[idx]
        d2 = np.einsum("nd,nd->n", points - centroids[k], points - centroids[k])
        closest = np.minimum(closest, d2)
    return centroids


def recentered(assignment, vectors):
    """Rebuild centroids (and SSE) for fixed assignments over new vectors."""
    vectors = np.asarray(vectors, dtype=np.float64)
    n_groups = assignment.n_groups
    centroids = np.zeros((n_groups, vectors.shape[1]))
    for k in range(n_groups):
        members = vectors[assignment.groups == k]
        if len(members):
            centroids[k] = members.mean(axis=0)
    diff = vectors - centroids[assignment.groups]
    sse = float(np.einsum("nd,nd->", diff, diff))
    return GroupAssignment(assignment.groups.copy(), centroids, sse)


def init_assignments(relation_vectors, n_groups, rng):
    """Seed centroids with k-means++ and run one Lloyd pass to convergence."""
    points = np.asarray(relation_vectors, dtype=np.float64)
    if n_groups > len(points):
        raise ValueError(
            f"cannot form {n_groups} groups from {len(points)} relations"
        )
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    centroids = _kmeans_plus_plus(points, n_groups, rng)
    groups, centroids, history = lloyd(points, centroids)
    return GroupAssignment(groups, centroids, history[-1])
