"""Target class-proportion estimates from average-linkage clustering.

With a class-balanced source batch, the visit weight of target ``j`` only
depends on the share of the target batch that sits in ``j``'s cluster, so
cluster identities never need to be matched to classes.
"""

from dataclasses import dataclass

import numpy as np

from .numgrad import ContractError


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    sizes: np.ndarray

    @property
    def k(self):
        return self.sizes.size


@dataclass(frozen=True)
class ClassDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).ravel()
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ContractError(f"not a probability vector: {p}")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, num_classes):
        return cls(np.full(num_classes, 1.0 / num_classes))

    @classmethod
    def from_labels(cls, labels, num_classes):
        counts = np.bincount(np.asarray(labels, dtype=int), minlength=num_classes)
        return cls(counts / counts.sum())

    def __len__(self):
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return self.probs if dtype is None else self.probs.astype(dtype)

    def is_uniform(self):
        return np.allclose(self.probs, 1.0 / self.probs.size, rtol=0, atol=1e-12)


def _as_probs(dist):
    return dist.probs if isinstance(dist, ClassDistribution) else np.asarray(dist, dtype=np.float64)


def agglomerative_cluster(embeddings, k):
    """Bottom-up average-linkage clustering under Euclidean distance.

    Merges the closest pair of clusters until ``k`` remain. Ties go to the
    lexicographically smallest pair of cluster slots; a merged cluster keeps
    the lower slot. Output labels are numbered by first appearance in row
    order, so the result is deterministic.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ContractError(f"need 1 <= k <= N, got k={k}, N={n}")

    sq = np.einsum("ij,ij->i", x, x)
    dist = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0))
    np.fill_diagonal(dist, np.inf)
    size = np.ones(n)
    owner = np.arange(n)
    active = np.ones(n, dtype=bool)

    for _ in range(n - k):
        flat = int(np.argmin(dist))
        a, b = divmod(flat, n)
        if a > b:
            a, b = b, a
        # Lance-Williams update for average linkage
        merged = (size[a] * dist[a] + size[b] * dist[b]) / (size[a] + size[b])
        merged[a] = np.inf
        merged[~active] = np.inf
        dist[a, :] = merged
        dist[:, a] = merged
        dist[b, :] = np.inf
        dist[:, b] = np.inf
        size[a] += size[b]
        active[b] = False
        owner[owner == b] = a

    _, first, labels = np.unique(owner, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    labels = order[labels]
    return ClusterAssignment(labels, np.bincount(labels, minlength=k))


def estimate_target_distribution(assignment, num_classes):
    if assignment.k != num_classes:
        raise ContractError(
            f"assignment has {assignment.k} clusters, expected {num_classes}")
    return ClassDistribution(assignment.sizes / assignment.sizes.sum())


def gamma_weights(source_dist, assignment, cluster_dist=None):
    """``gamma_j = p_source / p_cluster(j)`` for a uniform source batch."""
    src = _as_probs(source_dist)
    if not np.allclose(src, 1.0 / src.size, rtol=0, atol=1e-12):
        raise ContractError("estimated gamma needs a uniform source distribution")
    if np.any(assignment.sizes == 0):
        raise ContractError("empty cluster in assignment")
    if cluster_dist is None:
        cluster_dist = estimate_target_distribution(assignment, src.size)
    cprobs = _as_probs(cluster_dist)
    if np.any(cprobs <= 0):
        raise ContractError("cluster probabilities must be positive")
    return (1.0 / src.size) / cprobs[assignment.labels]


def oracle_gamma(source_dist, labels):
    """Weights from the true target label frequencies (upper-bound baseline)."""
    src = _as_probs(source_dist)
    labels = np.asarray(labels, dtype=int)
    if labels.size and (labels.min() < 0 or labels.max() >= src.size):
        raise ContractError("target labels out of range")
    freq = np.bincount(labels, minlength=src.size) / labels.size
    return src[labels] / freq[labels]


def estimated_gamma(embeddings, num_classes):
    """Cluster ``embeddings`` into ``num_classes`` groups and return gamma."""
    assignment = agglomerative_cluster(embeddings, num_classes)
    dist = estimate_target_distribution(assignment, num_classes)
    return gamma_weights(ClassDistribution.uniform(num_classes), assignment, dist)
