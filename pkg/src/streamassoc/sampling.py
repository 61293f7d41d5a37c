"""Class-balanced source batches and KL-controlled target batches."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .backbone import one_hot
from .estimate import ClassDistribution, _as_probs
from .numgrad import ContractError

# Upper end of the tilt bracket. For any zero-mean unit direction and C <= 10
# this already reaches KL > 0.8 nats; larger requests may still fit for some seeds.
MAX_TILT = 30.0


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.shape[0] != self.labels.size:
            raise ContractError("features and labels have different lengths")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ContractError("labels out of range")

    def __len__(self):
        return self.labels.size

    @property
    def input_dim(self):
        return self.features.shape[1]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.num_classes)

    def onehot(self):
        return one_hot(self.labels, self.num_classes)


@dataclass
class KlTarget:
    requested_kl: float
    achieved_kl: float
    distribution: ClassDistribution
    tilt: float = 0.0


def kl_divergence(p, q):
    """``KL(p || q)`` in nats."""
    p, q = _as_probs(p), _as_probs(q)
    if p.shape != q.shape:
        raise ContractError("distributions have different lengths")
    support = p > 0
    if np.any(q[support] <= 0):
        raise ContractError("q must be positive wherever p is")
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def _tilted(direction, t):
    logits = t * direction
    return np.exp(logits - logsumexp(logits))


def make_divergent_distribution(num_classes, requested_kl, seed=0):
    """Exponentially tilt the uniform distribution until ``KL(u || q)`` hits the request.

    ``q_c ~ exp(t * g_c)`` for a zero-mean unit vector ``g`` drawn from
    ``seed``; ``t >= 0`` is solved by bracketing root search, which always
    converges because the divergence grows monotonically in ``t``.
    """
    if requested_kl < 0:
        raise ContractError("requested KL must be >= 0")
    if num_classes < 2 and requested_kl > 0:
        raise ContractError("a single class admits only KL = 0")
    uniform = np.full(num_classes, 1.0 / num_classes)
    if requested_kl == 0:
        return KlTarget(0.0, 0.0, ClassDistribution(uniform), 0.0)

    rng = np.random.default_rng(seed)
    g = rng.standard_normal(num_classes)
    g -= g.mean()
    g /= np.linalg.norm(g)

    def excess(t):
        return kl_divergence(uniform, _tilted(g, t)) - requested_kl

    bound = excess(MAX_TILT) + requested_kl
    if bound < requested_kl:
        raise ContractError(
            f"KL {requested_kl} unreachable for C={num_classes}; max is {bound:.4f}")
    t = brentq(excess, 0.0, MAX_TILT, xtol=1e-14, rtol=1e-14)
    q = _tilted(g, t)
    q /= q.sum()
    return KlTarget(float(requested_kl), kl_divergence(uniform, q), ClassDistribution(q), float(t))


def largest_remainder_counts(probs, n):
    """Integer counts summing to ``n``; remainders go to the largest fractions, lowest index first."""
    probs = _as_probs(probs)
    exact = probs * n
    counts = np.floor(exact).astype(int)
    short = n - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    return counts


def balanced_source_batch(ds, per_class, seed=0):
    """Exactly ``per_class`` samples of every class, shuffled; returns (features, onehot)."""
    rng = np.random.default_rng(seed)
    counts = ds.class_counts()
    if np.any(counts < per_class):
        raise ContractError(
            f"need {per_class} samples per class, smallest class has {counts.min()}")
    idx = np.concatenate([
        rng.choice(np.flatnonzero(ds.labels == c), size=per_class, replace=False)
        for c in range(ds.num_classes)
    ])
    rng.shuffle(idx)
    return ds.features[idx], one_hot(ds.labels[idx], ds.num_classes)


def distribution_target_batch(ds, dist, n, seed=0):
    """Draw ``n`` samples whose class counts follow ``dist``.

    Returns a :class:`LabeledDataset`; the labels are meant only for oracle
    weighting and for scoring, never for training.
    """
    rng = np.random.default_rng(seed)
    counts = largest_remainder_counts(dist, n)
    available = ds.class_counts()
    if np.any(counts > available):
        raise ContractError(f"requested counts {counts} exceed available {available}")
    idx = np.concatenate([
        rng.choice(np.flatnonzero(ds.labels == c), size=m, replace=False)
        for c, m in enumerate(counts)
    ]).astype(int)
    rng.shuffle(idx)
    return LabeledDataset(ds.features[idx].reshape(len(idx), ds.input_dim),
                          ds.labels[idx], ds.num_classes)
