"""Associative losses between source and target embeddings.

Source embeddings walk to the target batch and back. The walker loss asks
the round trip to end on a source sample of the starting class; the visit
loss asks every target sample to receive a fair share of the incoming
transition mass. Per-target weights ``gamma`` rescale that fair share when
the target class distribution differs from the (uniform) source one.

All functions that return graph nodes take the :class:`~streamassoc.numgrad.Graph`
implicitly from their node arguments.
"""

from collections import namedtuple
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numgrad import ContractError, DimensionError, Graph, as_matrix

DOT = "dot"
EUCLIDEAN = "euclidean"
AFFINITY_KINDS = (DOT, EUCLIDEAN)

AssocLosses = namedtuple("AssocLosses", "walker visit total")


@dataclass
class AssocLossConfig:
    beta: float = 0.5
    affinity: str = EUCLIDEAN
    gamma: Optional[np.ndarray] = None
    renormalize_gamma: bool = False

    def __post_init__(self):
        if self.beta < 0:
            raise ContractError(f"beta must be >= 0, got {self.beta}")
        if self.affinity not in AFFINITY_KINDS:
            raise ContractError(f"affinity must be one of {AFFINITY_KINDS}, got {self.affinity!r}")
        if self.gamma is not None:
            self.gamma = np.asarray(self.gamma, dtype=np.float64).ravel()
            if np.any(self.gamma <= 0):
                raise ContractError("gamma weights must be strictly positive")


def affinity(src_emb, tgt_emb, kind=EUCLIDEAN):
    """``N_S x N_T`` affinities: dot products or negative squared distances."""
    g = src_emb.graph
    if src_emb.shape[1] != tgt_emb.shape[1]:
        raise DimensionError(
            f"embedding widths differ: {src_emb.shape} vs {tgt_emb.shape}")
    dots = g.matmul(src_emb, g.transpose(tgt_emb))
    if kind == DOT:
        return dots
    if kind != EUCLIDEAN:
        raise ContractError(f"unknown affinity kind {kind!r}")
    # -|x - y|^2 = 2 x.y - |x|^2 - |y|^2
    src_sq = g.sum(g.mul(src_emb, src_emb), axis="rows")
    tgt_sq = g.transpose(g.sum(g.mul(tgt_emb, tgt_emb), axis="rows"))
    return g.sub(g.sub(g.scale(dots, 2.0), src_sq), tgt_sq)


def transitions(aff):
    """Row-softmax of the affinities in both directions: ``(P_st, P_ts)``."""
    g = aff.graph
    return g.row_softmax(aff), g.row_softmax(g.transpose(aff))


def round_trip(p_st, p_ts):
    if p_st.shape[1] != p_ts.shape[0]:
        raise DimensionError(f"round trip shapes {p_st.shape} and {p_ts.shape}")
    return p_st.graph.matmul(p_st, p_ts)


def equality_matrix(labels):
    """``e_ik = [y_i == y_k] / #{k : y_k == y_i}`` from one-hot ``labels``."""
    labels = as_matrix(labels)
    if not (np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=1) == 1)):
        raise ContractError("labels must be one-hot rows")
    same = labels @ labels.T
    counts = labels.sum(axis=0)[labels.argmax(axis=1)]
    return same / counts[:, None]


def walker_loss(E, rt):
    """Cross-entropy of the round-trip probabilities against ``E``, averaged over sources."""
    g = rt.graph
    E = g._node(E)
    if E.shape != rt.shape or rt.shape[0] != rt.shape[1]:
        raise DimensionError(f"walker loss needs equal square shapes, got {E.shape} and {rt.shape}")
    return g.scale(g.sum(g.mul(E, g.log(rt))), -1.0 / rt.shape[0])


def visit_probs(p_st):
    """Probability of landing on each target, averaged over source rows (``1 x N_T``)."""
    return p_st.graph.mean(p_st, axis="cols")


def visit_weights(n_targets, gamma=None, renormalize=False):
    """Per-target weights ``gamma_j / N_T`` (``gamma_j = 1`` when absent)."""
    if gamma is None:
        gamma = np.ones(n_targets)
    gamma = np.asarray(gamma, dtype=np.float64).ravel()
    if gamma.size != n_targets:
        raise DimensionError(f"gamma has {gamma.size} entries for {n_targets} targets")
    if np.any(gamma <= 0):
        raise ContractError("gamma weights must be strictly positive")
    if renormalize:
        gamma = gamma * (n_targets / gamma.sum())
    return (gamma / n_targets).reshape(1, -1)


def visit_loss(vp, gamma=None, renormalize=False):
    g = vp.graph
    weights = visit_weights(vp.shape[1], gamma, renormalize)
    return g.scale(g.sum(g.mul(g.log(vp), weights)), -1.0)


def assoc_loss(src_emb, src_labels, tgt_emb, config=None):
    """Walker, visit and total ``walker + beta * visit`` as graph nodes."""
    config = config or AssocLossConfig()
    g = src_emb.graph
    p_st, p_ts = transitions(affinity(src_emb, tgt_emb, config.affinity))
    walker = walker_loss(equality_matrix(src_labels), round_trip(p_st, p_ts))
    visit = visit_loss(visit_probs(p_st), config.gamma, config.renormalize_gamma)
    total = g.add(walker, g.scale(visit, config.beta))
    return AssocLosses(walker, visit, total)


# plain-array helpers for inspection and tests


def transition_arrays(src_emb, tgt_emb, kind=EUCLIDEAN):
    g = Graph()
    p_st, p_ts = transitions(affinity(g.constant(src_emb), g.constant(tgt_emb), kind))
    return p_st.value, p_ts.value
