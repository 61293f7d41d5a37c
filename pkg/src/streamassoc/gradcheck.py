"""Finite-difference suites for every differentiable loss in the package."""

import time
from dataclasses import dataclass

import numpy as np

from . import assoc, backbone
from .numgrad import grad_check

DEFAULT_TOL = 1e-4
DEFAULT_STEP = 1e-5


@dataclass
class SuiteResult:
    name: str
    max_error: float
    cases: int
    seconds: float
    tol: float

    @property
    def passed(self):
        return self.max_error < self.tol


def _flip_gradient(node):
    # identity forward, negated backward: used to prove the suites catch sign errors
    g = node.graph
    return g._push("flip_grad", (node,), node.value, lambda adj: (-adj,))


def _case(seed, max_size=8):
    rng = np.random.default_rng(seed)
    ns, nt, d = (int(v) for v in rng.integers(2, max_size + 1, size=3))
    C = int(rng.integers(2, min(ns, 4) + 1))
    labels = np.concatenate([np.arange(C), rng.integers(0, C, ns - C)])
    rng.shuffle(labels)
    return {
        "src": rng.normal(size=(ns, d)),
        "tgt": rng.normal(size=(nt, d)),
        "head": rng.normal(size=(d, C)) / np.sqrt(d),
        "y": backbone.one_hot(labels, C),
        "gamma": rng.uniform(0.2, 5.0, size=nt),
    }


def _suites(kind, fault):
    def walker(g, s, t, y):
        p_st, p_ts = assoc.transitions(assoc.affinity(s, t, kind))
        loss = assoc.walker_loss(assoc.equality_matrix(y), assoc.round_trip(p_st, p_ts))
        return _flip_gradient(loss) if fault == "walker-sign" else loss

    def visit(g, s, t, gamma):
        p_st, _ = assoc.transitions(assoc.affinity(s, t, kind))
        return assoc.visit_loss(assoc.visit_probs(p_st), gamma)

    def total(g, s, t, w, c):
        cfg = assoc.AssocLossConfig(beta=0.5, affinity=kind, gamma=c["gamma"])
        task = backbone.task_loss(g, g.matmul(s, w), c["y"])
        a = assoc.assoc_loss(s, c["y"], t, cfg)
        if fault == "walker-sign":
            return g.add(task, g.add(_flip_gradient(a.walker), g.scale(a.visit, cfg.beta)))
        return g.add(task, a.total)

    return {
        "task": lambda c: grad_check(
            lambda g, s, w: backbone.task_loss(g, g.matmul(s, w), c["y"]),
            (c["src"], c["head"]), DEFAULT_STEP),
        "walker": lambda c: grad_check(
            lambda g, s, t: walker(g, s, t, c["y"]), (c["src"], c["tgt"]), DEFAULT_STEP),
        "visit": lambda c: grad_check(
            lambda g, s, t: visit(g, s, t, None), (c["src"], c["tgt"]), DEFAULT_STEP),
        "visit_weighted": lambda c: grad_check(
            lambda g, s, t: visit(g, s, t, c["gamma"]), (c["src"], c["tgt"]), DEFAULT_STEP),
        "total": lambda c: grad_check(
            lambda g, s, t, w: total(g, s, t, w, c), (c["src"], c["tgt"], c["head"]),
            DEFAULT_STEP),
    }


def run_suites(seeds=50, kinds=assoc.AFFINITY_KINDS, tol=DEFAULT_TOL, fault=None):
    """Check every loss on ``seeds`` random cases per affinity kind.

    ``fault="walker-sign"`` negates the walker gradient so callers can
    confirm a broken gradient is reported.
    """
    results = []
    for kind in kinds:
        for name, check in _suites(kind, fault).items():
            start = time.perf_counter()
            worst = max(check(_case(seed)) for seed in range(seeds))
            results.append(SuiteResult(f"{name}[{kind}]", worst, seeds,
                                       time.perf_counter() - start, tol))
    return results
