"""Pretraining, per-batch adaptation and lagged evaluation over a stream.

A model ``f_0`` is trained on the labelled stationary set. Each incoming
target batch ``D_k`` is first scored by every model kept so far (lags
``k - j`` for ``f_j``), then ``f_{k-1}`` is adapted on it to give ``f_k``,
which is scored at lag 0. Only model checkpoints are retained; the batch is
dropped once its round ends.
"""

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import backbone
from .assoc import AFFINITY_KINDS, EUCLIDEAN, AssocLossConfig, assoc_loss
from .estimate import ClassDistribution, estimated_gamma, oracle_gamma
from .numgrad import ContractError
from .sampling import balanced_source_batch

GAMMA_MODES = ("none", "estimated", "oracle")
LOSS_KEYS = ("task", "walker", "visit", "total")


@dataclass
class PretrainConfig:
    hidden: tuple = (32,)
    embed_dim: int = 16
    steps: int = 500
    lr: float = 1e-3
    per_class: int = 10


@dataclass
class AdaptationConfig:
    beta: float = 0.5
    affinity: str = EUCLIDEAN
    gamma_mode: str = "none"
    steps: int = 200
    lr: float = 1e-3
    source_per_class: int = 10
    target_n: int = 100
    window: int = 1
    plateau_tol: float = 1e-4
    plateau_window: int = 20

    def __post_init__(self):
        if self.steps < 0:
            raise ContractError("steps must be >= 0")
        if self.window != 1:
            raise ContractError("only a window of one stream batch is supported")
        if self.gamma_mode not in GAMMA_MODES:
            raise ContractError(f"gamma_mode must be one of {GAMMA_MODES}")
        if self.affinity not in AFFINITY_KINDS:
            raise ContractError(f"affinity must be one of {AFFINITY_KINDS}")
        if self.beta < 0:
            raise ContractError("beta must be >= 0")


def evaluate(params, batch):
    """Fraction of rows whose argmax logit matches the label."""
    if len(batch) == 0:
        return float("nan")
    return float(np.mean(backbone.predict(params, batch.features) == batch.labels))


def pretrain(source, config=None, seed=0, return_losses=False):
    """Fit ``f_0`` on class-balanced source batches with the task loss only."""
    config = config or PretrainConfig()
    rng = np.random.default_rng(seed)
    params = backbone.init_params(source.input_dim, config.hidden, config.embed_dim,
                                  source.num_classes, seed=rng)
    state = backbone.init_state(params, lr=config.lr)
    losses = []
    for _ in range(config.steps):
        xs, ys = balanced_source_batch(source, config.per_class, rng)

        def build(g, embed):
            _, logits = embed(xs)
            return backbone.task_loss(g, logits, ys)

        loss, grads = backbone.loss_and_grads(params, build)
        losses.append(float(loss.value[0, 0]))
        params, state = backbone.opt_step(params, grads, state)
    return (params, losses) if return_losses else params


def _plateaued(totals, window, tol):
    if tol is None or len(totals) < 2 * window:
        return False
    recent = np.mean(totals[-window:])
    before = np.mean(totals[-2 * window:-window])
    return abs(recent - before) < tol * abs(before)


def step_gamma(mode, params, target_x, target_labels, num_classes):
    if mode == "none":
        return None
    if mode == "oracle":
        if target_labels is None:
            raise ContractError("oracle gamma needs the withheld target labels")
        return oracle_gamma(ClassDistribution.uniform(num_classes), target_labels)
    emb = backbone.forward(params, target_x).embeddings
    return estimated_gamma(emb, num_classes)


def adapt_round(params, source, target, config=None, seed=0, return_losses=False):
    """Run ``config.steps`` Adam updates of task + walker + beta * visit.

    ``target`` is a :class:`~streamassoc.sampling.LabeledDataset` whose labels
    are read only in oracle mode. Source batches are redrawn class-balanced
    each step; target mini-batches are drawn without replacement from
    ``target``.
    """
    config = config or AdaptationConfig()
    rng = np.random.default_rng(seed)
    C = source.num_classes
    losses = {k: [] for k in LOSS_KEYS}
    if config.steps == 0:
        return (params, losses) if return_losses else params
    m = min(config.target_n, len(target))
    if config.gamma_mode == "estimated" and m < C:
        raise ContractError(f"cannot cluster {m} target samples into {C} clusters")
    state = backbone.init_state(params, lr=config.lr)

    for _ in range(config.steps):
        xs, ys = balanced_source_batch(source, config.source_per_class, rng)
        idx = rng.choice(len(target), size=m, replace=False)
        xt = target.features[idx]
        gamma = step_gamma(config.gamma_mode, params, xt,
                           target.labels[idx] if config.gamma_mode == "oracle" else None, C)
        acfg = AssocLossConfig(config.beta, config.affinity, gamma)

        def build(g, embed):
            emb_s, logits_s = embed(xs)
            emb_t, _ = embed(xt)
            task = backbone.task_loss(g, logits_s, ys)
            a = assoc_loss(emb_s, ys, emb_t, acfg)
            return g.add(task, a.total), task, a.walker, a.visit

        (total, task, walker, visit), grads = backbone.loss_and_grads(params, build)
        for key, node in zip(LOSS_KEYS, (task, walker, visit, total)):
            losses[key].append(float(node.value[0, 0]))
        params, state = backbone.opt_step(params, grads, state)
        if _plateaued(losses["total"], config.plateau_window, config.plateau_tol):
            break
    return (params, losses) if return_losses else params


@dataclass
class LagMatrix:
    """``acc[k, m]``: accuracy on batch ``m`` of the model adapted through batch ``k``.

    Indices are 0-based; cells with ``k > m`` (batch not yet seen) are NaN.
    ``source_only[m]`` scores the pretrained model on batch ``m``.
    """

    acc: np.ndarray
    source_only: np.ndarray

    @property
    def K(self):
        return self.source_only.size

    def at_lag(self, batch, lag):
        k = batch - lag
        return float(self.acc[k, batch]) if 0 <= k <= batch else float("nan")

    def row(self, batch):
        """Accuracies on ``batch`` ordered by lag ``0..batch``."""
        return np.array([self.at_lag(batch, lag) for lag in range(batch + 1)])

    def absent(self):
        return np.isnan(self.acc)

    def to_lists(self):
        return [[None if np.isnan(v) else float(v) for v in row] for row in self.acc]


@dataclass
class StreamRunReport:
    losses: dict
    round_lengths: list
    lag: LagMatrix
    config: dict
    seed: int
    extra: dict = field(default_factory=dict)

    def to_json(self):
        doc = {
            "seed": self.seed,
            "config": self.config,
            "losses": self.losses,
            "round_lengths": self.round_lengths,
            "lag_matrix": self.lag.to_lists(),
            "source_only": [float(v) for v in self.lag.source_only],
            **self.extra,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        """Columns ``round,lag,accuracy,source_only``; absent cells are empty."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "lag", "accuracy", "source_only"])
        for m in range(self.lag.K):
            for lag in range(self.lag.K):
                v = self.lag.at_lag(m, lag)
                w.writerow([m + 1, lag, "" if np.isnan(v) else repr(v),
                            repr(float(self.lag.source_only[m]))])
        return buf.getvalue()


def run_stream(params, source, batches, config=None, seed=0, on_round_end=None):
    """Adapt sequentially over ``batches`` (any iterable) and build the lag matrix.

    ``on_round_end(k)`` is called after round ``k`` (0-based) has released
    its batch.
    """
    config = config or AdaptationConfig()
    seeds = np.random.SeedSequence(seed)
    f0 = params
    models = []
    cells = []
    source_only = []
    losses = {k: [] for k in LOSS_KEYS}
    round_lengths = []
    current = f0
    # no enumerate(): its cached result tuple would keep the last batch alive
    k = -1
    for batch in batches:
        k += 1
        source_only.append(evaluate(f0, batch))
        cells.append([(j, evaluate(f, batch)) for j, f in enumerate(models)])
        (round_seed,) = seeds.spawn(1)
        current, trace = adapt_round(current, source, batch, config,
                                     np.random.default_rng(round_seed), return_losses=True)
        cells[-1].append((k, evaluate(current, batch)))
        models.append(current)
        for key in LOSS_KEYS:
            losses[key].extend(trace[key])
        round_lengths.append(len(trace["total"]))
        del batch
        if on_round_end is not None:
            on_round_end(k)
    K = len(models)
    if K == 0:
        raise ContractError("the stream produced no batches")
    acc = np.full((K, K), np.nan)
    for m, row in enumerate(cells):
        for j, v in row:
            acc[j, m] = v
    return StreamRunReport(losses, round_lengths, LagMatrix(acc, np.array(source_only)),
                           asdict(config), int(seed))
