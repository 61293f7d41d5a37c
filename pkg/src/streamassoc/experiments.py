"""Reference synthetic experiments: the KL sweep, the drifting stream and the
visit-collapse toy.

Each is a plain function of a config and a seed so they can be fanned out
over seeds and aggregated afterwards.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import backbone
from .assoc import transition_arrays
from .datagen import Shift, gen_domain, gen_stream, linear_drift, make_domain_spec
from .sampling import balanced_source_batch, make_divergent_distribution
from .stream import (GAMMA_MODES, AdaptationConfig, PretrainConfig, adapt_round, evaluate,
                     pretrain, run_stream)


@dataclass
class DomainConfig:
    num_classes: int = 10
    input_dim: int = 16
    sigma: float = 1.0
    radius: float = 4.0
    angle: float = 1.5
    translation: float = 4.5
    n_source: int = 2000
    n_target: int = 300


@dataclass
class StreamConfig:
    K: int = 6
    n: int = 300
    angle_step: float = 0.3
    translation_step: float = 1.0
    kl_max: float = 0.1


# Reference training budgets. Adaptation runs a fixed number of steps so every
# gamma mode sees the same amount of optimization.
REFERENCE_PRETRAIN = PretrainConfig(steps=1000, lr=1e-3)
REFERENCE_ADAPT = AdaptationConfig(steps=600, beta=0.5, plateau_tol=None)


@dataclass
class KlTrial:
    kl: float
    seed: int
    source_only: float
    accuracy: dict = field(default_factory=dict)


def reference_domains(domain, seed):
    """Source domain spec and the rotated+translated target spec for ``seed``."""
    spec = make_domain_spec(domain.num_classes, domain.input_dim, domain.sigma,
                            domain.radius, seed)
    rng = np.random.default_rng([seed, 1])
    v = rng.standard_normal(domain.input_dim)
    v *= domain.translation / np.linalg.norm(v)
    return spec, spec.shifted(Shift(domain.angle, v, 1.0))


def kl_trial(kl, seed, domain=None, pretrain_cfg=None, adapt_cfg=None, modes=GAMMA_MODES):
    """Pretrain on the source, then adapt once per gamma mode on a KL-shifted target."""
    domain = domain or DomainConfig()
    pretrain_cfg = pretrain_cfg or REFERENCE_PRETRAIN
    adapt_cfg = adapt_cfg or REFERENCE_ADAPT
    src_spec, tgt_spec = reference_domains(domain, seed)
    source = gen_domain(src_spec, domain.n_source, seed=[seed, 2])
    dist = make_divergent_distribution(domain.num_classes, kl, seed).distribution
    target = gen_domain(tgt_spec, domain.n_target, dist, seed=[seed, 3])
    f0 = pretrain(source, pretrain_cfg, seed=[seed, 4])
    trial = KlTrial(kl, seed, evaluate(f0, target))
    for mode in modes:
        f1 = adapt_round(f0, source, target, replace(adapt_cfg, gamma_mode=mode), seed=[seed, 5])
        trial.accuracy[mode] = evaluate(f1, target)
    return trial


def aggregate_kl(trials, modes=GAMMA_MODES):
    """One row per (kl, mode): mean/std accuracy across seeds plus the source-only mean."""
    rows = []
    for kl in sorted({t.kl for t in trials}):
        group = [t for t in trials if t.kl == kl]
        src = np.array([t.source_only for t in group])
        for mode in modes:
            acc = np.array([t.accuracy[mode] for t in group])
            rows.append({"kl": kl, "mode": mode, "mean_accuracy": float(acc.mean()),
                         "std_accuracy": float(acc.std()), "n_seeds": len(group),
                         "source_only_mean": float(src.mean())})
    return rows


def reference_stream(seed, domain=None, stream=None):
    """Source dataset, target domain spec and drift schedule for a stream run."""
    domain = domain or DomainConfig()
    stream = stream or StreamConfig()
    src_spec, tgt_spec = reference_domains(domain, seed)
    source = gen_domain(src_spec, domain.n_source, seed=[seed, 2])
    rng = np.random.default_rng([seed, 6])
    direction = rng.standard_normal(domain.input_dim)
    direction /= np.linalg.norm(direction)
    schedule = linear_drift(stream.K, stream.n, domain.num_classes, domain.input_dim,
                            angle_step=stream.angle_step,
                            translation_step=stream.translation_step * direction,
                            kl_max=stream.kl_max, base=tgt_spec.shift, seed=seed)
    return source, src_spec, schedule


def stream_trial(seed, domain=None, stream=None, pretrain_cfg=None, adapt_cfg=None):
    source, spec, schedule = reference_stream(seed, domain, stream)
    f0 = pretrain(source, pretrain_cfg or REFERENCE_PRETRAIN, seed=[seed, 4])
    return run_stream(f0, source, gen_stream(spec, schedule, seed=[seed, 7]),
                      adapt_cfg or REFERENCE_ADAPT, seed=seed)


@dataclass
class VisitToyConfig:
    input_dim: int = 4
    radius: float = 5.0
    translation: float = 6.0
    majority: float = 0.9
    n_source: int = 400
    n_target: int = 40
    pretrain_steps: int = 1000
    adapt_steps: int = 600


def min_visit_mass(seed, beta, toy=None):
    """Smallest target visit probability times N_T after one adaptation round.

    Two well separated source classes, a translated target where one class
    makes up ``toy.majority`` of the batch. A value below 0.1 means some
    target is essentially never reached by the walker.
    """
    toy = toy or VisitToyConfig()
    spec = make_domain_spec(2, toy.input_dim, radius=toy.radius, seed=seed)
    source = gen_domain(spec, toy.n_source, seed=[seed, 1])
    v = np.random.default_rng([seed, 2]).standard_normal(toy.input_dim)
    v *= toy.translation / np.linalg.norm(v)
    target = gen_domain(spec.shifted(Shift(0.0, v, 1.0)), toy.n_target,
                        [toy.majority, 1 - toy.majority], seed=[seed, 3])
    f0 = pretrain(source, PretrainConfig(hidden=(16,), embed_dim=8, steps=toy.pretrain_steps),
                  seed=[seed, 4])
    cfg = AdaptationConfig(beta=beta, steps=toy.adapt_steps, target_n=toy.n_target,
                           plateau_tol=None)
    f1 = adapt_round(f0, source, target, cfg, seed=[seed, 5])
    xs, _ = balanced_source_batch(source, cfg.source_per_class, [seed, 6])
    p_st, _ = transition_arrays(backbone.forward(f1, xs).embeddings,
                                backbone.forward(f1, target.features).embeddings)
    return float(p_st.mean(axis=0).min() * toy.n_target)
