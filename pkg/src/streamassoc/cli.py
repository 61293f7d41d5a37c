"""Command-line entry point.

Configuration is an INI file with one section per module::

    [model]      hidden, embed_dim
    [pretrain]   steps, lr, per_class
    [adapt]      beta, affinity, gamma_mode, steps, lr, source_per_class,
                 target_n, plateau_tol, plateau_window
    [domain]     num_classes, input_dim, sigma, radius, angle, translation,
                 n_source, n_target
    [sampling]   kl
    [stream]     K, n, angle_step, translation_step, kl_max
    [run]        seeds, out

Precedence is ``--set section.key=value`` / ``--seed`` / ``--out`` flags,
then the file, then built-in defaults. Exit codes: 0 ok, 1 check failure,
2 usage or config error.
"""

import argparse
import configparser
import csv
import dataclasses
import io
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import backbone
from .backbone import atomic_write
from .experiments import (REFERENCE_ADAPT, DomainConfig, StreamConfig, aggregate_kl, kl_trial,
                          reference_domains, stream_trial)
from .gradcheck import DEFAULT_TOL, run_suites
from .numgrad import ContractError
from .sampling import make_divergent_distribution
from .stream import AdaptationConfig, PretrainConfig, adapt_round, evaluate, pretrain

SWEEP_COLUMNS = ["kl", "mode", "mean_accuracy", "std_accuracy", "n_seeds", "source_only_mean"]
STREAM_COLUMNS = ["round", "lag", "accuracy", "source_only"]

EPILOG = f"""\
CSV outputs:
  sweep-kl  sweep_kl.csv   {",".join(SWEEP_COLUMNS)}
            one row per (kl, gamma mode) aggregated over seeds
  stream    stream_seed<N>.csv   {",".join(STREAM_COLUMNS)}
            round = 1-based stream batch, lag = rounds since the scoring
            model was adapted; accuracy is empty when that model did not
            exist yet
"""


class ConfigError(ValueError):
    pass


@dataclass
class ModelSection:
    hidden: tuple = (32,)
    embed_dim: int = 16


@dataclass
class SamplingSection:
    kl: tuple = (0.05, 0.2, 0.4)


@dataclass
class RunSection:
    seeds: tuple = (0,)
    out: str = "out"


@dataclass
class PretrainSection:
    steps: int = 1000
    lr: float = 1e-3
    per_class: int = 10


@dataclass
class ExperimentConfig:
    model: ModelSection = field(default_factory=ModelSection)
    pretrain: PretrainSection = field(default_factory=PretrainSection)
    adapt: AdaptationConfig = field(default_factory=lambda: REFERENCE_ADAPT)
    domain: DomainConfig = field(default_factory=DomainConfig)
    sampling: SamplingSection = field(default_factory=SamplingSection)
    stream: StreamConfig = field(default_factory=StreamConfig)
    run: RunSection = field(default_factory=RunSection)

    def pretrain_config(self):
        return PretrainConfig(tuple(self.model.hidden), self.model.embed_dim,
                              self.pretrain.steps, self.pretrain.lr, self.pretrain.per_class)

    def to_dict(self):
        return dataclasses.asdict(self)


def _convert(raw, default, where):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in raw.replace(",", " ").split())
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            if raw.lower() in ("none", ""):
                return None
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def _apply(cfg, section, key, raw):
    if section not in {f.name for f in dataclasses.fields(cfg)}:
        raise ConfigError(f"unknown section [{section}]")
    sub = getattr(cfg, section)
    names = {f.name: f for f in dataclasses.fields(sub)}
    if key not in names:
        raise ConfigError(f"{section}.{key}: unknown key")
    current = getattr(sub, key)
    default = names[key].default
    if default is dataclasses.MISSING:
        default = current
    value = _convert(raw, current if current is not None else default, f"{section}.{key}")
    try:
        setattr(cfg, section, dataclasses.replace(sub, **{key: value}))
    except (ContractError, ValueError) as exc:
        raise ConfigError(f"{section}.{key}: {exc}") from None


def load_config(path=None, overrides=()):
    cfg = ExperimentConfig()
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for section in parser.sections():
            for key, raw in parser.items(section):
                _apply(cfg, section, key, raw)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, raw = item.split("=", 1)
        section, key = lhs.split(".", 1)
        _apply(cfg, section, key, raw)
    return cfg


def _write_text(path, text):
    atomic_write(path, text.encode())


def _write_csv(path, columns, rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    _write_text(path, buf.getvalue())


def _smooth(values, blocks=20):
    """Means over ``blocks`` equal consecutive chunks of the loss trace."""
    values = np.asarray(values, dtype=float)
    if values.size < blocks:
        return values
    return np.array([c.mean() for c in np.array_split(values, blocks)])


# -- commands ----------------------------------------------------------------


def cmd_pretrain(cfg, out):
    from .datagen import gen_domain

    seed = cfg.run.seeds[0]
    spec, _ = reference_domains(cfg.domain, seed)
    source = gen_domain(spec, cfg.domain.n_source, seed=[seed, 2])
    held_out = gen_domain(spec, cfg.domain.n_source, seed=[seed, 8])
    params, losses = pretrain(source, cfg.pretrain_config(), seed=[seed, 4], return_losses=True)
    backbone.save_checkpoint(os.path.join(out, "model.npz"), params, cfg.to_dict())
    smoothed = _smooth(losses)
    metrics = {
        "seed": seed,
        "final_loss": losses[-1] if losses else None,
        "source_accuracy": evaluate(params, held_out),
        "smoothed_loss": [float(v) for v in smoothed],
    }
    _write_text(os.path.join(out, "pretrain_metrics.json"), json.dumps(metrics, indent=2) + "\n")
    print(f"source accuracy {metrics['source_accuracy']:.4f}, final loss {metrics['final_loss']:.4f}")
    return 0


def cmd_adapt(cfg, out):
    from .datagen import gen_domain

    rows = []
    kl = cfg.sampling.kl[0] if cfg.sampling.kl else 0.0
    for seed in cfg.run.seeds:
        spec, tgt_spec = reference_domains(cfg.domain, seed)
        source = gen_domain(spec, cfg.domain.n_source, seed=[seed, 2])
        dist = make_divergent_distribution(cfg.domain.num_classes, kl, seed).distribution
        target = gen_domain(tgt_spec, cfg.domain.n_target, dist, seed=[seed, 3])
        f0 = pretrain(source, cfg.pretrain_config(), seed=[seed, 4])
        f1 = adapt_round(f0, source, target, cfg.adapt, seed=[seed, 5])
        rows.append({"seed": seed, "kl": kl, "mode": cfg.adapt.gamma_mode,
                     "source_only": evaluate(f0, target), "adapted": evaluate(f1, target)})
        print(f"seed {seed}: source-only {rows[-1]['source_only']:.4f} "
              f"-> adapted {rows[-1]['adapted']:.4f}")
    _write_csv(os.path.join(out, "adapt.csv"), list(rows[0]), rows)
    return 0


def cmd_sweep_kl(cfg, out):
    trials = []
    for kl in cfg.sampling.kl:
        for seed in cfg.run.seeds:
            trials.append(kl_trial(kl, seed, cfg.domain, cfg.pretrain_config(), cfg.adapt))
    rows = aggregate_kl(trials)
    _write_csv(os.path.join(out, "sweep_kl.csv"), SWEEP_COLUMNS, rows)
    for r in rows:
        print(f"kl={r['kl']:<5} {r['mode']:<10} {r['mean_accuracy']:.4f} +- {r['std_accuracy']:.4f}"
              f" (source-only {r['source_only_mean']:.4f})")
    return 0


def cmd_stream(cfg, out):
    for seed in cfg.run.seeds:
        report = stream_trial(seed, cfg.domain, cfg.stream, cfg.pretrain_config(), cfg.adapt)
        report.config = cfg.to_dict()
        _write_text(os.path.join(out, f"stream_seed{seed}.json"), report.to_json())
        _write_text(os.path.join(out, f"stream_seed{seed}.csv"), report.to_csv())
        lag0 = [report.lag.at_lag(m, 0) for m in range(report.lag.K)]
        print(f"seed {seed}: lag-0 {np.round(lag0, 3).tolist()} "
              f"source-only {np.round(report.lag.source_only, 3).tolist()}")
    return 0


def cmd_gradcheck(cfg, out, seeds=50, fault=None):
    results = run_suites(seeds=seeds, tol=DEFAULT_TOL, fault=fault)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:<28} max_rel_err={r.max_error:.3e} tol={r.tol:.0e} "
              f"cases={r.cases} {r.seconds:.1f}s")
    failed = [r for r in results if not r.passed]
    for r in failed:
        print(f"failing op: {r.name} max error {r.max_error:.3e}", file=sys.stderr)
    return 1 if failed else 0


def cmd_gen_data(cfg, out):
    from .datagen import gen_domain, gen_stream
    from .experiments import reference_stream

    seed = cfg.run.seeds[0]
    spec, tgt_spec = reference_domains(cfg.domain, seed)
    source = gen_domain(spec, cfg.domain.n_source, seed=[seed, 2])
    dist = make_divergent_distribution(cfg.domain.num_classes, cfg.sampling.kl[-1], seed).distribution
    target = gen_domain(tgt_spec, cfg.domain.n_target, dist, seed=[seed, 3])
    _, stream_spec, schedule = reference_stream(seed, cfg.domain, cfg.stream)
    arrays = {"source_x": source.features, "source_y": source.labels,
              "target_x": target.features, "target_y": target.labels}
    for k, batch in enumerate(gen_stream(stream_spec, schedule, seed=[seed, 7]), start=1):
        arrays[f"stream{k}_x"] = batch.features
        arrays[f"stream{k}_y"] = batch.labels
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write(os.path.join(out, f"data_seed{seed}.npz"), buf.getvalue())
    print(f"wrote {len(arrays) // 2} datasets to {out}")
    return 0


COMMANDS = {
    "pretrain": cmd_pretrain,
    "adapt": cmd_adapt,
    "sweep-kl": cmd_sweep_kl,
    "stream": cmd_stream,
    "gradcheck": cmd_gradcheck,
    "gen-data": cmd_gen_data,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="streamassoc", description=__doc__.splitlines()[0],
                                     epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config key")
        if name == "gradcheck":
            p.add_argument("--seeds", type=int, default=50, help="random cases per suite")
            p.add_argument("--inject-fault", choices=["walker-sign"], help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    overrides = list(args.set)
    if args.seed:
        overrides.append("run.seeds=" + ",".join(str(s) for s in args.seed))
    if args.out:
        overrides.append(f"run.out={args.out}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = cfg.run.out
    if args.command == "gradcheck":
        return cmd_gradcheck(cfg, out, seeds=args.seeds, fault=args.inject_fault)
    os.makedirs(out, exist_ok=True)
    return COMMANDS[args.command](cfg, out)


if __name__ == "__main__":
    sys.exit(main())
