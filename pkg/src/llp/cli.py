"""``llp`` command line: train, propagate, eval, ablate, mds, bench.

Exit codes: 0 success, 2 invalid configuration or input, 1 runtime failure.
"""
import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from .bank import EmbeddingBank
from .config import ExperimentConfig
from .errors import ConfigurationError, LLPError
from .evaluation import evaluate, mds_coords, write_mds_csv
from .experiment import (ensure_dir, expand_grid, prepare, run_ablation_grid,
                         run_experiment, write_ablation_csv)
from .model import MlpNetwork
from .neighbors import DensityTable, compute_density
from .propagation import LabelState, propagate_all

log = logging.getLogger("llp")


class UsageError(Exception):
    """Bad flags or inputs; mapped to exit code 2."""


def _bool(text):
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _global_flags():
    # SUPPRESS so a flag given before the subcommand is not reset by the subparser
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--config", help="JSON ExperimentConfig; flags override its fields")
    return p


def _experiment_flags(p):
    g = p.add_argument_group("experiment")
    g.add_argument("--dataset")
    g.add_argument("--labels", type=float, dest="label_fraction", help="labelled fraction p")
    g.add_argument("--unlabeled", type=float, dest="unlabeled_fraction", help="kept unlabelled fraction q")
    g.add_argument("--input-scale", type=float)
    g.add_argument("--k", type=int)
    g.add_argument("--t", type=int)
    g.add_argument("--tau", type=float)
    g.add_argument("--local", type=_bool, dest="local_weighting")
    g.add_argument("--confidence", type=_bool, dest="use_confidence")
    g.add_argument("--cadence", choices=("epoch", "batch"))
    g.add_argument("--category", type=_bool, dest="category_loss")
    g.add_argument("--epochs", type=int, dest="max_epochs")
    g.add_argument("--warmup-epochs", type=int)
    g.add_argument("--lr", type=float, dest="base_lr")
    g.add_argument("--warmup-lr", type=float)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--patience", type=int)


_GLOBALS = ("seed", "workers", "out", "config")
_TOP = ("dataset", "label_fraction", "unlabeled_fraction", "input_scale", "seed", "workers", "out")
_PROP = ("k", "t", "tau", "local_weighting", "use_confidence", "cadence")
_SCHED = ("category_loss", "max_epochs", "warmup_epochs", "base_lr", "warmup_lr", "batch_size", "patience")


def build_config(args):
    """Defaults, then the --config file, then explicit flags."""
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = ExperimentConfig.loads(fh.read())
        except (OSError, ValueError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from None
    else:
        cfg = ExperimentConfig()

    def pick(names):
        return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}

    prop = dataclasses.replace(cfg.propagation, **pick(_PROP))
    sched = dataclasses.replace(cfg.schedule, **pick(_SCHED))
    cfg = dataclasses.replace(cfg, propagation=prop, schedule=sched, **pick(_TOP))
    return cfg.validate()


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_train(args):
    if not args.config and not args.dataset:
        raise UsageError("train needs --dataset or --config")
    cfg = build_config(args)
    out = ensure_dir(cfg.out)
    ckpt = ensure_dir(os.path.join(out, "checkpoints"))
    with open(os.path.join(out, "config.json"), "w") as fh:
        fh.write(cfg.dumps())

    def on_drop(count, net, bank):
        net.save(os.path.join(ckpt, f"drop{count}_net.bin"))
        bank.save(os.path.join(ckpt, f"drop{count}_bank.bin"))

    result = run_experiment(cfg, on_drop=on_drop)
    result.report.to_csv(os.path.join(out, "report.csv"))
    result.report.timing_csv(os.path.join(out, "timing.csv"))
    summary = dict(result.report.summary(), ir_loss_before_warmup=result.ir_before,
                   ir_loss_after_warmup=result.ir_after)
    _write_json(os.path.join(out, "summary.json"), summary)
    result.net.save(os.path.join(out, "net.bin"))
    result.bank.save(os.path.join(out, "bank.bin"))
    result.trainer.state.to_csv(os.path.join(out, "labels.csv"))
    return 0


def cmd_propagate(args):
    bank = EmbeddingBank.load(args.bank)
    labels = LabelState.from_csv(args.labels_file, class_count=args.classes)
    if len(labels) != bank.count:
        raise UsageError(f"bank has {bank.count} rows but labels file has {len(labels)}")
    cfg = build_config(args)
    prop = dataclasses.replace(cfg.propagation, local_weighting=args.method == "local", workers=cfg.workers)
    snap = bank.snapshot()
    density = None
    if prop.local_weighting and labels.labeled_ids.size:
        if args.uniform_density:
            density = DensityTable.uniform(labels.labeled_ids)
        else:
            density = compute_density(snap, labels.labeled_ids, prop.t, prop.tau, workers=prop.workers,
                                      pool=prop.density_pool, exclude_self=prop.density_exclude_self)
    state = propagate_all(snap, labels, density, prop)
    path = args.out if args.out and args.out.endswith(".csv") else os.path.join(ensure_dir(args.out or "."),
                                                                                 "propagated.csv")
    state.to_csv(path)
    return 0


def _load_run(run_dir, checkpoint):
    with open(os.path.join(run_dir, "config.json")) as fh:
        cfg = ExperimentConfig.loads(fh.read())
    prefix = "" if checkpoint == "final" else os.path.join("checkpoints", checkpoint + "_")
    net = MlpNetwork.load(os.path.join(run_dir, prefix + "net.bin"))
    bank = EmbeddingBank.load(os.path.join(run_dir, prefix + "bank.bin"))
    return cfg, net, bank


def cmd_eval(args):
    cfg, net, bank = _load_run(args.run, args.checkpoint)
    ds, labels, _, _ = prepare(cfg)
    train, val = ds.train(), ds.val()
    if bank.count != len(train):
        raise UsageError("checkpoint bank does not match the configured dataset")
    report = evaluate(net, bank.snapshot(), labels, train.true_labels, val.features, val.true_labels,
                      pool=args.pool)
    report.to_csv(os.path.join(ensure_dir(args.out or args.run), "eval.csv"))
    return 0


def cmd_ablate(args):
    if not args.config and not args.dataset:
        raise UsageError("ablate needs --dataset or --config")
    cfg = build_config(args)
    grid = expand_grid(k=tuple(args.grid_k), confidence=tuple(args.grid_confidence),
                       category=tuple(args.grid_category), local=tuple(args.grid_local))
    rows = run_ablation_grid(cfg, grid)
    write_ablation_csv(os.path.join(ensure_dir(cfg.out), "ablation.csv"), rows)
    return 0


def cmd_mds(args):
    bank = EmbeddingBank.load(args.bank)
    if args.ids:
        ids = np.array([int(s) for s in args.ids.split(",")], dtype=np.int64)
    else:
        rng = np.random.default_rng([args.seed or 0, 7])
        ids = np.sort(rng.choice(bank.count, size=min(args.sample, bank.count), replace=False))
    if ids.min() < 0 or ids.max() >= bank.count:
        raise UsageError("point id out of range")
    labels = LabelState.from_csv(args.labels_file).label[ids] if args.labels_file else None
    coords = mds_coords(bank.snapshot(), ids)
    path = args.out if args.out and args.out.endswith(".csv") else os.path.join(ensure_dir(args.out or "."),
                                                                                 "mds.csv")
    write_mds_csv(path, ids, coords, labels)
    return 0


def cmd_bench(args):
    from .bench import run_bench, summarize, write_bench_csv

    cells = run_bench(args.n, args.m, args.workers_list, d=args.d, repeats=args.repeats)
    out = ensure_dir(args.out or "bench")
    write_bench_csv(os.path.join(out, "bench.csv"), cells)
    _write_json(os.path.join(out, "bench_summary.json"), summarize(cells))
    return 0


def build_parser():
    glob = _global_flags()
    ap = argparse.ArgumentParser(prog="llp", description="Local label propagation experiments.", parents=[glob])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[glob], help="warmup plus LLP training")
    _experiment_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("propagate", parents=[glob], help="pseudo-label a bank from a labels CSV")
    _experiment_flags(p)
    p.add_argument("--bank", required=True)
    p.add_argument("--labels-file", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--method", choices=("naive", "local"), default="local")
    p.add_argument("--uniform-density", action="store_true", help="force all densities equal")
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("eval", parents=[glob], help="evaluate a training run's checkpoint")
    p.add_argument("--run", required=True)
    p.add_argument("--checkpoint", default="final", help="'final' or e.g. 'drop1'")
    p.add_argument("--pool", choices=("labeled", "all"), default="labeled")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", parents=[glob], help="grid of training runs")
    _experiment_flags(p)
    p.add_argument("--grid-k", type=int, nargs="+", default=[10])
    p.add_argument("--grid-confidence", type=_bool, nargs="+", default=[True])
    p.add_argument("--grid-category", type=_bool, nargs="+", default=[True])
    p.add_argument("--grid-local", type=_bool, nargs="+", default=[True])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("mds", parents=[glob], help="2-D MDS coordinates of bank rows")
    p.add_argument("--bank", required=True)
    p.add_argument("--ids", help="comma-separated point ids")
    p.add_argument("--sample", type=int, default=500)
    p.add_argument("--labels-file")
    p.set_defaults(func=cmd_mds)

    p = sub.add_parser("bench", parents=[glob], help="propagation scaling benchmark")
    p.add_argument("--n", type=int, nargs="+", default=[10_000, 20_000, 40_000, 80_000])
    p.add_argument("--m", type=int, default=1000)
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--workers-list", type=int, nargs="+", default=[1, 4])
    p.add_argument("--repeats", type=int, default=5)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    for name in _GLOBALS:
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        return args.func(args)
    except (ConfigurationError, UsageError) as exc:
        print(f"llp {args.command}: {exc}", file=sys.stderr)
        return 2
    except (LLPError, OSError, ValueError) as exc:
        print(f"llp {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
