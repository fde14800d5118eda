"""Command-line entry point: ``xfmr-tl <subcommand> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from . import gridgen, surrogate
from .harness import PlanError, load_plan, run_experiment
from .harness.runner import history_csv
from .metrics import MetricError
from .nn import checkpoint as ck
from .nn.model import ArchitectureMismatch
from .nn.train import TrainConfig, evaluate, fast_config, train
from .report import ReportError, write_report

log = logging.getLogger("xfmr_tl")


class CliError(Exception):
    pass


def _load_train_config(path, fast: bool) -> TrainConfig:
    """TrainConfig from a YAML file: either a bare mapping or a plan's ``train:`` block."""
    cfg = TrainConfig()
    if path:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        doc = doc.get("train", doc) if isinstance(doc, dict) else {}
        known = set(TrainConfig.__dataclass_fields__)
        cfg = TrainConfig.from_dict({k: v for k, v in doc.items() if k in known})
    return fast_config(cfg) if fast else cfg


def cmd_gen_data(args) -> int:
    specs = gridgen.load_grid_specs(args.config, fast=args.fast)
    techs = surrogate.load_profiles(args.config)
    if args.grid not in specs:
        raise CliError(f"unknown grid {args.grid!r}; known: {', '.join(sorted(specs))}")
    spec = specs[args.grid]
    if spec.tech not in techs:
        raise CliError(f"grid {spec.name!r} references missing technology profile {spec.tech!r}")
    ds = gridgen.prepare(spec, techs[spec.tech], split_seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    gridgen.save_dataset(ds, out)
    print(f"{spec.name}: {len(ds)} points "
          f"(train {len(ds.split['train'])}, val {len(ds.split['val'])}, "
          f"test {len(ds.split['test'])}) -> {out}")
    for name, mu, sd in zip(gridgen.COLUMNS, ds.norm_mean, ds.norm_std):
        print(f"  {name:>7s}  mean {mu: .6g}  std {sd:.6g}")
    if args.export_csv:
        csv_path = out.with_suffix(".csv")
        gridgen.export_csv(ds, csv_path)
        print(f"csv -> {csv_path}")
    return 0


def _train(args, require_init: bool) -> int:
    if require_init and not args.init_from:
        raise CliError("transfer needs --init-from CHECKPOINT")
    cfg = _load_train_config(args.config, args.fast)
    cfg = replace(cfg, seed=args.seed)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)
    ds = gridgen.load_dataset(args.data)
    if args.density < 1.0:
        ds = gridgen.subsample_density(ds, args.density, args.seed)
    init = ck.load_checkpoint(args.init_from) if args.init_from else None
    ckpt, history = train(ds, cfg, init=init)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ck.save_checkpoint(ckpt, out)
    hist = out.with_suffix(".history.csv")
    hist.write_text(history_csv(history))
    last = history[-1] if history else {}
    print(f"trained {ds.name} density {args.density:g} seed {args.seed}: "
          f"{cfg.epochs} epochs, final loss {last.get('train_loss', float('nan')):.6g}, "
          f"val R2 {last.get('val_r2', float('nan')):.6f}")
    print(f"checkpoint -> {out}\nhistory -> {hist}")
    return 0


def cmd_train(args) -> int:
    return _train(args, require_init=False)


def cmd_transfer(args) -> int:
    return _train(args, require_init=True)


def cmd_eval(args) -> int:
    ckpt = ck.load_checkpoint(args.checkpoint)
    ds = gridgen.load_dataset(args.data)
    report = evaluate(ckpt.to_model(), ds, args.split)
    print(report.to_text())
    return 0


def cmd_experiment(args) -> int:
    seeds = [args.seed] if args.seed is not None else None
    plan = load_plan(args.config, fast=args.fast, out_dir=args.out, workers=args.workers,
                     seeds=seeds)
    summary = run_experiment(plan)
    out = Path(plan.out_dir)
    print(f"{len(summary['records'])} records ({summary['failed']} failed), "
          f"{summary['jobs_run']} new training runs -> {out / 'results.csv'}")
    for row in summary["best_ri"]:
        ri = row["best_ri"]
        tag = "matched" if row["matched"] else "non-matched"
        print(f"  best RI {row['grid']:<16s} {tag:<11s} td {row['target_density']:<6g} "
              + ("undefined" if ri is None else f"{ri:+.2f}% (source {row['best_source_density']:g})"))
    for row in summary["data_reduction"]:
        print(f"  data reduction {row['grid']}: transfer@{row['transfer_density']:g} "
              f"{row['r2_transfer']:.4f} vs baseline@{row['baseline_density']:g} "
              f"{row['r2_baseline']:.4f} -> {'pass' if row['passed'] else 'fail'}")
    return 0 if summary["failed"] == 0 else 1


def cmd_report(args) -> int:
    written = write_report(args.results, args.out)
    for p in written:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xfmr-tl", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate, split and save a grid dataset")
    g.add_argument("--config", help="profiles YAML (default: bundled profiles)")
    g.add_argument("--grid", required=True, help="grid name from the profiles file")
    g.add_argument("--out", required=True, help="output .xgrd path")
    g.add_argument("--seed", type=int, default=0, help="split seed")
    g.add_argument("--fast", action="store_true", help="use the reduced fast_steps sweep")
    g.add_argument("--export-csv", action="store_true", help="also write a CSV twin")
    g.set_defaults(func=cmd_gen_data)

    for name, func, text in (("train", cmd_train, "train one model"),
                             ("transfer", cmd_transfer, "fine-tune from a source checkpoint")):
        t = sub.add_parser(name, help=text)
        t.add_argument("--data", required=True, help=".xgrd dataset")
        t.add_argument("--out", required=True, help="output .xckp path")
        t.add_argument("--config", help="YAML with TrainConfig fields or a train: block")
        t.add_argument("--seed", type=int, default=0)
        t.add_argument("--density", type=float, default=1.0, help="train-split fraction kept")
        t.add_argument("--init-from", help="checkpoint to initialize from")
        t.add_argument("--epochs", type=int, help="override the epoch count")
        t.add_argument("--fast", action="store_true", help="fast profile (50 epochs, 64 hidden)")
        t.set_defaults(func=func)

    e = sub.add_parser("eval", help="R^2 of a checkpoint on one split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=["train", "val", "test"], default="test")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("experiment", help="run the full transfer-learning plan")
    x.add_argument("--config", help="plan YAML (default: bundled desk plan)")
    x.add_argument("--out", help="output directory (overrides the plan)")
    x.add_argument("--workers", type=int, help="parallel training processes")
    x.add_argument("--seed", type=int, help="run a single seed instead of the plan's list")
    x.add_argument("--fast", action="store_true", help="fast profile: small grids, short runs")
    x.set_defaults(func=cmd_experiment)

    r = sub.add_parser("report", help="charts and tables from results.csv")
    r.add_argument("--results", required=True, help="results.csv from an experiment")
    r.add_argument("--out", required=True, help="directory for SVG and CSV files")
    r.set_defaults(func=cmd_report)
    return p


EXPECTED = (CliError, PlanError, ReportError, MetricError, ArchitectureMismatch,
            gridgen.DatasetError, ck.CheckpointError, surrogate.SurrogateError,
            FileNotFoundError, KeyError, ValueError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EXPECTED as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
