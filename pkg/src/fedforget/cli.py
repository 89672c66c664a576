"""Command-line interface.

Every subcommand takes --config and operates on the artifact files in the
config's output directory, so stages can be re-run independently:

    fedforget train    --config cfg.json          -> baseline.ckpt
    fedforget explain  --config cfg.json          -> influential.json
    fedforget unlearn  --config cfg.json [--scheme de|ce]
                       [--select important|random|nonimportant]
                                                  -> unlearned.ckpt
    fedforget eval     --config cfg.json          -> metrics.csv, summary
    fedforget attack   --config cfg.json          -> attack.csv
    fedforget costs    --config cfg.json [--delta D] [--n N]
    fedforget run      --config cfg.json          -> full pipeline + manifest
    fedforget init-config [path]                  -> starter config

Exit codes: 0 success, 1 config error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .checkpoint import load_model
from .config import ExperimentConfig, default_config_json, load_config
from .errors import FedforgetError
from .explain import InfluentialSet
from .metrics import CostModelParams, format_cost_table, write_metrics_csv, write_timings_csv
from .pipeline import (
    build_clients,
    load_run_dataset,
    run_pipeline,
    stage_attack,
    stage_costs,
    stage_explain,
    stage_train,
    stage_unlearn,
)


def _add_config_arg(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="path to the experiment config JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedforget",
        description="federated training with explanation-driven class unlearning",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="federated training, writes baseline.ckpt")
    _add_config_arg(p)

    p = sub.add_parser("explain", help="score channels and write influential.json")
    _add_config_arg(p)

    p = sub.add_parser("unlearn", help="unlearn the configured class from baseline.ckpt")
    _add_config_arg(p)
    p.add_argument("--scheme", choices=["de", "ce"], help="override the configured scheme")
    p.add_argument("--select", choices=["important", "random", "nonimportant"],
                   help="override the configured channel selection")

    p = sub.add_parser("eval", help="evaluate checkpoints, write metrics.csv")
    _add_config_arg(p)

    p = sub.add_parser("attack", help="membership inference against both checkpoints")
    _add_config_arg(p)

    p = sub.add_parser("costs", help="print the analytic cost table")
    _add_config_arg(p)
    p.add_argument("--delta", type=float, help="override the configured delta")
    p.add_argument("--n", type=float, help="override the scale parameter")

    p = sub.add_parser("run", help="full pipeline: train, explain, unlearn, eval, attack")
    _add_config_arg(p)

    p = sub.add_parser("init-config", help="write a starter config with all defaults")
    p.add_argument("path", nargs="?", default="fedforget-config.json")

    return parser


def _load(args) -> tuple[ExperimentConfig, bytes, Path]:
    cfg, raw = load_config(args.config)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, raw, out


def _override_unlearn(cfg: ExperimentConfig, scheme: str | None,
                      select: str | None) -> ExperimentConfig:
    if scheme is None and select is None:
        return cfg
    changes = {}
    if scheme is not None:
        changes["scheme"] = scheme
    if select is not None:
        changes["selection"] = select
    return dataclasses.replace(cfg, unlearn=dataclasses.replace(cfg.unlearn, **changes))


def cmd_train(args) -> int:
    cfg, _, out = _load(args)
    state, records = stage_train(cfg, out)
    write_metrics_csv(records, cfg.dataset.class_count, out / "metrics.csv")
    write_timings_csv(records, out / "timings.csv")
    final = records[-1]
    print(f"trained {cfg.train.global_rounds} rounds over {cfg.federation.clients} clients")
    print(f"final accuracy: class {cfg.unlearn.class_index} "
          f"{final.unlearning_class_accuracy:.4f}, remaining {final.remaining_accuracy:.4f}")
    print(f"wrote {out / 'baseline.ckpt'}")
    return 0


def cmd_explain(args) -> int:
    cfg, _, out = _load(args)
    model = load_model(out / "baseline.ckpt")
    train, _ = load_run_dataset(cfg)
    influential = stage_explain(cfg, out, model, train)
    per_layer = {li: len(chs) for li, chs in influential.by_layer().items()}
    print(f"selected {len(influential.channels)} channels at delta={influential.delta:g}: "
          + ", ".join(f"layer {li}: {n}" for li, n in sorted(per_layer.items())))
    print(f"wrote {out / 'influential.json'}")
    return 0


def cmd_unlearn(args) -> int:
    cfg, _, out = _load(args)
    cfg = _override_unlearn(cfg, args.scheme, args.select)
    model = load_model(out / "baseline.ckpt")
    train, test = load_run_dataset(cfg)
    clients = build_clients(cfg, train)
    influential = InfluentialSet.load(out / "influential.json")
    outcome, records = stage_unlearn(cfg, out, model, clients, train, test, influential)
    write_metrics_csv(records, cfg.dataset.class_count, out / "unlearn_metrics.csv")
    final = records[-1]
    print(f"unlearned class {cfg.unlearn.class_index} via {cfg.unlearn.scheme} "
          f"({cfg.unlearn.selection}) in {cfg.unlearn.epochs} epochs")
    print(f"unlearning-class accuracy {final.unlearning_class_accuracy:.4f}, "
          f"remaining {final.remaining_accuracy:.4f}, "
          f"traffic {outcome.total_traffic_bytes} bytes")
    print(f"wrote {out / 'unlearned.ckpt'}")
    return 0


def cmd_eval(args) -> int:
    from .metrics import class_accuracy

    cfg, _, out = _load(args)
    _, test = load_run_dataset(cfg)
    rows = []
    for name in ("baseline", "unlearned"):
        path = out / f"{name}.ckpt"
        if not path.exists():
            continue
        report = class_accuracy(load_model(path), test)
        rows.append((name, report))
    if not rows:
        print("no checkpoints found; run train first", file=sys.stderr)
        return 2
    y = cfg.unlearn.class_index
    print(f"{'model':<12}{'overall':>10}{'class ' + str(y):>10}{'remaining':>11}")
    for name, report in rows:
        print(f"{name:<12}{report.overall:>10.4f}"
              f"{report.per_class[y]:>10.4f}{report.remaining_accuracy(y):>11.4f}")
    return 0


def cmd_attack(args) -> int:
    cfg, _, out = _load(args)
    baseline = load_model(out / "baseline.ckpt")
    unlearned_path = out / "unlearned.ckpt"
    unlearned = load_model(unlearned_path) if unlearned_path.exists() else None
    train, test = load_run_dataset(cfg)
    results = stage_attack(cfg, out, baseline, unlearned, train, test)
    print(f"loss threshold tau = {results['tau']:.6g}")
    print(f"recall vs baseline:  {results['recall_baseline']:.4f}")
    if "recall_unlearned" in results:
        print(f"recall vs unlearned: {results['recall_unlearned']:.4f}")
    print(f"wrote {out / 'attack.csv'}")
    return 0


def cmd_costs(args) -> int:
    cfg, _, out = _load(args)
    if args.delta is not None or args.n is not None:
        params = CostModelParams(
            n=args.n if args.n is not None else cfg.federation.clients,
            delta=args.delta if args.delta is not None else cfg.unlearn.delta,
            class_count=cfg.dataset.class_count,
        )
        print(format_cost_table(params))
    else:
        print(stage_costs(cfg, out))
    return 0


def cmd_run(args) -> int:
    cfg, raw, out = _load(args)
    manifest = run_pipeline(cfg, raw, out)
    print(f"pipeline complete: {', '.join(manifest.completed_stages)}")
    print(f"artifacts in {out}:")
    for name, entry in sorted(manifest.artifacts.items()):
        print(f"  {name}: {entry.split(':')[0]}")
    return 0


def cmd_init_config(args) -> int:
    path = Path(args.path)
    if path.exists():
        print(f"refusing to overwrite existing {path}", file=sys.stderr)
        return 1
    path.write_text(default_config_json() + "\n")
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "explain": cmd_explain,
    "unlearn": cmd_unlearn,
    "eval": cmd_eval,
    "attack": cmd_attack,
    "costs": cmd_costs,
    "run": cmd_run,
    "init-config": cmd_init_config,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except FedforgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
