"""Command-line entry point.

    gradorder gen-data --seed 0 --out synthetic.csv
    gradorder run --config configs/synthetic_per_epoch.json
    gradorder bound-check --config configs/bound_thm1.json
    gradorder compare runs/synthetic_per_epoch runs/synthetic_constant
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import gen_synthetic, save_csv
from .harness import ConfigError, compare, load_config, run_bound_check, run_experiment

EXIT_OK = 0
EXIT_ALL_DIVERGED = 1
EXIT_BAD_INPUT = 2
EXIT_BOUND_FAILED = 3


def _out_dir(args, config) -> Path:
    return Path(args.out) if args.out else Path(config.output_dir) / config.name


def cmd_gen_data(args) -> int:
    data = gen_synthetic(args.seed, args.n, args.dim, args.low, args.high)
    save_csv(data, args.out)
    print(f"wrote {data.n} x {data.dim} synthetic points to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    summary = run_experiment(config, out)
    for strategy, entry in summary["means"].items():
        final = entry.get("final_loss")
        shown = "n/a" if final is None else f"{final:.10g}"
        extra = f"  accuracy {entry['train_accuracy']:.4f}" if "train_accuracy" in entry else ""
        print(f"{strategy:>12}  runs {entry['runs']:>3}  diverged {entry['diverged']:>3}  mean final loss {shown}{extra}")
    print(f"traces and summary.json in {out}")
    return EXIT_ALL_DIVERGED if summary["all_diverged"] else EXIT_OK


def cmd_bound_check(args) -> int:
    config = load_config(args.config)
    out = _out_dir(args, config)
    report = run_bound_check(config, out)
    failed = False
    for name, rate in sorted(report["pass_rate"].items()):
        print(f"{name}: {rate:.4f} of {report['checked'][name]} epochs within the bound")
        failed |= rate < 1.0
    skipped = {
        name
        for run in report["runs"]
        for ep in run["epochs"]
        for name, value in ep["bounds"].items()
        if value == "not applicable"
    }
    for name in sorted(skipped):
        print(f"{name}: not applicable")
    print(f"report in {out / 'bound_report.json'}")
    return EXIT_BOUND_FAILED if failed else EXIT_OK


def cmd_compare(args) -> int:
    rows = compare(args.dirs)
    if args.json:
        print(json.dumps(rows, indent=2))
        return EXIT_OK
    print(f"{'experiment':<28} {'strategy':>12} {'runs':>5} {'best':>5}  mean final loss")
    for r in rows:
        print(f"{r['experiment']:<28} {r['strategy']:>12} {r['runs']:>5} {r['best_count']:>5}  {r['mean_final_loss']:.10g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradorder", description="Shuffling SGD with gradient-norm orderings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a seeded synthetic dataset as CSV")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--low", type=float, default=-10.0)
    p.add_argument("--high", type=float, default=10.0)
    p.add_argument("--out", required=True, help="destination CSV path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("run", help="train every strategy and seed of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: <output_dir>/<name>)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bound-check", help="compare measured distances with the per-epoch bounds")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: <output_dir>/<name>)")
    p.set_defaults(func=cmd_bound_check)

    p = sub.add_parser("compare", help="summarise existing trace directories")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--json", action="store_true", help="print rows as JSON")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
