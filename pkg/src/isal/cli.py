"""Command-line entry point: ``isal run``, ``isal compare``, ``isal verify``."""
from __future__ import annotations

import argparse
import sys

from .al_loop import RunAborted
from .experiment import ConfigError, compare, load_config, run_sweep


def _run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        run_sweep(cfg, args.output_dir)
    except RunAborted as exc:
        print(f"run aborted: {exc} (partial outputs written)", file=sys.stderr)
        return 1
    return 0


def _compare(args) -> int:
    try:
        configs = [load_config(p) for p in args.configs]
        rows = compare(configs, args.output_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RunAborted as exc:
        print(f"run aborted: {exc} (partial outputs written)", file=sys.stderr)
        return 1
    for r in rows:
        print(f"step {r['step']:>3}  {r['strategy']:<12} acc {r['accuracy_mean']:.4f} "
              f"+/- {r['accuracy_std']:.4f}")
    return 0


def _verify(args) -> int:
    from .checks import run_checks

    results = run_checks(quick=args.quick, only=args.only)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one config over its seed list")
    p.add_argument("config")
    p.add_argument("--output-dir", default=None, help="override output_dir from the config")
    p.set_defaults(func=_run)

    p = sub.add_parser("compare", help="run several strategies on shared seeds and splits")
    p.add_argument("configs", nargs="+")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_compare)

    p = sub.add_parser("verify", help="run the oracle checks and print pass/fail per check")
    p.add_argument("--quick", action="store_true", help="fewer seeds, skips the AL sweeps")
    p.add_argument("--only", action="append", default=None, metavar="NAME",
                   help="run only the named check (repeatable)")
    p.set_defaults(func=_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
