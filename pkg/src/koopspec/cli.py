"""Command-line entry point: ``koopspec {bench,train,check,synth}``."""

from __future__ import annotations

import argparse
import os
import sys

from . import checks
from .data import synthesize_series, write_csv
from .harness import KEYS, ConfigError, parse_config, parse_config_text, run_benchmark

WORKERS_ENV = "KOOPSPEC_WORKERS"


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file; flags override it")
    for key in KEYS:
        p.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="VALUE")


def _load(args):
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    if "workers" not in overrides and os.environ.get(WORKERS_ENV):
        overrides["workers"] = os.environ[WORKERS_ENV]
    if args.config:
        return parse_config(args.config, overrides)
    return parse_config_text("", overrides)


def _print_summary(result) -> None:
    sys.stdout.write(result.summary)
    for r in result.results:
        if r.status != "ok":
            detail = r.history.failure if r.history is not None else ""
            print(f"{r.variant} P={r.P} H={r.H}: {r.status} {detail} {'; '.join(r.violations)}".rstrip(),
                  file=sys.stderr)


def cmd_bench(args) -> int:
    cfg = _load(args)
    result = run_benchmark(cfg)
    _print_summary(result)
    return 0 if result.ok else 1


def cmd_train(args) -> int:
    cfg = _load(args)
    if len(cfg.variant) != 1 or len(cfg.P) != 1 or len(cfg.H) != 1:
        raise ConfigError("train runs one model: give exactly one variant, P and H")
    result = run_benchmark(cfg)
    _print_summary(result)
    return 0 if result.ok else 1


def cmd_check(args) -> int:
    results = checks.run_all()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_synth(args) -> int:
    series = synthesize_series(args.kind, args.T, args.d, args.seed)
    write_csv(series, args.out)
    print(f"wrote {series.T} x {series.d} series to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="koopspec", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bench", help="train the full (variant, P, H) grid")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("train", help="train a single (variant, P, H) run")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("check", help="run the stability property suite")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("synth", help="write a synthetic series as CSV")
    p.add_argument("--kind", default="damped_rotation", choices=["damped_rotation", "sinusoid_ar", "random_walk"])
    p.add_argument("--T", type=int, default=4096)
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
