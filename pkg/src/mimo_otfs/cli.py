"""Command line entry point: ``mimo-otfs run | oracle-check | list-presets``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .harness import PRESET_NOTES, ConfigError, ExperimentConfig, config_help, load_config, presets, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
ORACLE_TOL = 1e-10


def _out_path(base: str, suffix: str) -> str:
    if not suffix:
        return base
    p = Path(base)
    return str(p.with_name(f"{p.stem}_{suffix}{p.suffix or '.csv'}"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimo-otfs",
        description="MIMO-OTFS BER simulator with iterative MRC, MRCw and LMMSE detectors.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=config_help(),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a BER sweep and write CSV",
                         formatter_class=argparse.RawDescriptionHelpFormatter, epilog=config_help())
    run.add_argument("--preset", help="start from a named preset (see list-presets)")
    run.add_argument("--config", help="INI file overriding preset or default values")
    run.add_argument("--seed", type=int, help="master seed (overrides config)")
    run.add_argument("--out", help="CSV path; presets with several variants append _<variant>")
    run.add_argument("--threads", type=int, help="worker threads per point")
    run.add_argument("--frames", type=int, help="frames per point (overrides config)")
    run.add_argument("--quiet", action="store_true", help="no progress on stderr")

    oc = sub.add_parser("oracle-check", help="cross-check fast channel paths against brute-force matrices")
    oc.add_argument("--instances", type=int, default=50)
    oc.add_argument("--seed", type=int, default=0)

    sub.add_parser("list-presets", help="print the available presets")
    return parser


def _configs(args) -> list[tuple[str, ExperimentConfig]]:
    if args.preset:
        table = presets()
        if args.preset not in table:
            raise ConfigError(f"unknown preset {args.preset!r}; try list-presets")
        variants = table[args.preset]
    else:
        variants = [("", ExperimentConfig())]
    if args.config:
        variants = [(s, load_config(args.config, c)) for s, c in variants]
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.threads is not None:
        over["threads"] = args.threads
    if args.frames is not None:
        over["frames_per_point"] = args.frames
    out = []
    for suffix, cfg in variants:
        target = args.out or cfg.out or (f"results/{args.preset}.csv" if args.preset else None)
        if target is None:
            raise ConfigError("no output path: pass --out or set [run] out")
        try:
            out.append((suffix, replace(cfg, out=_out_path(target, suffix), **over)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return out


def cmd_run(args) -> int:
    for suffix, cfg in _configs(args):
        if not args.quiet:
            print(f"writing {cfg.out}", file=sys.stderr)
        run_experiment(cfg, progress=not args.quiet)
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import cross_validate

    worst = cross_validate(args.instances, args.seed)
    ok = True
    for name, err in worst.items():
        status = "ok" if err < ORACLE_TOL else "FAIL"
        ok &= err < ORACLE_TOL
        print(f"{name:<14} max_abs_err={err:.3e} {status}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_list(args) -> int:
    for name, variants in presets().items():
        tags = ",".join(s for s, _ in variants if s)
        print(f"{name:<12} {PRESET_NOTES.get(name, '')}" + (f" [variants: {tags}]" if tags else ""))
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "oracle-check": cmd_oracle, "list-presets": cmd_list}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
