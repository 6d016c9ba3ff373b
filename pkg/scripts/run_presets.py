"""Run one or more named presets and write their CSVs under results/.

    python scripts/run_presets.py fig1-desk fig2-desk --threads 4
    python scripts/run_presets.py fig3-desk --frames 500     # quick look
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from mimo_otfs.harness import presets, run_experiment


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("names", nargs="+", help="preset names (see `mimo-otfs list-presets`)")
    ap.add_argument("--outdir", default="results")
    ap.add_argument("--frames", type=int, help="override frames per point")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    table = presets()
    unknown = [n for n in args.names if n not in table]
    if unknown:
        print(f"unknown preset(s): {', '.join(unknown)}", file=sys.stderr)
        return 2
    for name in args.names:
        for suffix, cfg in table[name]:
            out = Path(args.outdir) / (f"{name}_{suffix}.csv" if suffix else f"{name}.csv")
            over = dict(threads=args.threads, seed=args.seed)
            if args.frames:
                over["frames_per_point"] = args.frames
            print(f"== {name} {suffix} -> {out}", file=sys.stderr)
            run_experiment(replace(cfg, **over), out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
