"""Print BER-crossing SNRs and gaps from harness CSVs.

    python scripts/summarize.py results/fig3-desk_perfect.csv --target 1e-3
"""

import argparse
from collections import defaultdict

from mimo_otfs.harness import crossing_snr, read_csv


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("csv", nargs="+")
    ap.add_argument("--target", type=float, default=1e-3)
    args = ap.parse_args(argv)

    curves = defaultdict(list)
    for path in args.csv:
        for row in read_csv(path):
            key = (row["mode"], row["rho_rx"], row["beta_db"])
            curves[key].append((float(row["snr_db"]), float(row["ber"])))
    print(f"{'mode':<6} {'rho':>5} {'beta':>8} {'SNR@' + format(args.target, 'g'):>10}")
    for (mode, rho, beta), pts in sorted(curves.items()):
        pts.sort()
        s = crossing_snr([p[0] for p in pts], [p[1] for p in pts], args.target)
        print(f"{mode:<6} {rho:>5} {beta:>8} {s:>10.2f}")


if __name__ == "__main__":
    main()
