"""BER-vs-SNR plot of one or more harness CSVs (needs matplotlib).

    python scripts/plot_ber.py results/fig1-desk_2x2.csv -o fig1.png
"""

import argparse
from collections import defaultdict

from mimo_otfs.harness import read_csv


def main(argv=None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("csv", nargs="+")
    ap.add_argument("-o", "--out", default="ber.png")
    args = ap.parse_args(argv)

    curves = defaultdict(list)
    for path in args.csv:
        for row in read_csv(path):
            if int(row["bit_errors"]) == 0:
                continue  # nothing to draw on a log axis
            label = f"{row['mode']} rho={row['rho_rx']} beta={row['beta_db']}"
            curves[label].append((float(row["snr_db"]), float(row["ber"]), float(row["ci95"])))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for label, pts in sorted(curves.items()):
        pts.sort()
        s, b, ci = zip(*pts)
        ax.errorbar(s, b, yerr=ci, marker="o", ms=3, capsize=2, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("SNR [dB]")
    ax.set_ylabel("BER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
