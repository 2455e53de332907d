#!/usr/bin/env python3
"""Forget-vs-utility scatter from `fifsl eval --csv` tables.

Each argument is LABEL=PATH. Every table becomes one point: mean forget-set
NLL on the x axis, mean retain-set chrF on the y axis.

    tools/plot_scatter.py --out scatter.png pre=pre.csv fifsl=fifsl.csv ga=ga.csv
"""

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def point(path):
    df = pd.read_csv(path)
    missing = {"split", "nll", "chrf"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    forget = df[df["split"] == "forget"]
    retain = df[df["split"] == "retain"]
    if forget.empty or retain.empty:
        raise ValueError(f"{path}: needs forget and retain rows")
    return forget["nll"].mean(), retain["chrf"].dropna().mean()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("runs", nargs="+", metavar="LABEL=PATH")
    ap.add_argument("--out", default="scatter.png")
    args = ap.parse_args()

    fig, ax = plt.subplots(figsize=(5, 4))
    for run in args.runs:
        label, sep, path = run.partition("=")
        if not sep:
            ap.error(f"expected LABEL=PATH, got '{run}'")
        try:
            x, y = point(path)
        except (OSError, ValueError) as e:
            print(e, file=sys.stderr)
            return 1
        ax.scatter([x], [y], s=60)
        ax.annotate(label, (x, y), textcoords="offset points", xytext=(6, 4))
        print(f"{label}: forget NLL {x:.4f}, retain chrF {y:.2f}")
    ax.set_xlabel("forget-set NLL (nats/token)")
    ax.set_ylabel("retain-set chrF")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)
    return 0


if __name__ == "__main__":
    sys.exit(main())
