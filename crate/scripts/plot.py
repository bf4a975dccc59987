#!/usr/bin/env python3
"""Plot `bench.csv` (formation time) or `ticks.csv` (cluster count and DB per tick).

    python3 scripts/plot.py wpac-out/bench.csv bench.png
    python3 scripts/plot.py wpac-out/ticks.csv ticks.png
"""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def bench(rows, ax):
    for algo in ("wpac", "wca"):
        pts = sorted((int(r["nodes"]), int(r["median_ns"]) / 1e6) for r in rows if r["algorithm"] == algo)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=algo)
    ax.set_xlabel("nodes")
    ax.set_ylabel("median formation time (ms)")
    ax.legend()


def ticks(rows, ax):
    t = [int(r["tick"]) for r in rows]
    ax.step(t, [int(r["clusters"]) for r in rows], where="post", label="clusters")
    ax.set_xlabel("tick")
    ax.set_ylabel("clusters")
    db = [(int(r["tick"]), float(r["db_index"])) for r in rows if r["db_index"] not in ("", "undefined")]
    if db:
        ax2 = ax.twinx()
        ax2.plot([d[0] for d in db], [d[1] for d in db], "o", color="tab:red", label="db_index")
        ax2.axhline(0.5, color="tab:red", linestyle=":")
        ax2.set_ylabel("db_index")


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    with open(sys.argv[1], newline="") as f:
        rows = list(csv.DictReader(f))
    fig, ax = plt.subplots(figsize=(6, 4))
    (bench if rows and "median_ns" in rows[0] else ticks)(rows, ax)
    fig.tight_layout()
    fig.savefig(sys.argv[2], dpi=120)


if __name__ == "__main__":
    main()
