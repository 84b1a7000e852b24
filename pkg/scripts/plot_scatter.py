"""Scatter predicted against true lift from predictions.tsv or benchmark_predictions.tsv (needs matplotlib).

    python3 scripts/plot_scatter.py runs/lift_benchmark/predictions.tsv
"""

import argparse
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from meshgcn.cli import read_tsv  # noqa: E402


def main():
    p = argparse.ArgumentParser()
    p.add_argument("table", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("scatter.png"))
    args = p.parse_args()
    cols, rows = read_tsv(args.table)
    groups = defaultdict(lambda: ([], []))
    for r in rows:
        key = r[cols.index("model")] if "model" in cols else "gcnn"
        groups[key][0].append(float(r[cols.index("truth")]))
        groups[key][1].append(float(r[cols.index("prediction")]))
    fig, ax = plt.subplots(figsize=(5, 5))
    lo = min(min(t) for t, _ in groups.values())
    hi = max(max(t) for t, _ in groups.values())
    ax.plot([lo, hi], [lo, hi], "k-", lw=0.8)
    for name, (t, pr) in groups.items():
        ax.scatter(t, pr, s=8, alpha=0.6, label=name)
    ax.set_xlabel("true lift (N/m)")
    ax.set_ylabel("predicted lift (N/m)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
