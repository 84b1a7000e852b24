"""Plot train/validation NMSE curves from one or more history.tsv files (needs matplotlib).

    python3 scripts/plot_history.py runs/acceptance/history_skip_on.tsv runs/acceptance/history_skip_off.tsv
"""

import argparse
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from meshgcn.cli import read_tsv  # noqa: E402


def main():
    p = argparse.ArgumentParser()
    p.add_argument("histories", nargs="+", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("history.png"))
    args = p.parse_args()
    fig, ax = plt.subplots(figsize=(6, 4))
    for path in args.histories:
        cols, rows = read_tsv(path)
        epoch = [int(r[cols.index("epoch")]) for r in rows]
        for col, style in (("train_nmse", "--"), ("val_nmse", "-")):
            ax.plot(epoch, [float(r[cols.index(col)]) for r in rows], style, label=f"{path.stem} {col}")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("NMSE")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
