"""Train the GCNN with and without L2 row normalisation and tabulate both.

    python3 scripts/compare_normalize.py --config configs/lift_benchmark.ini --out runs/lift_benchmark

Reads ``<out>/dataset.bin`` (or the ``[train] dataset`` path) and writes
``<out>/normalize_comparison.tsv`` with one row per setting.
"""

import argparse
import dataclasses
import sys
import time
from pathlib import Path

from meshgcn import storage
from meshgcn.cli import write_tsv
from meshgcn.config import load_config
from meshgcn.model import train


def run(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--samples", type=int, default=0, help="use only the first N samples (0 = all)")
    p.add_argument("--epochs", type=int, default=0, help="override [train] epochs")
    args = p.parse_args(argv)

    run_cfg = load_config(args.config)
    section = run_cfg.train
    if args.epochs:
        section = dataclasses.replace(section, epochs=args.epochs)
    ds = storage.read_dataset(run_cfg.resolve(section.dataset, args.out / "dataset.bin"))
    if args.samples:
        ds = ds.subset(range(min(args.samples, len(ds))))

    rows = []
    for normalize in (False, True):
        tc = dataclasses.replace(section, normalize=normalize).train_config()
        start = time.perf_counter()
        _, hist = train(ds, tc)
        seconds = time.perf_counter() - start
        val = hist.val_nmse[-1]
        rows.append((normalize, val, 1 - val, seconds))
        print(f"normalize={normalize}: val NMSE {val:.4f} ({seconds:.0f} s)", flush=True)
    cfg = {"train": dataclasses.asdict(section), "samples": len(ds)}
    write_tsv(args.out / "normalize_comparison.tsv", ("normalize", "val_nmse", "val_r2", "seconds"),
              rows, cfg, section.seed)
    return 0


if __name__ == "__main__":
    sys.exit(run())
