"""Run generate, train, eval, benchmark and analyze in sequence.

    python3 scripts/run_benchmark.py --config configs/lift_benchmark.ini --out runs/lift_benchmark
"""

import argparse
import sys
from pathlib import Path

from meshgcn.cli import main

STEPS = ("generate", "train", "eval", "benchmark", "analyze")


def run(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--skip", nargs="*", default=(), choices=STEPS, help="steps to leave out")
    args = p.parse_args(argv)
    for step in STEPS:
        if step in args.skip:
            continue
        print(f"== {step}", flush=True)
        code = main([step, "--config", str(args.config), "--out", str(args.out), "-v"])
        if code:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(run())
