"""Command-line entry points: ``meshgcn {generate,train,eval,benchmark,analyze}``.

Outputs go to ``--out`` (default ``runs``). Text outputs are tab-separated
and begin with ``# config:`` and ``# seed:`` comment lines.

Exit codes: 0 success, 1 error, 2 usage error, 3 training diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import storage
from .baselines import benchmark_compare, feature_count, ordered_features, pca, spatial_consistency
from .config import ConfigError, RunConfig, load_config
from .flowgen import AirfoilSpec, airfoil_thickness, iter_samples, joukowski_boundary
from .model import TrainingDiverged, embed_many, metrics_from, predict, train

log = logging.getLogger("meshgcn")

EXIT_ERROR = 1
EXIT_DIVERGED = 3


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_tsv(path, columns, rows, config: dict, seed, comments=()):
    lines = [
        "# config: " + json.dumps(config, sort_keys=True, separators=(",", ":")),
        f"# seed: {seed}",
        *(f"# {c}" for c in comments),
        "\t".join(columns),
    ]
    lines += ["\t".join(_fmt(v) for v in row) for row in rows]
    with storage.atomic_write(path) as fh:
        fh.write(("\n".join(lines) + "\n").encode())


def read_tsv(path) -> tuple[list[str], list[list[str]]]:
    rows = [ln.split("\t") for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    return rows[0], rows[1:]


def _existing(path: Path, what: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------- commands


def cmd_generate(run: RunConfig, out: Path) -> Path:
    g = run.generate
    cfg = run.to_dict()["generate"]
    header = storage.dataset_header(g.samples, 2, cfg, g.seed)
    samples = iter_samples(g.samples, g.ranges(), g.mesh(), g.seed, g.workers)
    records = (storage.Record(i, s.graph, s.target, s.meta) for i, s in enumerate(samples))
    path = out / "dataset.bin"
    storage.write_dataset(path, records, header)
    log.info("wrote %d samples to %s", g.samples, path)
    return path


def cmd_train(run: RunConfig, out: Path):
    t = run.train
    tc = t.train_config()
    cfg = run.to_dict()["train"]
    ds = storage.read_dataset(_existing(run.resolve(t.dataset, out / "dataset.bin"), "dataset"))
    ckpt = out / "checkpoint.bin"
    try:
        params, hist = train(ds, tc)
    except TrainingDiverged as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "checkpoint.bin.FAILED").write_text(f"{exc}\n")
        raise
    storage.save_checkpoint(ckpt, params, {"config": cfg, "seed": t.seed})
    rows = [(e, a, b) for e, (a, b) in enumerate(zip(hist.train_nmse, hist.val_nmse))]
    write_tsv(out / "history.tsv", ("epoch", "train_nmse", "val_nmse"), rows, cfg, t.seed)
    return params, hist


def cmd_eval(run: RunConfig, out: Path):
    e = run.eval
    ckpt = _existing(run.resolve(e.checkpoint, out / "checkpoint.bin"), "checkpoint")
    ds = storage.read_dataset(_existing(run.resolve(e.dataset, out / "dataset.bin"), "dataset"))
    params, header = storage.load_checkpoint(ckpt)
    if ds.feature_width != params.config.in_features:
        raise ValueError(
            f"dataset feature width {ds.feature_width} does not match checkpoint ({params.config.in_features})"
        )
    pred = predict(params, ds.graphs)
    m = metrics_from(pred, ds.targets)
    cfg = {"eval": run.to_dict()["eval"], "checkpoint": header.get("config")}
    seed = header.get("seed")
    write_tsv(out / "metrics.tsv", ("metric", "value"), [("mse", m.mse), ("nmse", m.nmse), ("r2", m.r2),
                                                         ("samples", len(ds))], cfg, seed)
    rows = [(r.id, r.target, p) for r, p in zip(ds, pred)]
    write_tsv(out / "predictions.tsv", ("id", "truth", "prediction"), rows, cfg, seed)
    return m


def cmd_benchmark(run: RunConfig, out: Path):
    b = run.benchmark
    tc = run.train.train_config()
    ds = storage.read_dataset(_existing(run.resolve(b.dataset, out / "dataset.bin"), "dataset"))
    gcnn = None
    if b.checkpoint:
        gcnn, _ = storage.load_checkpoint(_existing(run.resolve(b.checkpoint, Path()), "checkpoint"))
    bc = b.benchmark_config(tc, run.train.seed)
    rows = benchmark_compare(ds, bc, gcnn)
    m = feature_count(ds, bc.m)
    consistency = spatial_consistency(ordered_features(ds, m))
    cfg = {"benchmark": run.to_dict()["benchmark"], "train": run.to_dict()["train"]}
    write_tsv(out / "benchmark.tsv", ("model", "r2", "nmse", "mse"),
              [(r.model, r.r2, r.nmse, r.mse) for r in rows], cfg, run.train.seed,
              comments=[f"ordered_features: m={m} spatial_consistency={_fmt(consistency)}"])
    series = [(r.model, t, p) for r in rows for t, p in zip(r.metrics.targets, r.metrics.predictions)]
    write_tsv(out / "benchmark_predictions.tsv", ("model", "truth", "prediction"), series, cfg, run.train.seed)
    return rows


def _spec_of(rec) -> AirfoilSpec:
    md = rec.metadata
    return AirfoilSpec(md["mu_x"], md["mu_y"], md["alpha_deg"], md["u_inf"], md["rho"])


def cmd_analyze(run: RunConfig, out: Path):
    a = run.analyze
    ds = storage.read_dataset(_existing(run.resolve(a.dataset, out / "dataset.bin"), "dataset"))
    cfg = {"analyze": run.to_dict()["analyze"]}
    seed = ds.header.get("seed")
    results = {}

    boundaries = [joukowski_boundary(_spec_of(r), a.boundary_points) for r in ds]
    geo = pca(np.array([bd.T.ravel() for bd in boundaries]), a.k)
    thick = [airfoil_thickness(bd) for bd in boundaries]
    pcs = [f"pc{i + 1}" for i in range(a.k)]
    write_tsv(out / "pca_geometry.tsv", ("id", "thickness", "target", *pcs),
              [(r.id, th, r.target, *p) for r, th, p in zip(ds, thick, geo.projections)], cfg, seed,
              comments=["explained_ratio: " + " ".join(_fmt(v) for v in geo.explained_ratio)])
    results["geometry"] = geo

    if a.checkpoint:
        params, header = storage.load_checkpoint(_existing(run.resolve(a.checkpoint, Path()), "checkpoint"))
        emb = pca(embed_many(params, ds.graphs), a.k)
        write_tsv(out / "pca_embedding.tsv", ("id", "target", *pcs),
                  [(r.id, r.target, *p) for r, p in zip(ds, emb.projections)], cfg, header.get("seed"),
                  comments=["explained_ratio: " + " ".join(_fmt(v) for v in emb.explained_ratio)])
        results["embedding"] = emb
    return results


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "benchmark": cmd_benchmark,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meshgcn", description="Mesh-based GCNN surrogate for airfoil lift")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="INI run configuration")
    p.add_argument("--seed", type=int, help="override the seed of every section")
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory (default: runs)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            run = run.with_seed(args.seed)
        args.out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](run, args.out)
    except TrainingDiverged as exc:
        print(f"meshgcn {args.command}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, storage.FormatError, FileNotFoundError, ValueError, RuntimeError, OSError) as exc:
        print(f"meshgcn {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
