"""End-to-end acceptance criteria 1-10.

Each test records one PASS/FAIL line (collected and printed in the pytest
terminal summary). Criteria 5-8 share one generated 1000-sample dataset and
one trained model. Set ``MESHGCN_ACCEPTANCE_OUT`` to keep the emitted
curves and tables; otherwise they go to a pytest temporary directory.
"""

import dataclasses
import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import random_graph, record_acceptance, sparse_random_graph
from meshgcn import autodiff as ad
from meshgcn import storage
from meshgcn.baselines import (
    BenchmarkConfig,
    benchmark_compare,
    feature_count,
    ordered_features,
    pca,
    spatial_consistency,
)
from meshgcn.cli import main, write_tsv
from meshgcn.flowgen import (
    MeshConfig,
    SpecRanges,
    bernoulli_panels,
    generate_dataset,
    lift_oracle,
    sample_mesh,
    surface_force_integral,
    wind_axes,
)
from meshgcn.gnn import TopKParams, sage_ring, topk_count, topk_pool
from meshgcn.graph import Permutation
from meshgcn.model import ModelConfig, ModelParams, TrainConfig, evaluate, forward, train
from test_baselines import svd_oracle
from test_gnn import naive_sage, naive_topk
from test_graph import bfs_depths

pytestmark = pytest.mark.acceptance

# budget found to reach the regression target inside the 30 minute limit
ACCEPT_TRAIN = TrainConfig(epochs=40, lr=1e-3, lr_decay=0.94, batch_size=32, seed=0)
DATASET_SEED = 2024
HELDOUT_SEED = 77


def check(criterion, ok, detail):
    record_acceptance(criterion, bool(ok), detail)
    assert ok, detail


@pytest.fixture(scope="session")
def out_dir(tmp_path_factory):
    env = os.environ.get("MESHGCN_ACCEPTANCE_OUT")
    if env:
        p = Path(env)
        p.mkdir(parents=True, exist_ok=True)
        return p
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def benchmark_run():
    t0 = time.perf_counter()
    ds = generate_dataset(1000, seed=DATASET_SEED)
    t_gen = time.perf_counter() - t0
    t0 = time.perf_counter()
    params, hist = train(ds, ACCEPT_TRAIN)
    t_train = time.perf_counter() - t0
    return {"dataset": ds, "params": params, "history": hist, "t_gen": t_gen, "t_train": t_train}


# ---------------------------------------------------------------- 1


def test_c1_permutation_invariance():
    t0 = time.perf_counter()
    ds = generate_dataset(50, seed=11)
    params = ModelParams.init(ModelConfig(), 0)
    rng = np.random.default_rng(1)
    worst = 0.0
    for rec in ds:
        g = rec.graph
        base = forward(g, params).item()
        for _ in range(10):
            h = g.permute(Permutation.random(g.num_nodes, rng))
            worst = max(worst, abs(forward(h, params).item() - base) / (abs(base) + 1e-12))
    elapsed = time.perf_counter() - t0
    check(1, worst < 1e-9 and elapsed < 60, f"max relative deviation {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------- 2


def test_c2_gradient_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    g = random_graph(rng, 30)
    params = ModelParams.init(ModelConfig(), 3)
    target = np.array(0.4)

    def loss():
        return ad.mse(forward(g, params), target)

    # up to 16 random coordinates from every parameter tensor
    worst, coords = 0.0, 0
    for name, t in params.named_parameters():
        k = min(16, t.data.size)
        worst = max(worst, ad.finite_diff_check(loss, [t], h=1e-6, max_coords=k, rng=rng))
        coords += k
    elapsed = time.perf_counter() - t0
    check(2, worst < 1e-4 and coords >= 200 and elapsed < 300,
          f"max relative error {worst:.2e} over {coords} coordinates, {elapsed:.1f}s")


# ---------------------------------------------------------------- 3


def test_c3_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    fails = {}
    for _ in range(100):
        n = int(rng.integers(1, 51))
        f = int(rng.integers(1, 6))
        g = sparse_random_graph(rng, n, float(rng.uniform(0.02, 0.3)), features=f)

        w, b = rng.standard_normal((2 * f, 4)), rng.standard_normal(4)
        got = sage_ring(g, g.features, ad.Tensor(w), ad.Tensor(b)).data
        fails["sage_ring"] = fails.get("sage_ring", 0) + (not np.allclose(got, naive_sage(g.edges, g.features, w, b),
                                                                          rtol=1e-12, atol=1e-12))

        p = rng.standard_normal(f)
        ratio = float(rng.uniform(0.05, 1.0))
        _, _, kept = topk_pool(g, g.features, TopKParams(ad.Tensor(p), ratio))
        y = g.features @ (p / np.linalg.norm(p))
        fails["topk_pool"] = fails.get("topk_pool", 0) + (kept.tolist() != naive_topk(y.tolist(), topk_count(n, ratio)))

        v, k = int(rng.integers(n)), int(rng.integers(0, 5))
        depth = bfs_depths(g.edges.tolist(), n, v)
        fails["k_hop"] = fails.get("k_hop", 0) + (g.k_hop_neighbors(v, k) != {u for u, d in depth.items() if d <= k})

        keep = rng.permutation(n)[: int(rng.integers(1, n + 1))]
        sub, mapping = g.induced_subgraph(keep)
        ks = set(keep.tolist())
        expect = sorted((mapping[a], mapping[c]) for a, c in g.edges.tolist() if a in ks and c in ks)
        fails["induced_subgraph"] = fails.get("induced_subgraph", 0) + ([tuple(e) for e in sub.edges.tolist()] != expect)

        d = int(rng.integers(1, 21))
        X = rng.standard_normal((int(rng.integers(d + 1, 60)), d))
        res = pca(X, d)
        _, ratios = svd_oracle(X, d)
        ok = np.allclose(res.explained_ratio, ratios, rtol=1e-8, atol=1e-12) and np.allclose(
            res.components @ res.components.T, np.eye(d), atol=1e-8)
        fails["pca"] = fails.get("pca", 0) + (not ok)
    elapsed = time.perf_counter() - t0
    bad = {k: v for k, v in fails.items() if v}
    check(3, not bad and elapsed < 120, f"mismatches {bad or 'none'} over 100 instances each, {elapsed:.1f}s")


# ---------------------------------------------------------------- 4


def test_c4_physics_cross_check():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    ranges = SpecRanges()
    worst_lift, worst_drag = 0.0, 0.0
    for _ in range(20):
        spec = ranges.draw(rng)
        panels = bernoulli_panels(spec, 2000)
        drag_dir, lift_dir = wind_axes(spec)
        lift = surface_force_integral(panels, lift_dir)
        drag = surface_force_integral(panels, drag_dir)
        ref = lift_oracle(spec)
        worst_lift = max(worst_lift, abs(lift - ref) / abs(ref))
        worst_drag = max(worst_drag, abs(drag) / abs(lift))
    elapsed = time.perf_counter() - t0
    check(4, worst_lift < 0.01 and worst_drag < 0.005 and elapsed < 60,
          f"max lift error {worst_lift:.2e}, max |drag|/|lift| {worst_drag:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------- 5-8


def test_c5_regression(benchmark_run, out_dir):
    r = benchmark_run
    hist = r["history"]
    ds = r["dataset"]
    val = evaluate(r["params"], ds.subset(hist.val_idx))
    total = r["t_gen"] + r["t_train"]
    rows = [(e, a, b) for e, (a, b) in enumerate(zip(hist.train_nmse, hist.val_nmse))]
    write_tsv(out_dir / "history_skip_on.tsv", ("epoch", "train_nmse", "val_nmse"), rows,
              dataclasses.asdict(ACCEPT_TRAIN), ACCEPT_TRAIN.seed)
    storage.save_checkpoint(out_dir / "checkpoint.bin", r["params"], {"seed": ACCEPT_TRAIN.seed})
    nodes = [rec.graph.num_nodes for rec in ds]
    check(5, val.r2 >= 0.95 and val.nmse <= 0.05 and total <= 1800,
          f"val R2 {val.r2:.4f}, NMSE {val.nmse:.4f}; nodes {min(nodes)}-{max(nodes)}; "
          f"generate {r['t_gen']:.0f}s + train {r['t_train']:.0f}s")


def test_c6_variable_resolution(benchmark_run):
    held = generate_dataset(100, mesh=MeshConfig(band=(500, 700)), seed=HELDOUT_SEED)
    m = evaluate(benchmark_run["params"], held)
    nodes = [rec.graph.num_nodes for rec in held]
    check(6, m.r2 >= 0.85, f"R2 {m.r2:.4f} on 100 samples with {min(nodes)}-{max(nodes)} nodes")


def test_c7_baseline_ordering(benchmark_run, out_dir):
    ds = benchmark_run["dataset"]
    cfg = BenchmarkConfig(train=ACCEPT_TRAIN)
    rows = benchmark_compare(ds, cfg, gcnn_params=benchmark_run["params"])
    write_tsv(out_dir / "benchmark.tsv", ("model", "r2", "nmse", "mse"),
              [(r.model, r.r2, r.nmse, r.mse) for r in rows], {"benchmark": "default"}, ACCEPT_TRAIN.seed)
    r2 = {r.model: r.r2 for r in rows}
    # reported alongside: how well the ordered columns line up across meshes
    consistency = spatial_consistency(ordered_features(ds, feature_count(ds)))
    check(7, r2["gcnn"] >= r2["gb"] and r2["gcnn"] >= r2["mlp"],
          "R2 " + ", ".join(f"{k} {v:.4f}" for k, v in r2.items()) + f"; spatial consistency {consistency:.3f}")


def test_c8_skip_ablation(benchmark_run, out_dir):
    on = benchmark_run["history"]
    off_cfg = dataclasses.replace(ACCEPT_TRAIN, model=dataclasses.replace(ACCEPT_TRAIN.model, skip=False))
    _, off = train(benchmark_run["dataset"], off_cfg)
    rows = [(e, a, b) for e, (a, b) in enumerate(zip(off.train_nmse, off.val_nmse))]
    write_tsv(out_dir / "history_skip_off.tsv", ("epoch", "train_nmse", "val_nmse"), rows,
              dataclasses.asdict(off_cfg), off_cfg.seed)
    check(8, on.val_nmse[-1] <= off.val_nmse[-1],
          f"final val NMSE skip-on {on.val_nmse[-1]:.4f}, skip-off {off.val_nmse[-1]:.4f}")


# ---------------------------------------------------------------- 9


def test_c9_determinism(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[generate]\nsamples = 20\nseed = 9\n\n[train]\nepochs = 2\nseed = 9\n")
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["generate", "--config", str(cfg), "--out", str(out)]) == 0
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        outputs.append({n: (out / n).read_bytes() for n in ("dataset.bin", "checkpoint.bin", "history.tsv")})
    same = [n for n in outputs[0] if outputs[0][n] == outputs[1][n]]
    check(9, len(same) == 3, f"byte-identical: {', '.join(sorted(same))}")


# ---------------------------------------------------------------- 10


def test_c10_mesh_statistics():
    rng = np.random.default_rng(10)
    ranges = SpecRanges()
    stats = []
    for i in range(200):
        spec = ranges.draw(rng)
        pts, edges = sample_mesh(spec, MeshConfig(), seed=rng)
        stats.append((pts.shape[0], edges.shape[0]))
    n = np.array([s[0] for s in stats])
    e = np.array([s[1] for s in stats])
    deg = 2 * e / n
    deg_ok = np.all((deg >= 4) & (deg <= 7))
    edge_ok = (e >= 3000) & (e <= 4000)
    check(10, deg_ok and edge_ok.all(),
          f"mean degree {deg.min():.2f}-{deg.max():.2f}; edges {e.min()}-{e.max()} "
          f"(mean {e.mean():.0f}), {edge_ok.mean():.0%} of 200 meshes inside 3000-4000; "
          f"planar bound 3n-6 caps n={n.min()} at {3 * n.min() - 6}")
