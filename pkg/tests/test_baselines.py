import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_graph
from meshgcn.baselines import (
    BenchmarkConfig,
    MLPConfig,
    StumpEnsemble,
    benchmark_compare,
    node_order,
    ordered_features,
    pca,
    spatial_consistency,
    train_mlp_baseline,
    train_stumps,
)
from meshgcn.graph import Permutation, build_graph
from meshgcn.model import ModelConfig, TrainConfig, metrics_from
from meshgcn.storage import Dataset, Record


def positioned_dataset(n=6, nodes=(30, 40), seed=0):
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n):
        g = random_graph(rng, int(rng.integers(*nodes)), positions=True)
        recs.append(Record(i, g, float(g.features[:, 0].mean())))
    return Dataset(recs)


def best_stump_oracle(X, r):
    """Brute force over features and midpoints of sorted unique values."""
    best = (np.inf, None)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for t in (vals[:-1] + vals[1:]) / 2:
            left = X[:, f] <= t
            pred = np.where(left, r[left].mean(), r[~left].mean())
            sse = np.sum((r - pred) ** 2)
            if sse < best[0] - 1e-12:
                best = (sse, (f, t))
    return best


# ---------------------------------------------------------------- ordered features


def test_ordered_features_m1_is_nearest_node():
    ds = positioned_dataset()
    ofm = ordered_features(ds, m=1)
    for row, rec in zip(ofm.X, ds):
        d = np.hypot(rec.graph.positions[:, 0] - 0.5, rec.graph.positions[:, 1])
        k = np.argmin(d)
        assert row.tolist() == [rec.graph.features[k, 0], rec.graph.features[k, 1]]


def test_ordered_features_layout_and_identical_rows():
    ds = positioned_dataset(2)
    ds.records[1] = Record(1, ds[0].graph, 0.0)
    ofm = ordered_features(ds, m=10)
    assert ofm.X.shape == (2, 20)
    assert np.array_equal(ofm.X[0], ofm.X[1])
    idx = node_order(ds[0].graph.positions)[:10]
    assert np.array_equal(ofm.X[0, :10], ds[0].graph.features[idx, 0])
    assert np.array_equal(ofm.X[0, 10:], ds[0].graph.features[idx, 1])


def test_ordered_features_independent_of_node_order():
    ds = positioned_dataset(3)
    rng = np.random.default_rng(1)
    perm = Dataset([Record(r.id, r.graph.permute(Permutation.random(r.graph.num_nodes, rng)), r.target)
                    for r in ds])
    assert np.array_equal(ordered_features(ds, 25).X, ordered_features(perm, 25).X)


def test_node_order_tie_breaks():
    pos = np.array([[1.5, 0.0], [-0.5, 0.0], [0.5, 1.0], [1.5, 0.0]])
    # all at distance 1; angles 0, pi, pi/2, 0 -> ties on (dist, angle) go to index
    assert node_order(pos).tolist() == [0, 3, 2, 1]


def test_ordered_features_errors():
    ds = positioned_dataset(2, nodes=(10, 12))
    with pytest.raises(ValueError, match="fewer than"):
        ordered_features(ds, m=20)
    no_pos = Dataset([Record(0, build_graph(np.zeros((3, 2)), [[0, 1]]), 0.0)])
    with pytest.raises(ValueError, match="positions"):
        ordered_features(no_pos, m=1)


def test_spatial_consistency_identical_meshes():
    ds = positioned_dataset(2)
    ds.records[1] = Record(1, ds[0].graph, 0.0)
    assert spatial_consistency(ordered_features(ds, 20)) == 1.0


# ---------------------------------------------------------------- stumps


def test_constant_target():
    X = np.random.default_rng(0).random((20, 3))
    ens = train_stumps(X, np.full(20, 4.2), 10)
    np.testing.assert_allclose(ens.predict(X), 4.2, atol=1e-14)
    assert np.all(ens.left == 0) and np.all(ens.right == 0)
    assert len(ens) == 10


def test_step_function_single_stump_exact():
    X = np.arange(10.0)[:, None]
    y = np.where(X[:, 0] < 4, -1.0, 3.0)
    ens = train_stumps(X, y, n_estimators=1, shrinkage=1.0)
    np.testing.assert_allclose(ens.predict(X), y, atol=1e-14)
    assert ens.threshold[0] == 3.5


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(5, 40), d=st.integers(1, 5))
def test_first_stump_matches_brute_force(seed, n, d):
    rng = np.random.default_rng(seed)
    X = np.round(rng.random((n, d)), 2)  # rounding creates ties
    y = rng.standard_normal(n)
    if all(np.unique(X[:, f]).size == 1 for f in range(d)):
        return
    ens = train_stumps(X, y, n_estimators=1, shrinkage=1.0)
    r = y - y.mean()
    sse, (f, t) = best_stump_oracle(X, r)
    pred = ens.predict(X) - y.mean()
    assert np.sum((r - pred) ** 2) == pytest.approx(sse, rel=1e-9, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), shrink=st.floats(0.05, 1.0))
def test_training_loss_non_increasing(seed, shrink):
    rng = np.random.default_rng(seed)
    X = rng.random((50, 5))
    y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2 + 0.1 * rng.standard_normal(50)
    ens = train_stumps(X, y, n_estimators=60, shrinkage=shrink)
    curve = np.array(ens.train_mse)
    assert curve.size == 61
    assert np.all(np.diff(curve) <= 1e-12)
    np.testing.assert_allclose(curve[-1], np.mean((ens.predict(X) - y) ** 2), rtol=1e-9)


def test_stump_order_invariance():
    rng = np.random.default_rng(4)
    X = rng.random((30, 4))
    ens = train_stumps(X, rng.standard_normal(30), 25)
    p = rng.permutation(len(ens))
    shuffled = StumpEnsemble(ens.offset, ens.feature[p], ens.threshold[p], ens.left[p], ens.right[p],
                             ens.shrinkage[p])
    np.testing.assert_allclose(shuffled.predict(X), ens.predict(X), rtol=1e-12, atol=1e-14)


def test_stumps_validation():
    with pytest.raises(ValueError):
        train_stumps(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(ValueError):
        train_stumps(np.zeros((3, 2)), np.zeros(4))


# ---------------------------------------------------------------- MLP


def test_mlp_fits_linear_target():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((300, 5))
    y = X @ np.array([1.0, -2.0, 0.5, 0.0, 3.0]) + 0.7
    tr, va = slice(0, 240), slice(240, None)
    params = train_mlp_baseline(X[tr], y[tr], MLPConfig(epochs=60, lr=1e-3))
    assert metrics_from(params.predict(X[va]), y[va]).r2 > 0.99
    assert len(params.weights) == 5 and params.weights[1].shape == (512, 512)


def test_mlp_zero_epochs_is_initialisation():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((20, 3)), rng.standard_normal(20)
    a = train_mlp_baseline(X, y, MLPConfig(epochs=0, width=16))
    b = train_mlp_baseline(X, y, MLPConfig(epochs=0, width=16))
    assert a.loss_curve == []
    np.testing.assert_array_equal(a.predict(X), b.predict(X))


def test_mlp_divergence_reported():
    rng = np.random.default_rng(0)
    X, y = rng.standard_normal((20, 3)), rng.standard_normal(20)
    with pytest.raises(FloatingPointError, match="diverged"):
        with np.errstate(all="ignore"):
            train_mlp_baseline(X, y, MLPConfig(epochs=50, width=16, lr=1e6))


# ---------------------------------------------------------------- PCA


def svd_oracle(X, k):
    xc = X - X.mean(axis=0)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    var = s**2 / (X.shape[0] - 1)
    return vt[:k], var[:k] / var.sum()


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(3, 30), d=st.integers(1, 20))
def test_pca_matches_svd_oracle(seed, n, d):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d)) * rng.uniform(0.1, 3, d)
    k = min(d, n - 1)
    res = pca(X, k)
    comps, ratios = svd_oracle(X, k)
    np.testing.assert_allclose(res.explained_ratio, ratios, rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(res.components @ res.components.T, np.eye(k), atol=1e-8)
    assert np.all(np.diff(res.explained_ratio) <= 1e-12)
    assert res.explained_ratio.sum() <= 1 + 1e-8
    # compare directions up to sign where the eigenvalue is well separated
    lam = res.explained_variance
    for i in range(k):
        gap = min(abs(lam[i] - lam[j]) for j in range(len(lam)) if j != i) if k > 1 else np.inf
        if gap > 1e-6 * lam[0]:
            assert abs(abs(res.components[i] @ comps[i]) - 1) < 1e-8


def test_pca_line_and_isotropic():
    t = np.linspace(-1, 1, 50)
    line = np.column_stack([t, 2 * t + 1])
    assert pca(line, 1).explained_ratio[0] == pytest.approx(1.0, abs=1e-10)
    iso = np.random.default_rng(0).standard_normal((10_000, 2))
    np.testing.assert_allclose(pca(iso, 2).explained_ratio, [0.5, 0.5], atol=0.02)


def test_pca_projection_and_sign():
    X = np.random.default_rng(1).standard_normal((40, 4))
    res = pca(X, 3)
    np.testing.assert_allclose(res.projections, (X - X.mean(0)) @ res.components.T)
    for c in res.components:
        assert c[np.argmax(np.abs(c))] > 0


def test_pca_errors():
    with pytest.raises(ValueError):
        pca(np.zeros((5, 3)), 4)
    with pytest.raises(ValueError):
        pca(np.zeros((1, 3)), 1)
    res = pca(np.ones((4, 2)), 2)  # zero variance
    assert np.all(res.explained_ratio == 0)


# ---------------------------------------------------------------- benchmark


def test_benchmark_table_has_configured_models():
    ds = positioned_dataset(30, nodes=(25, 35))
    cfg = BenchmarkConfig(models=("gb", "mlp"), gb_estimators=30, mlp=MLPConfig(epochs=3, width=16))
    rows = benchmark_compare(ds, cfg)
    assert [r.model for r in rows] == ["gb", "mlp"]
    assert all(np.isfinite(r.r2) for r in rows)
    with pytest.raises(ValueError, match="unknown"):
        benchmark_compare(ds, BenchmarkConfig(models=("svm",)))


def test_benchmark_easy_target_all_models():
    # target linear in the velocity of the node nearest the reference point:
    # every model sees it directly (graph models through the readout)
    rng = np.random.default_rng(2)
    recs = []
    for i in range(120):
        g = random_graph(rng, int(rng.integers(20, 30)), positions=True)
        s = rng.uniform(-1, 1)
        f = np.column_stack([np.full(g.num_nodes, s), np.full(g.num_nodes, -s)])
        recs.append(Record(i, build_graph(f, g.edges, g.positions), 2 * s + 1))
    ds = Dataset(recs)
    train_cfg = TrainConfig(epochs=15, lr=3e-3, batch_size=8, model=ModelConfig(width=8, fc_widths=(16, 8, 1)))
    cfg = BenchmarkConfig(gb_estimators=200, gb_shrinkage=0.3, mlp=MLPConfig(epochs=40, width=32), train=train_cfg)
    rows = {r.model: r for r in benchmark_compare(ds, cfg)}
    assert set(rows) == {"gb", "mlp", "gcnn"}
    for r in rows.values():
        assert r.r2 > 0.9, (r.model, r.r2)
