"""Non-graph baselines on an ordered feature matrix, plus PCA tooling."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .gnn import glorot
from .model import Metrics, ModelParams, TrainConfig, metrics_from, predict, split_indices, train

AIRFOIL_CENTER = (0.5, 0.0)


# ---------------------------------------------------------------- ordered features


@dataclass
class OrderedFeatureMatrix:
    """Row per sample: u of the m selected nodes, then v of the same nodes."""

    X: np.ndarray
    positions: np.ndarray  # (samples, m, 2), node positions in column order
    m: int


def node_order(positions: np.ndarray, reference=AIRFOIL_CENTER) -> np.ndarray:
    """Sort by distance to ``reference``, then polar angle, then node index."""
    rel = positions - np.asarray(reference)
    dist = np.hypot(rel[:, 0], rel[:, 1])
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    return np.lexsort((np.arange(positions.shape[0]), ang, dist))


def ordered_features(dataset, m: int = 1000, reference=AIRFOIL_CENTER) -> OrderedFeatureMatrix:
    rows, pos = [], []
    for rec in dataset:
        g = rec.graph
        if g.positions is None:
            raise ValueError(f"record {rec.id} has no node positions")
        if g.num_nodes < m:
            raise ValueError(f"record {rec.id} has {g.num_nodes} nodes, fewer than m={m}")
        idx = node_order(g.positions, reference)[:m]
        rows.append(np.concatenate([g.features[idx, 0], g.features[idx, 1]]))
        pos.append(g.positions[idx])
    return OrderedFeatureMatrix(np.array(rows), np.array(pos), m)


def spatial_consistency(ofm: OrderedFeatureMatrix, domain_length: float = 10.0, tol: float = 5e-3,
                        max_refs: int = 50) -> float:
    """Fraction of same-index node pairs (across samples) closer than ``tol * domain_length``.

    Each of the first ``max_refs`` samples is compared against every other sample.
    """
    p = ofm.positions
    hits = total = 0
    for r in range(min(max_refs, p.shape[0])):
        d = np.linalg.norm(np.delete(p, r, axis=0) - p[r][None], axis=2)
        hits += int(np.count_nonzero(d < tol * domain_length))
        total += d.size
    return hits / total if total else float("nan")


# ---------------------------------------------------------------- boosted stumps


@dataclass
class StumpEnsemble:
    offset: float
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    shrinkage: np.ndarray
    train_mse: list[float] = field(default_factory=list)

    def __len__(self):
        return self.feature.size

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(X.shape[0], self.offset)
        for f, t, lv, rv, s in zip(self.feature, self.threshold, self.left, self.right, self.shrinkage):
            out += s * np.where(X[:, f] <= t, lv, rv)
        return out


def train_stumps(X, y, n_estimators: int = 500, shrinkage: float = 0.1) -> StumpEnsemble:
    """Least-squares gradient boosting with depth-1 trees.

    Each round scans every feature and every midpoint between consecutive
    distinct sorted values, and fits the stump that most reduces the
    squared error of the current residuals.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[0] != y.size:
        raise ValueError("X must be a non-empty (n, d) array matching y")
    if n_estimators < 1:
        raise ValueError("n_estimators must be >= 1")
    n, d = X.shape
    order = np.argsort(X, axis=0, kind="stable")
    xs = np.take_along_axis(X, order, axis=0)
    valid = xs[1:] > xs[:-1]
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left

    # exact offset for a constant target, so every stump fits zero residuals
    offset = float(y[0]) if np.all(y == y[0]) else float(y.mean())
    resid = y - offset
    feats, thr, lv, rv = [], [], [], []
    curve = [float(np.mean(resid**2))]
    for _ in range(n_estimators):
        total = resid.sum()
        if n > 1 and valid.any():
            cs = np.cumsum(resid[order], axis=0)[:-1]
            gain = cs**2 / n_left + (total - cs) ** 2 / n_right
            gain[~valid] = -np.inf
            # feature-major flattening: ties resolve to the lowest feature, then lowest split
            k = int(np.argmax(gain.T))
            f, i = divmod(k, n - 1)
            t = 0.5 * (xs[i, f] + xs[i + 1, f])
            a = cs[i, f] / n_left[i, 0]
            b = (total - cs[i, f]) / n_right[i, 0]
        else:
            f, t, a, b = 0, np.inf, total / n, total / n
        feats.append(f)
        thr.append(t)
        lv.append(a)
        rv.append(b)
        resid = resid - shrinkage * np.where(X[:, f] <= t, a, b)
        curve.append(float(np.mean(resid**2)))
    return StumpEnsemble(
        offset, np.array(feats, dtype=np.int64), np.array(thr), np.array(lv), np.array(rv),
        np.full(len(feats), shrinkage), curve,
    )


# ---------------------------------------------------------------- MLP


@dataclass
class MLPConfig:
    hidden_layers: int = 4
    width: int = 512
    lr: float = 1e-3
    momentum: float = 0.9
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0


@dataclass
class MLPParams:
    weights: list[ad.Tensor]
    biases: list[ad.Tensor]
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    loss_curve: list[float] = field(default_factory=list)

    def parameters(self):
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def _forward(self, xs: ad.Tensor) -> ad.Tensor:
        h = xs
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = ad.linear(h, w, b)
            if i < last:
                h = ad.relu(h)
        return ad.reshape(h, (-1,))

    def predict(self, X) -> np.ndarray:
        xs = (np.asarray(X, dtype=float) - self.x_mean) / self.x_std
        with ad.no_grad():
            return self._forward(ad.Tensor(xs)).data * self.y_std + self.y_mean


def train_mlp_baseline(X, y, config: MLPConfig = MLPConfig()) -> MLPParams:
    """Fully connected ReLU net on standardised inputs, MSE loss, SGD with momentum."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng([config.seed, 3])
    x_mean = X.mean(axis=0)
    x_std = X.std(axis=0)
    x_std[x_std == 0] = 1.0
    y_mean = float(y.mean())
    y_std = float(y.std()) or 1.0
    widths = [X.shape[1]] + [config.width] * config.hidden_layers + [1]
    ws = [ad.parameter(glorot(rng, a, b)) for a, b in zip(widths[:-1], widths[1:])]
    bs = [ad.parameter(np.zeros(b)) for b in widths[1:]]
    params = MLPParams(ws, bs, x_mean, x_std, y_mean, y_std)
    xs = (X - x_mean) / x_std
    ys = (y - y_mean) / y_std
    plist = params.parameters()
    state = ad.SGDState(lr=config.lr, momentum=config.momentum)
    for epoch in range(config.epochs):
        order = rng.permutation(X.shape[0])
        total = 0.0
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            for p in plist:
                p.zero_grad()
            loss = ad.mse(params._forward(ad.Tensor(xs[idx])), ys[idx])
            if not np.isfinite(loss.data):
                raise FloatingPointError(f"MLP baseline diverged at epoch {epoch}")
            ad.backward(loss)
            ad.sgd_momentum_step(plist, [p.grad for p in plist], state)
            total += loss.item() * idx.size
        params.loss_curve.append(total / X.shape[0])
    return params


# ---------------------------------------------------------------- PCA


@dataclass
class PCAResult:
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray
    explained_ratio: np.ndarray
    projections: np.ndarray  # (n, k)
    mean: np.ndarray


def pca(X, k: int) -> PCAResult:
    """Principal components from the mean-centred sample covariance.

    Components are sorted by descending variance; each is signed so that
    its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("pca needs at least two rows")
    if not (1 <= k <= X.shape[1]):
        raise ValueError(f"k={k} must lie in [1, {X.shape[1]}]")
    mean = X.mean(axis=0)
    xc = X - mean
    cov = xc.T @ xc / (X.shape[0] - 1)
    lam, vec = np.linalg.eigh(cov)
    order = np.argsort(-lam, kind="stable")[:k]
    lam = np.clip(lam[order], 0.0, None)
    comps = vec[:, order].T
    flip = comps[np.arange(k), np.argmax(np.abs(comps), axis=1)] < 0
    comps[flip] *= -1
    trace = float(np.trace(cov))
    ratio = lam / trace if trace > 0 else np.zeros_like(lam)
    return PCAResult(comps, lam, ratio, xc @ comps.T, mean)


# ---------------------------------------------------------------- benchmark


@dataclass
class BenchmarkConfig:
    models: tuple[str, ...] = ("gb", "mlp", "gcnn")
    m: int | None = None  # ordered nodes per sample; None = min(1000, smallest sample)
    gb_estimators: int = 500
    gb_shrinkage: float = 0.1
    mlp: MLPConfig = field(default_factory=MLPConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass
class BenchmarkRow:
    model: str
    r2: float
    nmse: float
    mse: float
    metrics: Metrics


def feature_count(dataset, m: int | None = None) -> int:
    """Ordered-feature width used by the benchmark: ``m`` or min(1000, smallest sample)."""
    return m or min(1000, min(r.graph.num_nodes for r in dataset))


def benchmark_compare(dataset, config: BenchmarkConfig = BenchmarkConfig(),
                      gcnn_params: ModelParams | None = None) -> list[BenchmarkRow]:
    """Train the configured models on one seeded split and score them on the held-out part.

    A pre-trained ``gcnn_params`` (fit on the same split) skips GCNN training.
    """
    unknown = set(config.models) - {"gb", "mlp", "gcnn"}
    if unknown:
        raise ValueError(f"unknown benchmark models {sorted(unknown)}")
    tr, va = split_indices(len(dataset), config.train.train_fraction, config.train.seed)
    y = dataset.targets
    rows = []
    if {"gb", "mlp"} & set(config.models):
        X = ordered_features(dataset, feature_count(dataset, config.m)).X
    for name in config.models:
        if name == "gb":
            ens = train_stumps(X[tr], y[tr], config.gb_estimators, config.gb_shrinkage)
            met = metrics_from(ens.predict(X[va]), y[va])
        elif name == "mlp":
            mlp = train_mlp_baseline(X[tr], y[tr], config.mlp)
            met = metrics_from(mlp.predict(X[va]), y[va])
        else:
            params = gcnn_params
            if params is None:
                params, _ = train(dataset, config.train)
            met = metrics_from(predict(params, [dataset[int(i)].graph for i in va]), y[va])
        rows.append(BenchmarkRow(name, met.r2, met.nmse, met.mse, met))
    return rows


def with_models(config: BenchmarkConfig, *models: str) -> BenchmarkConfig:
    return dataclasses.replace(config, models=tuple(models))
