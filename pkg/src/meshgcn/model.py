"""The GCNN regressor: two SAGE + Top-K blocks, mean/max readouts summed
through a skip connection, and a fully connected head.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .gnn import SageBlockParams, TopKParams, global_mean_max, sage_block, topk_pool, glorot
from .graph import Graph

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss {loss})")
        self.epoch = epoch


@dataclass
class ModelConfig:
    in_features: int = 2
    width: int = 64
    rings: int = 2
    ratio: float = 0.5
    blocks: int = 2
    fc_widths: tuple[int, ...] = (256, 128, 64, 1)
    normalize: bool = False
    skip: bool = True


@dataclass
class ModelParams:
    config: ModelConfig
    sage: list[SageBlockParams]
    pools: list[TopKParams]
    fc_weights: list[Tensor]
    fc_biases: list[Tensor]
    target_mean: float = 0.0
    target_std: float = 1.0

    def __post_init__(self):
        widths = {2 * s.out_width for s in self.sage}
        if len(widths) != 1:
            raise ValueError("all blocks must produce readouts of the same length")
        if self.fc_weights[0].shape[0] != widths.pop() or self.fc_weights[-1].shape[1] != 1:
            raise ValueError("fully connected head does not fit the readout / scalar output")

    @classmethod
    def init(cls, config: ModelConfig = ModelConfig(), seed: int | np.random.Generator = 0) -> ModelParams:
        rng = np.random.default_rng(seed)
        sage, pools = [], []
        f_in = config.in_features
        for _ in range(config.blocks):
            widths = [f_in] + [config.width] * config.rings
            sage.append(SageBlockParams.init(widths, rng, config.normalize))
            pools.append(TopKParams.init(config.width, rng, config.ratio))
            f_in = config.width
        ws, bs = [], []
        prev = 2 * config.width
        for fo in config.fc_widths:
            ws.append(ad.parameter(glorot(rng, prev, fo)))
            bs.append(ad.parameter(np.zeros(fo)))
            prev = fo
        return cls(config, sage, pools, ws, bs)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for b, (s, p) in enumerate(zip(self.sage, self.pools)):
            for r, (w, bias) in enumerate(zip(s.weights, s.biases)):
                out += [(f"block{b}.ring{r}.weight", w), (f"block{b}.ring{r}.bias", bias)]
            out.append((f"block{b}.pool.score", p.score))
        for i, (w, b) in enumerate(zip(self.fc_weights, self.fc_biases)):
            out += [(f"fc{i}.weight", w), (f"fc{i}.bias", b)]
        return out

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self):
        for t in self.parameters():
            t.zero_grad()

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.parameters())


def _check_input(g: Graph, params: ModelParams):
    if g.num_nodes < 1:
        raise ValueError("empty graph")
    if g.num_features != params.config.in_features:
        raise ValueError(f"graph has {g.num_features} features per node, model expects {params.config.in_features}")


def embed(g: Graph, params: ModelParams) -> Tensor:
    """Readout vector fed to the first fully connected layer."""
    _check_input(g, params)
    h = Tensor(g.features)
    cur = g
    readouts = []
    for s, p in zip(params.sage, params.pools):
        h = sage_block(cur, h, s)
        cur, h, _ = topk_pool(cur, h, p)
        readouts.append(global_mean_max(h))
    if not params.config.skip:
        return readouts[-1]
    out = readouts[0]
    for r in readouts[1:]:
        out = ad.add(out, r)
    return out


def forward_raw(g: Graph, params: ModelParams) -> Tensor:
    """Network output in standardised target units."""
    x = ad.reshape(embed(g, params), (1, -1))
    last = len(params.fc_weights) - 1
    for i, (w, b) in enumerate(zip(params.fc_weights, params.fc_biases)):
        x = ad.linear(x, w, b)
        if i < last:
            x = ad.relu(x)
    return ad.reshape(x, ())


def forward(g: Graph, params: ModelParams) -> Tensor:
    """Predicted target for one graph (physical units)."""
    out = forward_raw(g, params)
    if params.target_std != 1.0:
        out = ad.scale(out, params.target_std)
    if params.target_mean != 0.0:
        out = ad.shift(out, params.target_mean)
    return out


def predict(params: ModelParams, graphs) -> np.ndarray:
    with ad.no_grad():
        return np.array([forward(g, params).item() for g in graphs])


def embed_many(params: ModelParams, graphs) -> np.ndarray:
    with ad.no_grad():
        return np.stack([embed(g, params).data for g in graphs])


# ---------------------------------------------------------------- metrics


@dataclass
class Metrics:
    """MSE, NMSE = MSE / var(targets) and R^2 = 1 - NMSE.

    With zero target variance nmse and r2 are NaN and mse is still valid.
    """

    mse: float
    nmse: float
    r2: float
    residuals: np.ndarray
    predictions: np.ndarray
    targets: np.ndarray

    @property
    def defined(self) -> bool:
        return not math.isnan(self.nmse)


def metrics_from(predictions, targets) -> Metrics:
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if t.size == 0:
        raise ValueError("empty evaluation set")
    res = p - t
    mse = float(np.mean(res * res))
    var = float(np.var(t))
    nmse = mse / var if var > 0 else float("nan")
    return Metrics(mse, nmse, 1.0 - nmse, res, p, t)


def evaluate(params: ModelParams, dataset) -> Metrics:
    return metrics_from(predict(params, dataset.graphs), dataset.targets)


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 32
    train_fraction: float = 0.8
    seed: int = 0
    normalize_targets: bool = True
    # multiplicative learning-rate decay applied per epoch (1.0 = constant)
    lr_decay: float = 1.0
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class History:
    """Per-epoch curves. ``train_nmse`` is computed from the predictions made
    during the epoch's minibatches; ``val_nmse`` from a pass after the epoch."""

    train_nmse: list[float] = field(default_factory=list)
    val_nmse: list[float] = field(default_factory=list)
    train_idx: np.ndarray | None = None
    val_idx: np.ndarray | None = None

    def __len__(self):
        return len(self.val_nmse)


def split_indices(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random split; the first ``round(train_fraction * n)`` of a permutation train."""
    perm = np.random.default_rng([seed, 0x5EED]).permutation(n)
    k = int(round(train_fraction * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def _nmse_or_mse(pred, target) -> float:
    m = metrics_from(pred, target)
    return m.nmse if m.defined else m.mse


def train(dataset, config: TrainConfig = TrainConfig(), progress=None) -> tuple[ModelParams, History]:
    """Minibatch Adam on squared error; returns trained params and per-epoch NMSE curves.

    Graphs in a batch are processed one at a time and their gradients
    averaged. The train curve uses the predictions made during the epoch
    (before each batch's update); the validation curve is a full pass
    after the epoch.
    """
    n = len(dataset)
    if n < 10:
        raise ValueError(f"need at least 10 samples to train, got {n}")
    train_idx, val_idx = split_indices(n, config.train_fraction, config.seed)
    if train_idx.size == 0 or val_idx.size == 0:
        raise ValueError("empty train or validation split")
    graphs = dataset.graphs
    targets = dataset.targets

    params = ModelParams.init(config.model, np.random.default_rng([config.seed, 1]))
    if config.normalize_targets:
        params.target_mean = float(targets[train_idx].mean())
        sd = float(targets[train_idx].std())
        params.target_std = sd if sd > 0 else 1.0
    scaled = (targets - params.target_mean) / params.target_std

    plist = params.parameters()
    state = ad.AdamState(lr=config.lr)
    rng = np.random.default_rng([config.seed, 2])
    history = History(train_idx=train_idx, val_idx=val_idx)
    for epoch in range(config.epochs):
        order = rng.permutation(train_idx)
        running = np.empty(order.size)
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            params.zero_grad()
            for j, i in enumerate(batch):
                out = forward_raw(graphs[i], params)
                loss = ad.mse(out, scaled[i])
                running[start + j] = out.item()
                ad.backward(loss, seed=1.0 / batch.size)
            if not (np.isfinite(running[start:start + batch.size]).all()
                    and all(np.isfinite(t.grad).all() for t in plist)):
                raise TrainingDiverged(epoch, float("nan"))
            ad.adam_step(plist, [p.grad for p in plist], state)
        state.lr *= config.lr_decay
        pred_train = running * params.target_std + params.target_mean
        history.train_nmse.append(_nmse_or_mse(pred_train, targets[order]))
        val_pred = predict(params, [graphs[i] for i in val_idx])
        if not np.isfinite(val_pred).all():
            raise TrainingDiverged(epoch, float("nan"))
        history.val_nmse.append(_nmse_or_mse(val_pred, targets[val_idx]))
        log.info("epoch %d train_nmse %.5f val_nmse %.5f", epoch, history.train_nmse[-1], history.val_nmse[-1])
        if progress is not None:
            progress(epoch, history)
    return params, history


def ablate_skip(dataset, config: TrainConfig = TrainConfig()) -> tuple[History, History]:
    """Train with and without the skip sum under identical seeds."""
    import dataclasses

    on = dataclasses.replace(config, model=dataclasses.replace(config.model, skip=True))
    off = dataclasses.replace(config, model=dataclasses.replace(config.model, skip=False))
    return train(dataset, on)[1], train(dataset, off)[1]
