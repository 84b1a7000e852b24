"""Graph layers: GraphSAGE mean rings, Top-K pooling and the mean/max readout."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Tensor
from .graph import Graph


@dataclass
class SageBlockParams:
    """Weights of K sequential SAGE rings.

    Ring r maps width f_r to f_{r+1} with ``weights[r]`` of shape
    ``[2 * f_r, f_{r+1}]``: the first f_r rows act on the node itself, the
    rest on the neighbourhood mean.
    """

    weights: list[Tensor]
    biases: list[Tensor]
    normalize: bool = False

    def __post_init__(self):
        if len(self.weights) < 1 or len(self.weights) != len(self.biases):
            raise ValueError("need K >= 1 rings with one bias each")
        for r, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape[0] % 2 or b.shape != (w.shape[1],):
                raise ValueError(f"ring {r}: weight {w.shape} / bias {b.shape} malformed")
            if r and w.shape[0] != 2 * self.weights[r - 1].shape[1]:
                raise ValueError(f"ring {r} input width does not match ring {r - 1} output")

    @property
    def rings(self) -> int:
        return len(self.weights)

    @property
    def in_width(self) -> int:
        return self.weights[0].shape[0] // 2

    @property
    def out_width(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> list[Tensor]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def init(cls, widths: list[int], rng: np.random.Generator, normalize: bool = False):
        """``widths`` = [f_in, f_1, ..., f_K]; Glorot-uniform weights, zero biases."""
        ws, bs = [], []
        for fi, fo in zip(widths[:-1], widths[1:]):
            ws.append(ad.parameter(glorot(rng, 2 * fi, fo)))
            bs.append(ad.parameter(np.zeros(fo)))
        return cls(ws, bs, normalize)


@dataclass
class TopKParams:
    score: Tensor
    ratio: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.ratio <= 1.0):
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")

    def parameters(self) -> list[Tensor]:
        return [self.score]

    @classmethod
    def init(cls, width: int, rng: np.random.Generator, ratio: float = 0.5):
        p = rng.standard_normal(width)
        return cls(ad.parameter(p / np.linalg.norm(p)), ratio)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


def _features(g: Graph, h) -> Tensor:
    t = h if isinstance(h, Tensor) else Tensor(h)
    if t.data.ndim != 2 or t.shape[0] != g.num_nodes:
        raise ValueError(f"features of shape {t.shape} do not match graph with {g.num_nodes} nodes")
    return t


def sage_ring(g: Graph, h, w: Tensor, bias: Tensor, normalize: bool = False, activation=ad.relu) -> Tensor:
    """One mean-aggregation ring: ``act([h_v || mean({h_v} + N(v))] @ w + bias)``."""
    h = _features(g, h)
    if w.shape[0] != 2 * h.shape[1]:
        raise ValueError(f"weight rows {w.shape[0]} != 2 x input width {h.shape[1]}")
    m = ad.spmm(g.mean_operator, h, g.mean_operator_t)
    out = ad.linear(ad.concat(h, m), w, bias)
    if activation is not None:
        out = activation(out)
    if normalize:
        out = ad.l2_normalize_rows(out)
    return out


def sage_block(g: Graph, h, params: SageBlockParams, activation=ad.relu) -> Tensor:
    """K rings in sequence, so node v sees its K-hop neighbourhood."""
    h = _features(g, h)
    for w, b in zip(params.weights, params.biases):
        h = sage_ring(g, h, w, b, params.normalize, activation)
    return h


def laplacian_gcn_ring(g: Graph, h, w: Tensor, activation=ad.relu) -> Tensor:
    """Symmetric-normalised GCN ring with self-loops, ``act(D^-1/2 (A+I) D^-1/2 h w)``.

    Reference variant for cross-checks; the trained model uses SAGE rings.
    """
    h = _features(g, h)
    a = g.adjacency + sp.identity(g.num_nodes, format="csr")
    d = 1.0 / np.sqrt(np.asarray(a.sum(axis=1)).ravel())
    op = sp.csr_matrix(sp.diags(d) @ a @ sp.diags(d))
    out = ad.matmul(ad.spmm(op, h, op), w)
    return activation(out) if activation is not None else out


def topk_count(n: int, ratio: float) -> int:
    return max(1, math.ceil(ratio * n - 1e-9))


def topk_pool(g: Graph, h, params: TopKParams) -> tuple[Graph, Tensor, np.ndarray]:
    """Keep the ``ceil(ratio * n)`` highest-scoring nodes, gated by ``tanh(score)``.

    Scores are ``h @ p / ||p||``; ties go to the lower node index. ``kept``
    is ordered by descending score and the pooled graph is the induced
    subgraph in that order.
    """
    h = _features(g, h)
    if not np.any(params.score.data):
        raise ValueError("Top-K score vector is all zeros")
    y = ad.matvec(h, ad.unit_vector(params.score))
    m = topk_count(g.num_nodes, params.ratio)
    kept = np.lexsort((np.arange(g.num_nodes), -y.data))[:m]
    gate = ad.tanh(ad.gather_rows(y, kept, unique=True))
    pooled = ad.mul_rows(ad.gather_rows(h, kept, unique=True), gate)
    sub, _ = g._subgraph_fast(kept)
    return sub, pooled, kept


def global_mean_max(h: Tensor) -> Tensor:
    """[mean over rows || max over rows]; length 2f whatever the node count."""
    if h.data.ndim != 2 or h.shape[0] == 0:
        raise ValueError("global_mean_max needs a non-empty [n, f] tensor")
    return ad.concat(ad.reduce_mean_rows(h), ad.reduce_max_rows(h))
