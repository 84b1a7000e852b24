"""A small reverse-mode autodiff engine over whole float64 arrays.

Each op returns a new :class:`Tensor` and, when any input requires a
gradient, records a closure that maps the output gradient to input
gradients. :func:`backward` replays the recorded tape in reverse
topological order.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_TAPE_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Run ops without recording the tape (inference)."""
    global _TAPE_ENABLED
    prev = _TAPE_ENABLED
    _TAPE_ENABLED = False
    try:
        yield
    finally:
        _TAPE_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self.parents: tuple[Tensor, ...] = ()
        self.backward_fn: Callable | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _result(data: np.ndarray, parents: Sequence[Tensor], fn: Callable) -> Tensor:
    """Wrap op output; ``fn(g)`` returns one gradient (or None) per parent."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out.requires_grad = _TAPE_ENABLED and any(p.requires_grad for p in parents)
    if out.requires_grad:
        out.parents = tuple(parents)
        out.backward_fn = fn
    else:
        out.parents = ()
        out.backward_fn = None
    return out


def _check(cond: bool, msg: str):
    if not cond:
        raise ValueError(msg)


# ---------------------------------------------------------------- ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.data.ndim == 2 and b.data.ndim == 2 and a.shape[1] == b.shape[0],
           f"matmul shape mismatch {a.shape} @ {b.shape}")
    return _result(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ w + bias for x [n, a], w [a, b], bias [b]."""
    _check(x.data.ndim == 2 and w.data.ndim == 2 and x.shape[1] == w.shape[0],
           f"linear shape mismatch {x.shape} @ {w.shape}")
    if bias is None:
        return matmul(x, w)
    _check(bias.shape == (w.shape[1],), f"bias shape {bias.shape} does not match {w.shape[1]}")
    out = x.data @ w.data + bias.data

    def fn(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return _result(out, (x, w, bias), fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"add shape mismatch {a.shape} vs {b.shape}")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"sub shape mismatch {a.shape} vs {b.shape}")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def scale(a: Tensor, c: float) -> Tensor:
    return _result(a.data * c, (a,), lambda g: (g * c,))


def shift(a: Tensor, c: float) -> Tensor:
    return _result(a.data + c, (a,), lambda g: (g,))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, f"mul shape mismatch {a.shape} vs {b.shape}")
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def mul_rows(x: Tensor, s: Tensor) -> Tensor:
    """Scale row i of x [n, f] by s[i]."""
    _check(x.data.ndim == 2 and s.shape == (x.shape[0],), f"mul_rows shape mismatch {x.shape}, {s.shape}")
    out = x.data * s.data[:, None]
    return _result(out, (x, s), lambda g: (g * s.data[:, None], np.einsum("ij,ij->i", g, x.data)))


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0.0)
    return _result(out, (x,), lambda g: (g * (out > 0),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return _result(t, (x,), lambda g: (g * (1.0 - t * t),))


def spmm(s, x: Tensor, s_t=None) -> Tensor:
    """Constant sparse matrix times dense tensor; ``s_t`` is an optional precomputed transpose."""
    _check(s.shape[1] == x.shape[0], f"spmm shape mismatch {s.shape} @ {x.shape}")
    st = s.T if s_t is None else s_t
    return _result(s @ x.data, (x,), lambda g: (st @ g,))


def gather_rows(x: Tensor, idx: np.ndarray, unique: bool = False) -> Tensor:
    """Rows ``x[idx]``; pass ``unique=True`` when idx has no repeats (faster backward)."""
    idx = np.asarray(idx, dtype=np.int64)
    n = x.shape[0]

    def fn(g):
        full = np.zeros_like(x.data)
        if unique:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    if idx.size and (idx.min() < -n or idx.max() >= n):
        raise IndexError("gather index out of range")
    return _result(x.data[idx], (x,), fn)


def reduce_mean_rows(x: Tensor) -> Tensor:
    _check(x.data.ndim == 2, "reduce_mean_rows expects [n, f]")
    n = x.shape[0]
    _check(n >= 1, "reduce_mean_rows of an empty tensor")
    return _result(x.data.mean(axis=0), (x,), lambda g: (np.broadcast_to(g / n, x.shape).copy(),))


def reduce_max_rows(x: Tensor) -> Tensor:
    """Column max; the gradient goes to the first (lowest-index) maximising row."""
    _check(x.data.ndim == 2, "reduce_max_rows expects [n, f]")
    _check(x.shape[0] >= 1, "reduce_max_rows of an empty tensor")
    arg = np.argmax(x.data, axis=0)
    cols = np.arange(x.shape[1])

    def fn(g):
        full = np.zeros_like(x.data)
        full[arg, cols] = g
        return (full,)

    return _result(x.data[arg, cols], (x,), fn)


def concat(a: Tensor, b: Tensor) -> Tensor:
    """Join along the last axis: 1-D vectors end to end, 2-D tensors column-wise."""
    _check(a.data.ndim == b.data.ndim and a.shape[:-1] == b.shape[:-1],
           f"concat shape mismatch {a.shape} vs {b.shape}")
    k = a.shape[-1]
    return _result(np.concatenate([a.data, b.data], axis=-1), (a, b),
                   lambda g: (g[..., :k], g[..., k:]))


def l2_normalize_rows(x: Tensor) -> Tensor:
    """Divide each row by its L2 norm; all-zero rows pass through unchanged."""
    _check(x.data.ndim == 2, "l2_normalize_rows expects [n, f]")
    norm = np.sqrt(np.einsum("ij,ij->i", x.data, x.data))
    nz = norm > 0
    safe = np.where(nz, norm, 1.0)
    y = x.data / safe[:, None]

    def fn(g):
        proj = np.einsum("ij,ij->i", g, y)
        gx = (g - y * proj[:, None]) / safe[:, None]
        gx[~nz] = g[~nz]
        return (gx,)

    return _result(y, (x,), fn)


def unit_vector(p: Tensor) -> Tensor:
    """p / ||p|| for a 1-D tensor."""
    nrm = float(np.linalg.norm(p.data))
    _check(nrm > 0, "unit_vector of a zero vector")
    u = p.data / nrm
    return _result(u, (p,), lambda g: ((g - u * (g @ u)) / nrm,))


def matvec(x: Tensor, v: Tensor) -> Tensor:
    _check(x.data.ndim == 2 and v.shape == (x.shape[1],), f"matvec shape mismatch {x.shape}, {v.shape}")
    return _result(x.data @ v.data, (x, v), lambda g: (np.outer(g, v.data), x.data.T @ g))


def reshape(x: Tensor, shape) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def tsum(x: Tensor) -> Tensor:
    return _result(np.asarray(x.data.sum()), (x,), lambda g: (np.full_like(x.data, g),))


def mse(pred: Tensor, target) -> Tensor:
    """Mean squared error; ``target`` is treated as a constant."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=np.float64)
    _check(pred.shape == t.shape, f"mse shape mismatch {pred.shape} vs {t.shape}")
    r = pred.data - t
    n = max(r.size, 1)
    return _result(np.asarray(np.mean(r * r)), (pred,), lambda g: (g * 2.0 * r / n,))


# ---------------------------------------------------------------- backward


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor, seed: float = 1.0):
    """Accumulate d loss / d leaf into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.full_like(loss.data, seed)}
    for node in reversed(_topological(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = node.grad + g if node.grad is not None else g.copy()
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------- optimisers


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if m.shape != p.data.shape:
            raise ValueError("Adam moment buffers do not match parameter shapes")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


@dataclass
class SGDState:
    lr: float = 1e-2
    momentum: float = 0.9
    velocity: list[np.ndarray] = field(default_factory=list)


def sgd_momentum_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: SGDState) -> SGDState:
    if not state.velocity:
        state.velocity = [np.zeros_like(p.data) for p in params]
    for p, g, buf in zip(params, grads, state.velocity):
        buf *= state.momentum
        buf += g
        p.data -= state.lr * buf
    return state


# ---------------------------------------------------------------- gradient checking


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-6,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> float:
    """Largest relative error between backward and central differences.

    ``f`` rebuilds the scalar loss from the current values of ``params``.
    With ``max_coords`` set, that many coordinates are drawn at random
    (uniformly over all parameters); otherwise every coordinate is checked.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    for p in params:
        p.zero_grad()
    backward(f())
    analytic = [p.grad.copy() for p in params]

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.data.size)]
    if max_coords is not None and max_coords < len(coords):
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[k] for k in sorted(pick)]

    worst = 0.0
    for i, j in coords:
        flat = params[i].data.reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        fp = float(f().data)
        flat[j] = orig - h
        fm = float(f().data)
        flat[j] = orig
        num = (fp - fm) / (2 * h)
        a = analytic[i].reshape(-1)[j]
        worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    return worst
