"""Dense tensors with reverse-mode automatic differentiation.

A small define-by-run engine on top of numpy, providing exactly the
machinery the sequence encoder, bottleneck heads, and their losses need.
Everything runs in float64; ops are pure given an explicit
``numpy.random.Generator`` for the stochastic ones (dropout). The test
suite checks every differentiable op against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ConfigError, ShapeError, UsageError

DTYPE = np.float64


def _as_array(values) -> np.ndarray:
    return np.asarray(values, dtype=DTYPE)


class Tensor:
    """A dense array plus the bookkeeping needed for reverse mode.

    Results of ops hold references to their parents and a closure that
    routes the output gradient to them; leaves created with
    ``requires_grad=True`` collect gradients in ``.grad``.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, values, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = _as_array(values)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self.name = name
        self._parents = tuple(p for p in _parents if p.requires_grad)
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def _accumulate(self, contribution: np.ndarray, fresh: bool = False) -> None:
        """Add a gradient contribution; `fresh` means the array is newly
        allocated and this tensor may take ownership of it."""
        if self.grad is None:
            self.grad = contribution if fresh else contribution.copy()
        else:
            self.grad += contribution

    def backward(self) -> None:
        """Propagate gradients from this scalar to every reachable leaf."""
        if self.data.ndim != 0:
            raise UsageError(f"backward requires a scalar loss, got shape {self.shape}")
        order = _topological_order(self)
        self.grad = np.ones((), dtype=DTYPE)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar; constants are promoted automatically
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __getitem__(self, key):
        return slice_(self, key)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def constant(values) -> Tensor:
    """A tensor that never receives gradients."""
    return Tensor(values)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum-reduce a broadcast gradient back to the original shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def back(g):
        if a.requires_grad:
            ga = _unbroadcast(g, a.shape)
            a._accumulate(ga, fresh=ga is not g)
        if b.requires_grad:
            gb = _unbroadcast(g, b.shape)
            b._accumulate(gb, fresh=gb is not g)

    return Tensor(out_data, _parents=(a, b), _backward=back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def back(g):
        if a.requires_grad:
            ga = _unbroadcast(g, a.shape)
            a._accumulate(ga, fresh=ga is not g)
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape), fresh=True)

    return Tensor(out_data, _parents=(a, b), _backward=back)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape), fresh=True)
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape), fresh=True)

    return Tensor(out_data, _parents=(a, b), _backward=back)


def div(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data / b.data

    def back(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.data, a.shape), fresh=True)
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape), fresh=True)

    return Tensor(out_data, _parents=(a, b), _backward=back)


def neg(a: Tensor) -> Tensor:
    def back(g):
        a._accumulate(-g, fresh=True)

    return Tensor(-a.data, _parents=(a,), _backward=back)


# ---------------------------------------------------------------------------
# linear algebra and structure


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs ndim >= 2 operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def back(g):
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a._accumulate(_unbroadcast(ga, a.shape), fresh=True)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b._accumulate(_unbroadcast(gb, b.shape), fresh=True)

    return Tensor(out_data, _parents=(a, b), _backward=back)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x[..., D] @ w[D, M] (+ b): weight gradients computed in 2-d, which
    avoids materializing a per-row weight gradient the way matmul would."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear input {x.shape} incompatible with weight {w.shape}")
    out_data = np.matmul(x.data, w.data)
    if b is not None:
        out_data = out_data + b.data
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        g2 = g.reshape(-1, w.shape[1])
        if x.requires_grad:
            x._accumulate(np.matmul(g, w.data.T), fresh=True)
        if w.requires_grad:
            w._accumulate(np.matmul(x.data.reshape(-1, w.shape[0]).T, g2), fresh=True)
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0), fresh=True)

    return Tensor(out_data, _parents=parents, _backward=back)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out_data = a.data.reshape(shape)

    def back(g):
        a._accumulate(g.reshape(a.shape))

    return Tensor(out_data, _parents=(a,), _backward=back)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def back(g):
        a._accumulate(g.transpose(inverse))

    return Tensor(a.data.transpose(axes), _parents=(a,), _backward=back)


def concat(tensors: Iterable[Tensor], axis: int = -1) -> Tensor:
    parts = list(tensors)
    if not parts:
        raise UsageError("concat of an empty sequence")
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        moved = np.moveaxis(g, axis, 0)
        for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if part.requires_grad:
                part._accumulate(np.moveaxis(moved[lo:hi], 0, axis))

    return Tensor(out_data, _parents=tuple(parts), _backward=back)


def slice_(a: Tensor, key) -> Tensor:
    """Basic indexing (ints and slices only); gathers go through `take`."""
    out_data = a.data[key]

    def back(g):
        full = np.zeros_like(a.data)
        full[key] += g
        a._accumulate(full, fresh=True)

    return Tensor(out_data, _parents=(a,), _backward=back)


def take(a: Tensor, indices, axis: int) -> Tensor:
    """Gather along one axis with an integer index vector (duplicates allowed)."""
    idx = np.asarray(indices)
    out_data = np.take(a.data, idx, axis=axis)

    def back(g):
        full = np.zeros_like(a.data)
        # scatter-add on a swapped view so fancy indexing hits axis 0
        view = np.swapaxes(full, 0, axis)
        np.add.at(view, idx, np.swapaxes(g, 0, axis))
        a._accumulate(full, fresh=True)

    return Tensor(out_data, _parents=(a,), _backward=back)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Rows of `table` selected by an integer id array of any shape."""
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise ShapeError(f"embedding table must be 2-d, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise UsageError(
            f"embedding ids out of range [0, {table.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    out_data = table.data[ids]

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        table._accumulate(full, fresh=True)

    return Tensor(out_data, _parents=(table,), _backward=back)


def take_along_last(a: Tensor, indices) -> Tensor:
    """a[..., indices[...]] with one index per leading position."""
    idx = np.asarray(indices)
    if idx.shape != a.shape[:-1]:
        raise ShapeError(f"index shape {idx.shape} must match leading dims of {a.shape}")
    out_data = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]

    def back(g):
        full = np.zeros_like(a.data).reshape(-1, a.shape[-1])
        flat_idx = idx.reshape(-1)
        np.add.at(full, (np.arange(flat_idx.size), flat_idx), g.reshape(-1))
        a._accumulate(full.reshape(a.shape), fresh=True)

    return Tensor(out_data, _parents=(a,), _backward=back)


# ---------------------------------------------------------------------------
# reductions


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape).copy(), fresh=True)

    return Tensor(out_data, _parents=(a,), _backward=back)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else a.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), Tensor(1.0 / count))


# ---------------------------------------------------------------------------
# nonlinearities and normalization


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def back(g):
        a._accumulate(g * mask, fresh=True)

    return Tensor(a.data * mask, _parents=(a,), _backward=back)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def back(g):
        a._accumulate(g * 0.5 / out_data, fresh=True)

    return Tensor(out_data, _parents=(a,), _backward=back)


def sigmoid(a: Tensor) -> Tensor:
    out_data = _sigmoid_np(a.data)

    def back(g):
        a._accumulate(g * out_data * (1.0 - out_data), fresh=True)

    return Tensor(out_data, _parents=(a,), _backward=back)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    out_data = ex / ex.sum(axis=axis, keepdims=True)

    def back(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        a._accumulate(out_data * (g - inner), fresh=True)

    return Tensor(out_data, _parents=(a,), _backward=back)


def logsumexp(a: Tensor, axis: int = -1) -> Tensor:
    m = a.data.max(axis=axis, keepdims=True)
    ex = np.exp(a.data - m)
    s = ex.sum(axis=axis, keepdims=True)
    out_data = np.squeeze(m + np.log(s), axis=axis)

    def back(g):
        soft = ex / s
        a._accumulate(np.expand_dims(g, axis) * soft, fresh=True)

    return Tensor(out_data, _parents=(a,), _backward=back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply learned scale and shift."""
    dim = x.shape[-1]
    if gain.shape != (dim,) or bias.shape != (dim,):
        raise ShapeError(
            f"layer_norm scale/shift must have shape ({dim},), got {gain.shape} and {bias.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out_data = gain.data * xhat + bias.data

    def back(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).reshape(-1, dim).sum(axis=0), fresh=True)
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, dim).sum(axis=0), fresh=True)
        if x.requires_grad:
            gx_hat = g * gain.data
            term1 = gx_hat.mean(axis=-1, keepdims=True)
            term2 = (gx_hat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gx_hat - term1 - xhat * term2), fresh=True)

    return Tensor(out_data, _parents=(x, gain, bias), _backward=back)


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p) at train time."""
    if not 0.0 <= p < 1.0:
        raise UsageError(f"dropout probability must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    if rng is None:
        raise UsageError("train-mode dropout needs an explicit rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(keep))


# ---------------------------------------------------------------------------
# losses (numerically stable, log-sum-exp form)


def bce_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean binary cross-entropy of logits against {0,1} targets."""
    t = _as_array(targets)
    if t.shape != logits.shape:
        raise ShapeError(f"bce targets shape {t.shape} != logits shape {logits.shape}")
    if not np.isin(t, (0.0, 1.0)).all():
        raise UsageError("bce targets must be 0 or 1")
    x = logits.data
    per = np.maximum(x, 0.0) - x * t + np.log1p(np.exp(-np.abs(x)))
    count = max(per.size, 1)
    out_data = np.asarray(per.sum() / count)

    def back(g):
        logits._accumulate(g * (_sigmoid_np(x) - t) / count, fresh=True)

    return Tensor(out_data, _parents=(logits,), _backward=back)


def ce_with_logits(logits: Tensor, classes) -> Tensor:
    """Mean categorical cross-entropy over the last axis."""
    idx = np.asarray(classes)
    k = logits.shape[-1]
    if idx.shape != logits.shape[:-1]:
        raise ShapeError(f"class shape {idx.shape} != logits leading shape {logits.shape[:-1]}")
    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise UsageError(f"class index out of range [0, {k})")
    m = logits.data.max(axis=-1, keepdims=True)
    ex = np.exp(logits.data - m)
    s = ex.sum(axis=-1, keepdims=True)
    lse = (m + np.log(s))[..., 0]
    picked = np.take_along_axis(logits.data, idx[..., None], axis=-1)[..., 0]
    count = max(idx.size, 1)
    out_data = np.asarray((lse - picked).sum() / count)

    def back(g):
        soft = ex / s
        onehot = np.zeros_like(soft)
        np.put_along_axis(onehot, idx[..., None], 1.0, axis=-1)
        logits._accumulate(g * (soft - onehot) / count, fresh=True)

    return Tensor(out_data, _parents=(logits,), _backward=back)


# ---------------------------------------------------------------------------
# parameter registry and optimizer


class Tape:
    """Named registry of trainable tensors plus the backward driver."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def parameter(self, name: str, values) -> Tensor:
        if name in self._params:
            raise UsageError(f"parameter {name!r} already registered")
        t = Tensor(values, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def parameters(self) -> dict[str, Tensor]:
        return dict(self._params)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def backward(self, loss: Tensor) -> dict[str, np.ndarray]:
        """Run reverse mode; unused parameters get an explicit zero gradient."""
        loss.backward()
        grads = {}
        for name, p in self._params.items():
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
            grads[name] = p.grad
        return grads

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise UsageError(f"state mismatch: missing={sorted(missing)}, extra={sorted(extra)}")
        for name, values in state.items():
            arr = _as_array(values)
            if arr.shape != self._params[name].shape:
                raise ShapeError(
                    f"parameter {name!r}: stored shape {arr.shape} != model shape "
                    f"{self._params[name].shape}"
                )
            self._params[name].data = arr.copy()


@dataclass
class AdamState:
    """First/second moment accumulators, keyed like the tape."""

    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, in place. Missing grads count as zero."""
    if lr <= 0:
        raise ConfigError(f"lr must be positive, got {lr}")
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m += (1.0 - beta1) * (g - m)
        v += (1.0 - beta2) * (g * g - v)
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------------------
# finite differences (forward-only; the oracle for backward)


def numeric_gradients(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central-difference gradients of `loss_fn` w.r.t. every param element.

    `loss_fn` must rebuild its graph from the live param tensors on each
    call; parameter data is perturbed in place and restored.
    """
    grads = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        out = np.zeros_like(flat)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            hi = loss_fn().item()
            flat[i] = saved - h
            lo = loss_fn().item()
            flat[i] = saved
            out[i] = (hi - lo) / (2.0 * h)
        grads[name] = out.reshape(p.shape)
    return grads
