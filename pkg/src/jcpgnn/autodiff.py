"""Dense reverse-mode automatic differentiation over float64 numpy arrays.

Covers exactly what the allocation model needs: affine layers with
ReLU/sigmoid/softmax, concatenation, row gather, index-based segment sums,
and the elementwise arithmetic of the rate objective. Ops take the tape as
first argument; with ``tape=None`` (or when no input requires grad) they
compute without recording, which is the inference fast path.

Gradients accumulate on ``Tensor.grad``. ``backward`` walks the tape's
nodes in exact reverse execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class Tensor:
    __slots__ = ("values", "requires_grad", "grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


class Tape:
    """Recorded (output, vjp) nodes in execution order."""

    def __init__(self):
        self.nodes = []

    def record(self, out: Tensor, vjp) -> None:
        self.nodes.append((out, vjp))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def _track(tape, *tensors) -> bool:
    return tape is not None and any(t.requires_grad for t in tensors)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum g down to `shape`, inverting numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(k for k, n in enumerate(shape) if n == 1 and g.shape[k] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(tape, a: Tensor, b: Tensor) -> Tensor:
    out_vals = a.values + b.values
    if not _track(tape, a, b):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)
    ash, bsh = a.values.shape, b.values.shape

    def vjp(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, ash))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, bsh))

    tape.record(out, vjp)
    return out


def sub(tape, a: Tensor, b: Tensor) -> Tensor:
    out_vals = a.values - b.values
    if not _track(tape, a, b):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)
    ash, bsh = a.values.shape, b.values.shape

    def vjp(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, ash))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, bsh))

    tape.record(out, vjp)
    return out


def mul(tape, a: Tensor, b: Tensor) -> Tensor:
    out_vals = a.values * b.values
    if not _track(tape, a, b):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)
    av, bv = a.values, b.values

    def vjp(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * bv, av.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * av, bv.shape))

    tape.record(out, vjp)
    return out


def div(tape, a: Tensor, b: Tensor) -> Tensor:
    out_vals = a.values / b.values
    if not _track(tape, a, b):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)
    av, bv = a.values, b.values

    def vjp(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / bv, av.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * av / (bv * bv), bv.shape))

    tape.record(out, vjp)
    return out


def scale(tape, x: Tensor, c: float) -> Tensor:
    out_vals = x.values * c
    if not _track(tape, x):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)

    def vjp(g):
        _accum(x, g * c)

    tape.record(out, vjp)
    return out


def matmul(tape, a: Tensor, b: Tensor) -> Tensor:
    out_vals = a.values @ b.values
    if not _track(tape, a, b):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)
    av, bv = a.values, b.values

    def vjp(g):
        if a.requires_grad:
            _accum(a, g @ bv.T)
        if b.requires_grad:
            _accum(b, av.T @ g)

    tape.record(out, vjp)
    return out


def relu(tape, x: Tensor) -> Tensor:
    out_vals = np.maximum(x.values, 0.0)
    if not _track(tape, x):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)
    mask = x.values > 0

    def vjp(g):
        _accum(x, g * mask)

    tape.record(out, vjp)
    return out


def sigmoid(tape, x: Tensor) -> Tensor:
    v = x.values
    out_vals = np.empty_like(v)
    pos = v >= 0
    out_vals[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out_vals[~pos] = ev / (1.0 + ev)
    if not _track(tape, x):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)
    y = out_vals

    def vjp(g):
        _accum(x, g * y * (1.0 - y))

    tape.record(out, vjp)
    return out


def softmax(tape, x: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor, stabilized by max subtraction."""
    if x.values.ndim != 2:
        raise ValueError(f"softmax expects a 2-D tensor, got shape {x.values.shape}")
    z = x.values - x.values.max(axis=1, keepdims=True)
    e = np.exp(z)
    out_vals = e / e.sum(axis=1, keepdims=True)
    if not _track(tape, x):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)
    y = out_vals

    def vjp(g):
        _accum(x, y * (g - (g * y).sum(axis=1, keepdims=True)))

    tape.record(out, vjp)
    return out


def log(tape, x: Tensor) -> Tensor:
    """Natural log; the caller guarantees positive inputs."""
    out_vals = np.log(x.values)
    if not _track(tape, x):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)
    xv = x.values

    def vjp(g):
        _accum(x, g / xv)

    tape.record(out, vjp)
    return out


def concat(tape, tensors, axis: int = 1) -> Tensor:
    out_vals = np.concatenate([t.values for t in tensors], axis=axis)
    if tape is None or not any(t.requires_grad for t in tensors):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)
    sizes = [t.values.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accum(t, g[tuple(idx)])

    tape.record(out, vjp)
    return out


def slice_cols(tape, x: Tensor, start: int, stop: int) -> Tensor:
    out_vals = x.values[:, start:stop]
    if not _track(tape, x):
        return Tensor(out_vals.copy())
    out = Tensor(out_vals.copy(), requires_grad=True)

    def vjp(g):
        buf = np.zeros_like(x.values)
        buf[:, start:stop] = g
        _accum(x, buf)

    tape.record(out, vjp)
    return out


def gather_rows(tape, x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    out_vals = x.values[idx]
    if not _track(tape, x):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)

    def vjp(g):
        buf = np.zeros_like(x.values)
        np.add.at(buf, idx, g)
        _accum(x, buf)

    tape.record(out, vjp)
    return out


def segment_sum(tape, x: Tensor, idx: np.ndarray, n_segments: int) -> Tensor:
    """Row k of the output is the sum of x's rows with idx == k.

    Empty segments are zero rows. Accumulation follows the order of `idx`,
    so results are deterministic for a fixed row ordering. Sorted index
    lists take a vectorized reduceat path (np.add.at is unbuffered and an
    order of magnitude slower on large edge sets).
    """
    idx = np.asarray(idx, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= n_segments):
        raise ValueError(f"segment index out of range [0, {n_segments})")
    out_vals = np.zeros((n_segments, x.values.shape[1]))
    if idx.size:
        if np.all(idx[1:] >= idx[:-1]):
            present, starts = np.unique(idx, return_index=True)
            out_vals[present] = np.add.reduceat(x.values, starts, axis=0)
        else:
            np.add.at(out_vals, idx, x.values)
    if not _track(tape, x):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)

    def vjp(g):
        _accum(x, g[idx])

    tape.record(out, vjp)
    return out


def reshape(tape, x: Tensor, shape) -> Tensor:
    out_vals = x.values.reshape(shape)
    if not _track(tape, x):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)

    def vjp(g):
        _accum(x, g.reshape(x.values.shape))

    tape.record(out, vjp)
    return out


def sum_all(tape, x: Tensor) -> Tensor:
    out_vals = np.asarray(x.values.sum())
    if not _track(tape, x):
        return Tensor(out_vals)
    out = Tensor(out_vals, requires_grad=True)

    def vjp(g):
        _accum(x, np.broadcast_to(g, x.values.shape).copy())

    tape.record(out, vjp)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate .grad on every tensor the scalar loss depends on."""
    if loss.values.ndim != 0 and loss.values.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.values.shape}")
    loss.grad = np.ones_like(loss.values)
    for out, vjp in reversed(tape.nodes):
        if out.grad is not None:
            vjp(out.grad)


def zero_grads(tensors) -> None:
    for t in tensors:
        t.zero_grad()


# ---------------------------------------------------------------------------
# MLPs


@dataclass
class MlpParams:
    """Affine layers with ReLU between them and a configurable output head."""

    weights: list  # Tensor (in, out) per layer
    biases: list   # Tensor (out,) per layer
    out_activation: str = "identity"  # identity | softmax | sigmoid

    def tensors(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out


def mlp_init(layer_sizes, out_activation: str, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights U(+-sqrt(6/(fan_in+fan_out))), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True))
        biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
    return MlpParams(weights=weights, biases=biases, out_activation=out_activation)


def mlp_forward(tape, params: MlpParams, x: Tensor) -> Tensor:
    expected = params.weights[0].values.shape[0]
    if x.values.ndim != 2 or x.values.shape[1] != expected:
        raise ValueError(f"mlp input width {x.values.shape}, expected (batch, {expected})")
    h = x
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = add(tape, matmul(tape, h, w), b)
        if k < last:
            h = relu(tape, h)
    if params.out_activation == "identity":
        return h
    if params.out_activation == "softmax":
        return softmax(tape, h)
    if params.out_activation == "sigmoid":
        return sigmoid(tape, h)
    raise ValueError(f"unknown output activation {params.out_activation!r}")


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_init(tensors) -> AdamState:
    return AdamState(
        step=0,
        m=[np.zeros_like(t.values) for t in tensors],
        v=[np.zeros_like(t.values) for t in tensors],
    )


def adam_step(tensors, state: AdamState, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Standard Adam with bias correction, updating tensor values in place."""
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for k, p in enumerate(tensors):
        g = p.grad if p.grad is not None else np.zeros_like(p.values)
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        m_hat = state.m[k] / c1
        v_hat = state.v[k] / c2
        p.values -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Gradient checking


def numerical_gradients(f, tensors, h: float = 1e-5):
    """Central finite differences of the scalar f() w.r.t. each tensor.

    f must rebuild its computation from the tensors' current values on
    every call, so perturbations propagate."""
    grads = []
    for t in tensors:
        g = np.zeros_like(t.values)
        flat = t.values.ravel()
        gflat = g.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = f()
            flat[k] = orig - h
            down = f()
            flat[k] = orig
            gflat[k] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads
