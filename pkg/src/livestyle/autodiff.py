"""Minimal reverse-mode autodiff over numpy arrays.

Graphs are built dynamically: each op returns a :class:`Var` holding the
forward value plus a closure that scatters the output gradient to its
parents. Only paths that lead to a ``requires_grad`` leaf are traversed,
so frozen models (e.g. the feature backbone during image optimization)
cost no extra backward work for their weights.

The conv/pool hot paths dispatch through :mod:`livestyle.kernels`; the
remaining ops are cheap vectorized numpy.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from . import kernels


class Var:
    """Node in the autodiff graph: a value, optional grad, and parents."""

    __slots__ = ("value", "grad", "requires_grad", "parents", "backward_fn")

    def __init__(
        self,
        value: np.ndarray,
        parents: tuple["Var", ...] = (),
        backward_fn: Callable[["Var"], None] | None = None,
        requires_grad: bool = False,
    ):
        self.value = np.asarray(value)
        self.grad: np.ndarray | None = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def detach(self) -> "Var":
        return Var(self.value)

    def __repr__(self) -> str:
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


def param(value: np.ndarray) -> Var:
    """Trainable leaf."""
    return Var(np.asarray(value), requires_grad=True)


def const(value: np.ndarray) -> Var:
    """Non-trainable leaf."""
    return Var(np.asarray(value))


def _accum(v: Var, g: np.ndarray) -> None:
    if not v.requires_grad:
        return
    if v.grad is None:
        v.grad = g.astype(v.value.dtype, copy=True)
    else:
        v.grad += g


def backward(root: Var) -> None:
    """Backpropagate from a scalar root through the reachable graph."""
    if root.value.size != 1:
        raise ValueError("backward() expects a scalar root")
    topo: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    root.grad = np.ones_like(root.value)
    for node in reversed(topo):
        if node.backward_fn is not None and node.grad is not None:
            node.backward_fn(node)


def zero_grads(params: Iterable[Var]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# convolution / pooling / resampling


def conv3x3(x: Var, w: Var, b: Var, stride: int = 1) -> Var:
    """3x3 conv, pad 1, stride 1 or 2. x: (Cin,H,W); w: (Cout,Cin,3,3); b: (Cout,)."""
    y = kernels.conv3x3_forward(x.value, w.value, b.value, stride)
    cin, h, wd = x.value.shape

    def bw(out: Var) -> None:
        gy = out.grad
        if x.requires_grad:
            _accum(x, kernels.conv3x3_input_grad(gy, w.value, stride, h, wd))
        if w.requires_grad or b.requires_grad:
            gw, gb = kernels.conv3x3_weight_grad(gy, x.value, stride)
            _accum(w, gw)
            _accum(b, gb)

    return Var(y, (x, w, b), bw)


def maxpool2x2(x: Var) -> Var:
    y, idx = kernels.maxpool2x2_forward(x.value)
    _, h, wd = x.value.shape

    def bw(out: Var) -> None:
        _accum(x, kernels.maxpool2x2_backward(out.grad, idx, h, wd))

    return Var(y, (x,), bw)


def upsample2x(x: Var) -> Var:
    """Nearest-neighbor 2x upsampling."""
    y = x.value.repeat(2, axis=1).repeat(2, axis=2)

    def bw(out: Var) -> None:
        c, h2, w2 = out.grad.shape
        _accum(x, out.grad.reshape(c, h2 // 2, 2, w2 // 2, 2).sum(axis=(2, 4)))

    return Var(y, (x,), bw)


def crop2d(x: Var, height: int, width: int) -> Var:
    """Keep the top-left height x width region."""
    c, h, w = x.value.shape
    if (h, w) == (height, width):
        return x
    y = x.value[:, :height, :width]

    def bw(out: Var) -> None:
        g = np.zeros_like(x.value)
        g[:, :height, :width] = out.grad
        _accum(x, g)

    return Var(np.ascontiguousarray(y), (x,), bw)


# ---------------------------------------------------------------------------
# activations and elementwise algebra


def relu(x: Var) -> Var:
    mask = x.value > 0

    def bw(out: Var) -> None:
        _accum(x, out.grad * mask)

    return Var(np.where(mask, x.value, 0.0), (x,), bw)


def leaky_relu(x: Var, slope: float = 0.2) -> Var:
    mask = x.value > 0

    def bw(out: Var) -> None:
        _accum(x, out.grad * np.where(mask, 1.0, slope))

    return Var(np.where(mask, x.value, slope * x.value), (x,), bw)


def tanh(x: Var) -> Var:
    y = np.tanh(x.value)

    def bw(out: Var) -> None:
        _accum(x, out.grad * (1.0 - y * y))

    return Var(y, (x,), bw)


def sigmoid(x: Var) -> Var:
    v = x.value
    y = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

    def bw(out: Var) -> None:
        _accum(x, out.grad * y * (1.0 - y))

    return Var(y, (x,), bw)


def add(a: Var, b: Var) -> Var:
    def bw(out: Var) -> None:
        _accum(a, out.grad)
        _accum(b, out.grad)

    return Var(a.value + b.value, (a, b), bw)


def sub(a: Var, b: Var) -> Var:
    def bw(out: Var) -> None:
        _accum(a, out.grad)
        _accum(b, -out.grad)

    return Var(a.value - b.value, (a, b), bw)


def scale(x: Var, c: float) -> Var:
    def bw(out: Var) -> None:
        _accum(x, out.grad * c)

    return Var(x.value * c, (x,), bw)


def shift(x: Var, c: float | np.ndarray) -> Var:
    """Add a constant (scalar or broadcastable array)."""
    c = np.asarray(c)

    def bw(out: Var) -> None:
        _accum(x, out.grad)

    return Var(x.value + c, (x,), bw)


def channel_affine(x: Var, scale_c: np.ndarray, shift_c: np.ndarray) -> Var:
    """Per-channel constant scale and shift for (C,H,W) maps."""
    s = np.asarray(scale_c).reshape(-1, 1, 1)
    t = np.asarray(shift_c).reshape(-1, 1, 1)

    def bw(out: Var) -> None:
        _accum(x, out.grad * s)

    return Var(x.value * s + t, (x,), bw)


# ---------------------------------------------------------------------------
# normalization, statistics, reductions


def instance_norm(x: Var, gamma: Var, beta: Var, eps: float = 1e-5) -> Var:
    """Per-channel spatial normalization, then scale by gamma / shift by beta.

    x: (C,H,W); gamma, beta: (C,). Gradients flow into x, gamma and beta,
    so conditional sites can backprop into a style-prediction head.
    """
    c, h, w = x.value.shape
    m = h * w
    mu = x.value.mean(axis=(1, 2), keepdims=True)
    centered = x.value - mu
    var = (centered * centered).mean(axis=(1, 2), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    y = gamma.value.reshape(-1, 1, 1) * xhat + beta.value.reshape(-1, 1, 1)

    def bw(out: Var) -> None:
        gy = out.grad
        if gamma.requires_grad:
            _accum(gamma, (gy * xhat).sum(axis=(1, 2)))
        if beta.requires_grad:
            _accum(beta, gy.sum(axis=(1, 2)))
        if x.requires_grad:
            dxhat = gy * gamma.value.reshape(-1, 1, 1)
            s1 = dxhat.sum(axis=(1, 2), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(1, 2), keepdims=True)
            _accum(x, inv_std * (dxhat - (s1 + xhat * s2) / m))

    return Var(y, (x, gamma, beta), bw)


def gram(x: Var) -> Var:
    """Unnormalized Gram matrix: F @ F.T over the flattened spatial axis."""
    c = x.value.shape[0]
    f = x.value.reshape(c, -1)
    g = f @ f.T

    def bw(out: Var) -> None:
        gf = (out.grad + out.grad.T) @ f
        _accum(x, gf.reshape(x.value.shape))

    return Var(g, (x,), bw)


def global_avg_pool(x: Var) -> Var:
    c, h, w = x.value.shape
    m = h * w

    def bw(out: Var) -> None:
        _accum(x, np.broadcast_to(out.grad.reshape(c, 1, 1) / m, x.value.shape).copy())

    return Var(x.value.mean(axis=(1, 2)), (x,), bw)


def affine(v: Var, w: Var, b: Var) -> Var:
    """Fully connected layer: w @ v + b for a 1-D vector v."""
    y = w.value @ v.value + b.value

    def bw(out: Var) -> None:
        gy = out.grad
        if v.requires_grad:
            _accum(v, w.value.T @ gy)
        if w.requires_grad:
            _accum(w, np.outer(gy, v.value))
        if b.requires_grad:
            _accum(b, gy)

    return Var(y, (v, w, b), bw)


def vslice(v: Var, start: int, stop: int) -> Var:
    def bw(out: Var) -> None:
        g = np.zeros_like(v.value)
        g[start:stop] = out.grad
        _accum(v, g)

    return Var(v.value[start:stop].copy(), (v,), bw)


def sum_sq(x: Var) -> Var:
    def bw(out: Var) -> None:
        _accum(x, (2.0 * float(out.grad)) * x.value)

    return Var(np.asarray((x.value * x.value).sum()), (x,), bw)


def mean_abs_diff(a: Var, b: Var) -> Var:
    """Mean absolute elementwise difference (L1)."""
    d = a.value - b.value
    n = d.size

    def bw(out: Var) -> None:
        g = (float(out.grad) / n) * np.sign(d)
        _accum(a, g)
        _accum(b, -g)

    return Var(np.asarray(np.abs(d).mean()), (a, b), bw)


def mean_sq_const(x: Var, target: float) -> Var:
    """Mean squared difference from a constant target."""
    d = x.value - target
    n = d.size

    def bw(out: Var) -> None:
        _accum(x, (2.0 * float(out.grad) / n) * d)

    return Var(np.asarray((d * d).mean()), (x,), bw)


def weighted_sum(terms: list[tuple[float, Var]]) -> Var:
    """Scalar combination sum_i c_i * t_i."""
    value = np.asarray(sum(c * float(t.value) for c, t in terms))

    def bw(out: Var) -> None:
        for c, t in terms:
            _accum(t, np.asarray(c * float(out.grad)))

    return Var(value, tuple(t for _, t in terms), bw)


# ---------------------------------------------------------------------------
# optimizer


class Momentum:
    """Gradient descent with classical momentum (deterministic)."""

    def __init__(self, params: list[Var], lr: float, momentum: float = 0.9):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        for p, v in zip(self.params, self._velocity):
            if p.grad is None:
                continue
            v *= self.momentum
            v -= self.lr * p.grad
            p.value += v

    def zero_grad(self) -> None:
        zero_grads(self.params)


class Adam:
    """Adam optimizer; scale-robust for losses whose terms differ by
    orders of magnitude. Deterministic."""

    def __init__(
        self,
        params: list[Var],
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = [np.zeros_like(p.value) for p in self.params]
        self._v = [np.zeros_like(p.value) for p in self.params]
        self._t = 0

    def step(self) -> None:
        self._t += 1
        b1c = 1.0 - self.beta1**self._t
        b2c = 1.0 - self.beta2**self._t
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                continue
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (p.grad * p.grad)
            p.value -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def zero_grad(self) -> None:
        zero_grads(self.params)
