"""Dense-tensor compute core with reverse-mode automatic differentiation.

Arrays are float32 by default; reductions accumulate in float64 and cast
back. Every op builds a dynamic tape node; calling ``backward()`` on a
scalar walks the tape in reverse topological order and accumulates
gradients into every reachable tensor with ``requires_grad``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIGMA_FLOOR = 1e-5  # floor for standard deviations used as denominators


def _as_array(data, dtype=None):
    a = np.asarray(data)
    if dtype is not None:
        return a.astype(dtype, copy=False)
    if a.dtype in (np.float32, np.float64):
        return a
    return a.astype(np.float32)


class Tensor:
    """N-dimensional array plus optional gradient buffer."""

    def __init__(self, data, requires_grad=False, dtype=None, _prev=(), _backward=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._prev = _prev
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g.astype(self.data.dtype, copy=False)

    def backward(self):
        """Reverse-mode sweep from this (scalar) tensor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))
        out = _node(self.data + other.data, (self, other))
        if out.requires_grad:
            def back(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g, self.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(g, other.shape))
            out._backward = back
        return out

    __radd__ = __add__

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))
        out = _node(self.data * other.data, (self, other))
        if out.requires_grad:
            def back(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g * other.data, self.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(g * self.data, other.shape))
            out._backward = back
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.dtype))
        out = _node(self.data / other.data, (self, other))
        if out.requires_grad:
            def back(g):
                if self.requires_grad:
                    self._accum(_unbroadcast(g / other.data, self.shape))
                if other.requires_grad:
                    other._accum(_unbroadcast(-g * self.data / (other.data * other.data), other.shape))
            out._backward = back
        return out

    def __pow__(self, p):
        out = _node(self.data ** p, (self,))
        if out.requires_grad:
            def back(g):
                self._accum(g * p * self.data ** (p - 1))
            out._backward = back
        return out

    def sqrt(self):
        out = _node(np.sqrt(self.data), (self,))
        if out.requires_grad:
            def back(g):
                self._accum(g * 0.5 / np.maximum(out.data, 1e-12))
            out._backward = back
        return out

    def relu(self):
        out = _node(np.maximum(self.data, 0), (self,))
        if out.requires_grad:
            mask = self.data > 0
            def back(g):
                self._accum(g * mask)
            out._backward = back
        return out

    def sigmoid(self):
        out = _node(1.0 / (1.0 + np.exp(-self.data)), (self,))
        if out.requires_grad:
            def back(g):
                self._accum(g * out.data * (1.0 - out.data))
            out._backward = back
        return out

    def clip_min(self, lo):
        out = _node(np.maximum(self.data, lo), (self,))
        if out.requires_grad:
            mask = self.data >= lo
            def back(g):
                self._accum(g * mask)
            out._backward = back
        return out

    def clip01(self):
        out = _node(np.clip(self.data, 0.0, 1.0), (self,))
        if out.requires_grad:
            mask = (self.data > 0.0) & (self.data < 1.0)
            def back(g):
                self._accum(g * mask)
            out._backward = back
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _node(self.data.reshape(shape), (self,))
        if out.requires_grad:
            src = self.shape
            def back(g):
                self._accum(g.reshape(src))
            out._backward = back
        return out

    def sum(self, axes=None, keepdims=False):
        out = _node(np.sum(self.data, axis=axes, keepdims=keepdims, dtype=np.float64).astype(self.dtype), (self,))
        if out.requires_grad:
            src = self.shape
            def back(g):
                if axes is not None and not keepdims:
                    g = np.expand_dims(g, axes)
                self._accum(np.broadcast_to(g, src))
            out._backward = back
        return out

    def mean(self, axes=None, keepdims=False):
        if axes is None:
            n = self.data.size
        else:
            ax = axes if isinstance(axes, tuple) else (axes,)
            n = int(np.prod([self.shape[a] for a in ax]))
        return self.sum(axes, keepdims) * (1.0 / n)

    def softmax(self, axis=1):
        z = self.data - np.max(self.data, axis=axis, keepdims=True)
        e = np.exp(z)
        p = e / np.sum(e, axis=axis, keepdims=True)
        out = _node(p, (self,))
        if out.requires_grad:
            def back(g):
                dot = np.sum(g * p, axis=axis, keepdims=True)
                self._accum(p * (g - dot))
            out._backward = back
        return out


def _node(data, prev):
    rg = any(p.requires_grad for p in prev)
    return Tensor(data, requires_grad=rg, _prev=tuple(p for p in prev if p.requires_grad) if rg else ())


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- spatial ops ------------------------------------------------------------

def conv2d(x: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of NCHW input with a (K,C,kh,kw) kernel."""
    n, c, h, w = x.shape
    k, ck, kh, kw = kernel.shape
    if ck != c:
        raise ValueError(f"kernel expects {ck} input channels, input has {c}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise ValueError("kernel larger than padded input")
    xp = x.data
    if padding:
        xp = np.pad(xp, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (hp - kh) // stride + 1
    ow = (wp - kw) // stride + 1
    # im2col: (N, OH, OW, C*kh*kw) then one GEMM against the flattened kernel
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]                       # (N,C,OH,OW,kh,kw)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * kh * kw)
    wmat = kernel.data.reshape(k, c * kh * kw)
    out_data = (cols @ wmat.T).reshape(n, oh, ow, k).transpose(0, 3, 1, 2)
    out = _node(np.ascontiguousarray(out_data), (x, kernel))
    if out.requires_grad:
        def back(g):
            gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * oh * ow, k)
            if kernel.requires_grad:
                kernel._accum((gmat.T @ cols).reshape(kernel.shape))
            if x.requires_grad:
                dcols = (gmat @ wmat).reshape(n, oh, ow, c, kh, kw)
                dxp = np.zeros((n, c, hp, wp), dtype=g.dtype)
                for i in range(kh):
                    for j in range(kw):
                        dxp[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += \
                            dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                if padding:
                    dxp = dxp[:, :, padding:hp - padding, padding:wp - padding]
                x._accum(dxp)
        out._backward = back
    return out


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbor 2x upsampling of an NCHW tensor."""
    out = _node(np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3), (x,))
    if out.requires_grad:
        n, c, h, w = x.shape
        def back(g):
            x._accum(g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))
        out._backward = back
    return out


def avgpool2x(x: Tensor) -> Tensor:
    """2x2 average pooling, the encoder downsampling step."""
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError("avgpool2x needs even spatial dims")
    out = _node(x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5)), (x,))
    if out.requires_grad:
        def back(g):
            g4 = np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25
            x._accum(g4)
        out._backward = back
    return out


def instance_stats(x: Tensor) -> tuple[Tensor, Tensor]:
    """Per-(instance, channel) spatial mean and population std of NCHW features."""
    if x.ndim != 4:
        raise ValueError("instance_stats expects an NCHW tensor")
    n, c, h, w = x.shape
    mu = x.mean(axes=(2, 3))
    centered = x - mu.reshape(n, c, 1, 1)
    var = (centered * centered).mean(axes=(2, 3))
    sigma = var.sqrt()
    return mu, sigma


# -- losses -----------------------------------------------------------------

def softmax_ce_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of NKHW logits against integer NHW labels."""
    n, k, h, w = logits.shape
    labels = np.asarray(labels).astype(np.int64, copy=False)
    if labels.shape != (n, h, w):
        raise ValueError(f"labels shape {labels.shape} incompatible with logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise IndexError("label out of range")
    z = logits.data - np.max(logits.data, axis=1, keepdims=True)
    e = np.exp(z)
    p = e / np.sum(e, axis=1, keepdims=True)
    ni, hi, wi = np.ogrid[:n, :h, :w]
    logp = z - np.log(np.sum(e, axis=1, keepdims=True))
    loss = -np.sum(logp[ni, labels, hi, wi], dtype=np.float64) / (n * h * w)
    out = _node(np.asarray(loss, dtype=logits.dtype), (logits,))
    if out.requires_grad:
        def back(g):
            d = p.copy()
            d[ni, labels, hi, wi] -= 1.0
            logits._accum(d * (g / (n * h * w)))
        out._backward = back
    return out


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference of two equally shaped tensors."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return (d * d).mean()


def soft_dice_loss(logits: Tensor, labels: np.ndarray, eps: float = 1e-6) -> Tensor:
    """One minus the mean soft dice coefficient over all classes."""
    n, k, h, w = logits.shape
    labels = np.asarray(labels).astype(np.int64, copy=False)
    if labels.min() < 0 or labels.max() >= k:
        raise IndexError("label out of range")
    onehot = np.zeros((n, k, h, w), dtype=logits.dtype)
    ni, hi, wi = np.ogrid[:n, :h, :w]
    onehot[ni, labels, hi, wi] = 1.0
    p = logits.softmax(axis=1)
    y = Tensor(onehot)
    inter = (p * y).sum(axes=(0, 2, 3))
    union = p.sum(axes=(0, 2, 3)) + Tensor(onehot.sum(axis=(0, 2, 3)))
    dice = (inter * 2.0 + eps) / (union + eps)
    return 1.0 - dice.mean()


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment buffers and step counter for a parameter list."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, **kw):
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params], **kw)


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update, mutating params and state in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/state length mismatch")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match param {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
