"""Minimal reverse-mode autodiff over numpy arrays.

A :class:`Tensor` wraps a float ndarray and, when gradients are enabled,
records its parents plus vector-Jacobian closures so a single
:meth:`Tensor.backward` call from a scalar loss fills ``.grad`` on every
reachable tensor that requires gradients.  Only the operations the
retouching networks need are implemented -- this is deliberately not a
general autodiff library.  Networks train in float32; the verification
suite runs the same ops in float64 for finite-difference comparisons.
"""

from __future__ import annotations

import contextlib

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "add",
    "sub",
    "mul",
    "matmul",
    "dense",
    "conv2d",
    "conv1d_valid",
    "leaky_relu",
    "softmax_columns",
    "log_softmax_columns",
    "log",
    "sqrt",
    "square",
    "clamp_min",
    "tsum",
    "tmean",
    "reshape",
    "gather_lk",
    "take_rows",
]

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (inference / reward scoring)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    """Array node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjps")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._vjps: tuple = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Reverse-mode sweep from a scalar; accumulates into ``.grad``.

        Each graph node is visited exactly once, in reverse topological
        order.  Gradients always have the same shape as the value they
        belong to.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar loss, got shape {self.data.shape}"
            )
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if not node._vjps or node.grad is None:
                continue
            g = node.grad
            for parent, vjp in zip(node._parents, node._vjps):
                if not parent.requires_grad:
                    continue
                contrib = vjp(g)
                if parent.grad is None:
                    parent.grad = contrib
                else:
                    parent.grad = parent.grad + contrib


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data, parents, vjps) -> Tensor:
    """Build an op result, recording the graph only when it matters."""
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjps = tuple(vjps)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(
        i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1
    )
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic ---------------------------------------------


def add(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", np.float32))
    b = _as_tensor(b, a.dtype)
    data = a.data + b.data
    return _make(
        data,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(g, b.data.shape),
        ),
    )


def sub(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", np.float32))
    b = _as_tensor(b, a.dtype)
    data = a.data - b.data
    return _make(
        data,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.data.shape),
            lambda g: _unbroadcast(-g, b.data.shape),
        ),
    )


def mul(a, b) -> Tensor:
    a = _as_tensor(a, getattr(b, "dtype", np.float32))
    b = _as_tensor(b, a.dtype)
    ad, bd = a.data, b.data
    data = ad * bd
    return _make(
        data,
        (a, b),
        (
            lambda g: _unbroadcast(g * bd, ad.shape),
            lambda g: _unbroadcast(g * ad, bd.shape),
        ),
    )


def square(x: Tensor) -> Tensor:
    xd = x.data
    return _make(xd * xd, (x,), (lambda g: g * (2.0 * xd),))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return _make(np.log(xd), (x,), (lambda g: g / xd,))


def sqrt(x: Tensor) -> Tensor:
    s = np.sqrt(x.data)
    return _make(s, (x,), (lambda g: g * (0.5 / s),))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    """max(x, floor); gradient passes only where x exceeds the floor."""
    xd = x.data
    mask = xd > floor
    return _make(
        np.maximum(xd, floor),
        (x,),
        (lambda g: g * mask,),
    )


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    xd = x.data
    factor = np.where(xd > 0, xd.dtype.type(1.0), xd.dtype.type(slope))
    return _make(xd * factor, (x,), (lambda g: g * factor,))


# -- reductions & shaping ------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    xd = x.data
    data = xd.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, xd.shape).copy()
        gk = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gk, xd.shape).copy()

    return _make(data, (x,), (vjp,))


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    xd = x.data
    n = xd.size if axis is None else np.prod(
        [xd.shape[a] for a in np.atleast_1d(axis)]
    )
    data = xd.mean(axis=axis, keepdims=keepdims)
    inv = 1.0 / float(n)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g * inv, xd.shape).copy()
        gk = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gk * inv, xd.shape).copy()

    return _make(data, (x,), (vjp,))


def reshape(x: Tensor, shape) -> Tensor:
    xd = x.data
    return _make(xd.reshape(shape), (x,), (lambda g: g.reshape(xd.shape),))


def take_rows(x: Tensor, sl: slice) -> Tensor:
    """Slice along the leading axis (used to split stacked score batches)."""
    xd = x.data
    data = xd[sl].copy()

    def vjp(g):
        z = np.zeros_like(xd)
        z[sl] = g
        return z

    return _make(data, (x,), (vjp,))


def gather_lk(q: Tensor, idx: np.ndarray) -> Tensor:
    """Pick per-column entries: out[n, k] = q[n, idx[n, k], k].

    ``idx`` is zero-based with shape (N, K) for a (N, L, K) tensor.
    """
    qd = q.data
    if qd.ndim != 3:
        raise ValueError(f"gather_lk expects (N, L, K), got {qd.shape}")
    n, _, k = qd.shape
    ni = np.arange(n)[:, None]
    ki = np.arange(k)[None, :]
    data = qd[ni, idx, ki]

    def vjp(g):
        z = np.zeros_like(qd)
        np.add.at(z, (ni, idx, ki), g)
        return z

    return _make(data, (q,), (vjp,))


# -- linear & convolution ------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    if ad.ndim != 2 or bd.ndim != 2 or ad.shape[1] != bd.shape[0]:
        raise ValueError(f"matmul shape mismatch: {ad.shape} @ {bd.shape}")
    data = ad @ bd
    return _make(
        data,
        (a, b),
        (lambda g: g @ bd.T, lambda g: ad.T @ g),
    )


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map on the last axis: x @ w + b, x shaped (N, fan_in)."""
    return add(matmul(x, w), b)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """Strided 2-D convolution, zero same-padding, NHWC layout.

    ``x`` is (N, H, W, C_in), ``w`` is (C_out, C_in, k, k) with odd k,
    ``b`` is (C_out,).  Output is (N, ceil(H/stride), ceil(W/stride), C_out).
    """
    xd, wd, bd = x.data, w.data, b.data
    if xd.ndim != 4 or wd.ndim != 4:
        raise ValueError(f"conv2d expects 4-d input/weight, got {xd.shape} / {wd.shape}")
    n, h, wi, cin = xd.shape
    cout, cin_w, kh, kw = wd.shape
    if cin != cin_w or kh != kw or kh % 2 == 0:
        raise ValueError(
            f"conv2d weight {wd.shape} incompatible with input {xd.shape} "
            "(need matching channels and odd square kernel)"
        )
    k = kh
    pad = k // 2
    s = int(stride)
    ho = (h + 2 * pad - k) // s + 1
    wo = (wi + 2 * pad - k) // s + 1

    xp = np.pad(xd, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    view = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    view = view[:, ::s, ::s]  # (N, Ho, Wo, Cin, k, k)
    cols = view.reshape(n * ho * wo, cin * k * k)
    wmat = wd.reshape(cout, cin * k * k)
    out = cols @ wmat.T
    out += bd
    out = out.reshape(n, ho, wo, cout)

    def vjp_w(g):
        gm = g.reshape(n * ho * wo, cout)
        return (gm.T @ cols).reshape(wd.shape)

    def vjp_b(g):
        return g.sum(axis=(0, 1, 2))

    def vjp_x(g):
        gm = g.reshape(n * ho * wo, cout)
        gcols = (gm @ wmat).reshape(n, ho, wo, cin, k, k)
        gx = np.zeros((n, h + 2 * pad, wi + 2 * pad, cin), dtype=xd.dtype)
        for i in range(k):
            for j in range(k):
                gx[:, i : i + s * ho : s, j : j + s * wo : s, :] += gcols[
                    :, :, :, :, i, j
                ]
        return gx[:, pad : pad + h, pad : pad + wi, :]

    return _make(out, (x, w, b), (vjp_x, vjp_w, vjp_b))


def conv1d_valid(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Unpadded 1-D convolution over the sequence axis, NLC layout.

    ``x`` is (N, L, C_in), ``w`` is (C_out, C_in, k), ``b`` is (C_out,).
    The output length shrinks to L - k + 1.
    """
    xd, wd, bd = x.data, w.data, b.data
    if xd.ndim != 3 or wd.ndim != 3 or xd.shape[2] != wd.shape[1]:
        raise ValueError(
            f"conv1d_valid weight {wd.shape} incompatible with input {xd.shape}"
        )
    n, lin, cin = xd.shape
    cout, _, k = wd.shape
    if lin < k:
        raise ValueError(f"conv1d_valid: length {lin} shorter than kernel {k}")
    lout = lin - k + 1

    view = np.lib.stride_tricks.sliding_window_view(xd, k, axis=1)
    # (N, Lout, Cin, k)
    cols = view.reshape(n * lout, cin * k)
    wmat = wd.reshape(cout, cin * k)
    out = cols @ wmat.T
    out += bd
    out = out.reshape(n, lout, cout)

    def vjp_w(g):
        gm = g.reshape(n * lout, cout)
        return (gm.T @ cols).reshape(wd.shape)

    def vjp_b(g):
        return g.sum(axis=(0, 1))

    def vjp_x(g):
        gm = g.reshape(n * lout, cout)
        gcols = (gm @ wmat).reshape(n, lout, cin, k)
        gx = np.zeros_like(xd)
        for j in range(k):
            gx[:, j : j + lout, :] += gcols[:, :, :, j]
        return gx

    return _make(out, (x, w, b), (vjp_x, vjp_w, vjp_b))


# -- softmax family -------------------------------------------------------


def softmax_columns(x: Tensor) -> Tensor:
    """Softmax along axis -2 (each column of an (..., L, K) stack)."""
    xd = x.data
    if xd.ndim < 2:
        raise ValueError(f"softmax_columns needs >=2 dims, got {xd.shape}")
    m = xd.max(axis=-2, keepdims=True)
    e = np.exp(xd - m)
    q = e / e.sum(axis=-2, keepdims=True)

    def vjp(g):
        return q * (g - (g * q).sum(axis=-2, keepdims=True))

    return _make(q, (x,), (vjp,))


def log_softmax_columns(x: Tensor) -> Tensor:
    """Numerically stable log-softmax along axis -2."""
    xd = x.data
    if xd.ndim < 2:
        raise ValueError(f"log_softmax_columns needs >=2 dims, got {xd.shape}")
    m = xd.max(axis=-2, keepdims=True)
    z = xd - m
    lse = np.log(np.exp(z).sum(axis=-2, keepdims=True))
    lq = z - lse
    q = np.exp(lq)

    def vjp(g):
        return g - q * g.sum(axis=-2, keepdims=True)

    return _make(lq, (x,), (vjp,))
