"""Reference kernels for every primitive the fusion graphs use.

These are the plain, obviously-correct definitions (forward and backward)
that every other execution path is checked against. Accumulation order is
pinned - bias first, then ascending input channel / kernel position - so
alternative schedules can be compared bit for bit.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DepthwiseKernel",
    "PointwiseKernel",
    "depthwise_forward",
    "pointwise_forward",
    "upsample_nn",
    "relu",
    "tanh",
    "add",
    "depthwise_backward",
    "pointwise_backward",
    "upsample_backward",
    "relu_backward",
    "tanh_backward",
    "add_backward",
    "grad_check",
]


@dataclass(frozen=True)
class DepthwiseKernel:
    """Per-channel spatial convolution: (k, k, channels) weights, optional bias."""

    weights: np.ndarray
    bias: np.ndarray | None = None
    stride: int = 1

    def __post_init__(self):
        w = self.weights
        if w.ndim != 3 or w.shape[0] != w.shape[1]:
            raise ValueError("depthwise weights must have shape (k, k, channels)")
        if w.shape[0] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {w.shape[0]}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if self.bias is not None and self.bias.shape != (w.shape[2],):
            raise ValueError("bias length must equal the channel count")

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def channels(self) -> int:
        return self.weights.shape[2]


@dataclass(frozen=True)
class PointwiseKernel:
    """1x1 convolution mixing channels per pixel: (in, out) weights plus bias."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ValueError("pointwise weights must have shape (in_channels, out_channels)")
        if self.bias.shape != (self.weights.shape[1],):
            raise ValueError("bias length must equal out_channels")

    @property
    def in_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[1]


def _accumulate_pointwise(x2, weights, bias):
    # Fixed order: start from bias, add input-channel terms ascending.
    dtype = np.result_type(x2.dtype, weights.dtype)
    out = np.empty((x2.shape[0], weights.shape[1]), dtype=dtype)
    out[:] = bias
    for m in range(weights.shape[0]):
        out += x2[:, m, np.newaxis] * weights[m]
    return out


def pointwise_forward(x: np.ndarray, kern: PointwiseKernel) -> np.ndarray:
    """out[..., n] = bias[n] + sum_m w[m, n] * x[..., m], any leading dims."""
    if x.shape[-1] != kern.in_channels:
        raise ValueError(
            f"channel mismatch: input has {x.shape[-1]}, kernel expects {kern.in_channels}"
        )
    lead = x.shape[:-1]
    out2 = _accumulate_pointwise(x.reshape(-1, kern.in_channels), kern.weights, kern.bias)
    return out2.reshape(lead + (kern.out_channels,))


def depthwise_forward(x: np.ndarray, kern: DepthwiseKernel) -> np.ndarray:
    """Per-channel conv with zero 'same' padding; stride 2 halves even dims.

    Output (i, j) reads the padded window centered at (stride*i, stride*j).
    """
    if x.ndim != 3:
        raise ValueError("depthwise input must be (H, W, C)")
    if x.shape[2] != kern.channels:
        raise ValueError(
            f"channel mismatch: input has {x.shape[2]}, kernel expects {kern.channels}"
        )
    h, w = x.shape[:2]
    s = kern.stride
    if s == 2 and (h % 2 or w % 2):
        raise ValueError("stride-2 depthwise requires even input dimensions")
    k = kern.k
    p = (k - 1) // 2
    oh, ow = h // s, w // s
    xp = np.pad(x, ((p, p), (p, p), (0, 0)))
    out = np.empty((oh, ow, kern.channels), dtype=np.result_type(x.dtype, kern.weights.dtype))
    out[:] = kern.bias if kern.bias is not None else 0.0
    for u in range(k):
        for v in range(k):
            out += kern.weights[u, v] * xp[u : u + s * oh : s, v : v + s * ow : s]
    return out


def upsample_nn(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor x2 upsampling: out[i, j] = x[i // 2, j // 2]."""
    return np.repeat(np.repeat(x, 2, axis=0), 2, axis=1)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def pointwise_backward(x, kern: PointwiseKernel, grad):
    """Gradients of pointwise_forward: returns (dx, dweights, dbias)."""
    if grad.shape != x.shape[:-1] + (kern.out_channels,):
        raise ValueError("upstream gradient shape mismatch")
    x2 = x.reshape(-1, kern.in_channels)
    g2 = grad.reshape(-1, kern.out_channels)
    dw = x2.T @ g2
    db = g2.sum(axis=0)
    dx = (g2 @ kern.weights.T).reshape(x.shape)
    return dx, dw, db


def depthwise_backward(x, kern: DepthwiseKernel, grad):
    """Gradients of depthwise_forward: returns (dx, dweights, dbias).

    dbias is None for bias-free kernels.
    """
    h, w = x.shape[:2]
    s = kern.stride
    k = kern.k
    p = (k - 1) // 2
    oh, ow = h // s, w // s
    if grad.shape != (oh, ow, kern.channels):
        raise ValueError("upstream gradient shape mismatch")
    xp = np.pad(x, ((p, p), (p, p), (0, 0)))
    dxp = np.zeros_like(xp)
    dw = np.empty_like(kern.weights)
    for u in range(k):
        for v in range(k):
            window = xp[u : u + s * oh : s, v : v + s * ow : s]
            dw[u, v] = (window * grad).sum(axis=(0, 1))
            dxp[u : u + s * oh : s, v : v + s * ow : s] += kern.weights[u, v] * grad
    dx = dxp[p : p + h, p : p + w].copy()
    db = grad.sum(axis=(0, 1)) if kern.bias is not None else None
    return dx, dw, db


def upsample_backward(grad):
    """Block-sum the upstream gradient back onto the 2x-smaller input grid."""
    h2, w2, c = grad.shape
    if h2 % 2 or w2 % 2:
        raise ValueError("upsample gradient must have even spatial dims")
    return grad.reshape(h2 // 2, 2, w2 // 2, 2, c).sum(axis=(1, 3))


def relu_backward(x, grad):
    return grad * (x > 0)


def tanh_backward(x, grad):
    t = np.tanh(x)
    return grad * (1.0 - t * t)


def add_backward(grad):
    return grad, grad


def _op_closure(op):
    """Forward/backward closures plus the parameter tuple for grad_check."""
    if isinstance(op, DepthwiseKernel):
        params = (op.weights,) if op.bias is None else (op.weights, op.bias)

        def fwd(x, w, b=None):
            return depthwise_forward(x, DepthwiseKernel(w, b, op.stride))

        def bwd(x, g):
            dx, dw, db = depthwise_backward(x, op, g)
            return dx, (dw,) if op.bias is None else (dw, db)

        return fwd, params, bwd
    if isinstance(op, PointwiseKernel):
        def fwd(x, w, b):
            return pointwise_forward(x, PointwiseKernel(w, b))

        def bwd(x, g):
            dx, dw, db = pointwise_backward(x, op, g)
            return dx, (dw, db)

        return fwd, (op.weights, op.bias), bwd
    if op == "relu":
        return (lambda x: relu(x)), (), (lambda x, g: (relu_backward(x, g), ()))
    if op == "tanh":
        return (lambda x: tanh(x)), (), (lambda x, g: (tanh_backward(x, g), ()))
    if op == "upsample_nn":
        return (lambda x: upsample_nn(x)), (), (lambda x, g: (upsample_backward(g), ()))
    if isinstance(op, tuple) and len(op) == 2 and op[0] == "add":
        other = op[1]
        return (
            (lambda x: add(x, other.astype(x.dtype))),
            (),
            (lambda x, g: (add_backward(g)[0], ())),
        )
    raise ValueError(f"grad_check does not know op {op!r}")


def grad_check(op, x: np.ndarray, seed: int = 0, eps: float = 1e-3) -> float:
    """Max relative error between analytic and central-difference gradients.

    The analytic side runs at the kernel's native float32. The numeric side
    re-evaluates the op in float64 so the oracle's own rounding noise stays
    far below the tolerances being checked. Relative error is
    |a - n| / max(|a|, |n|, 1e-8) over every input and parameter element.
    """
    fwd, params, bwd = _op_closure(op)
    out = fwd(x, *params)
    rng = np.random.default_rng(seed)
    upstream = rng.standard_normal(out.shape).astype(np.float32)
    dx, dparams = bwd(x, upstream)

    arrays = [x.astype(np.float64)] + [p.astype(np.float64) for p in params]
    grads = [dx] + list(dparams)
    r64 = upstream.astype(np.float64)

    def objective():
        return float(np.sum(fwd(arrays[0], *arrays[1:]) * r64))

    max_rel = 0.0
    for arr, grad in zip(arrays, grads):
        flat = arr.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            jp = objective()
            flat[i] = orig - eps
            jm = objective()
            flat[i] = orig
            numeric = (jp - jm) / (2.0 * eps)
            analytic = float(gflat[i])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            max_rel = max(max_rel, rel)
    return max_rel
