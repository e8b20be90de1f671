"""Differentiable operations on :class:`Tensor`.

Every op checks shapes, computes its forward value with numpy, and registers
a closure computing input gradients from the output gradient.  There is no
implicit broadcasting; the few broadcasts the networks need (bias add, mask
across channels) are spelled out as dedicated ops.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .. import _kernels
from ..errors import LabelError, ShapeError
from .tensor import Tensor, make_output


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _need(t):
    return t.track


# elementwise --------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return make_output("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return make_output("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    ad, bd = a.data, b.data
    return make_output("mul", (a, b), ad * bd, lambda g: (g * bd, g * ad))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_output("scale", (a,), a.data * c, lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return make_output("add_scalar", (a,), a.data + c, lambda g: (g,))


def one_minus(a: Tensor) -> Tensor:
    return make_output("one_minus", (a,), 1.0 - a.data, lambda g: (-g,))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return make_output("relu", (a,), np.where(pos, a.data, 0.0), lambda g: (g * pos,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # Split by sign so exp never overflows.
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return make_output("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))


# reductions and reshapes --------------------------------------------------


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = a.shape
    return make_output("sum", (a,), np.array(a.data.sum()), lambda g: (np.full(shape, float(g)),))


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.size
    return make_output("mean", (a,), np.array(a.data.mean()), lambda g: (np.full(shape, float(g) / n),))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}")
    old = a.shape
    return make_output("reshape", (a,), a.data.reshape(shape), lambda g: (g.reshape(old),))


def concat(tensors, axis: int = 1) -> Tensor:
    """Concatenate along ``axis`` (the channel axis by default)."""
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat: no inputs")
    ref = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(ref) or other[:axis] + other[axis + 1:] != ref[:axis] + ref[axis + 1:]:
            raise ShapeError(f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}")
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_output("concat", tensors, np.concatenate([t.data for t in tensors], axis=axis), back)


def global_avg_pool(x: Tensor) -> Tensor:
    """``[N, C, H, W] -> [N, C]`` spatial mean."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool: expected 4-d input, got {x.shape}")
    n, c, h, w = x.shape

    def back(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), (n, c, h, w)).copy(),)

    return make_output("global_avg_pool", (x,), x.data.mean(axis=(2, 3)), back)


def mask_channels(images: Tensor, mask: Tensor) -> Tensor:
    """Multiply ``[N, C, H, W]`` images by a ``[N, H, W]`` mask shared by all channels."""
    if images.ndim != 4 or mask.ndim != 3 or images.shape[:1] + images.shape[2:] != mask.shape:
        raise ShapeError(f"mask_channels: images {images.shape} vs mask {mask.shape}")
    x, m = images.data, mask.data

    def back(g):
        gx = g * m[:, None] if _need(images) else None
        gm = (g * x).sum(axis=1) if _need(mask) else None
        return gx, gm

    return make_output("mask_channels", (images, mask), x * m[:, None], back)


# layers -------------------------------------------------------------------


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Fully connected layer; ``weight`` is ``[out, in]``."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1] or bias.shape != (weight.shape[0],):
        raise ShapeError(f"dense: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    xd, wd = x.data, weight.data

    def back(g):
        return (
            g @ wd if _need(x) else None,
            g.T @ xd if _need(weight) else None,
            g.sum(axis=0) if _need(bias) else None,
        )

    return make_output("dense", (x, weight, bias), xd @ wd.T + bias.data, back)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-d cross-correlation with zero padding, ``[N,C,H,W] * [F,C,kh,kw]``."""
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1] or bias.shape != (kernel.shape[0],):
        raise ShapeError(f"conv2d: input {x.shape}, kernel {kernel.shape}, bias {bias.shape}")
    if stride < 1:
        raise ShapeError(f"conv2d: stride must be >= 1, got {stride}")
    n, c, h, w = x.shape
    f, _, kh, kw = kernel.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: kernel {kernel.shape} larger than padded input {(hp, wp)}")
    xpad = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    cols = _kernels.im2col(xpad, kh, kw, stride)
    ho, wo = cols.shape[1], cols.shape[2]
    cols2 = cols.reshape(n * ho * wo, c * kh * kw)
    k2 = kernel.data.reshape(f, c * kh * kw)
    out = (cols2 @ k2.T + bias.data).reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, f)
        gx = gk = gb = None
        if _need(x):
            dcols = (g2 @ k2).reshape(n, ho, wo, c, kh, kw)
            gpad = _kernels.col2im(dcols, hp, wp, stride)
            gx = gpad[:, :, pad:pad + h, pad:pad + w] if pad else gpad
        if _need(kernel):
            gk = (g2.T @ cols2).reshape(kernel.shape)
        if _need(bias):
            gb = g2.sum(axis=0)
        return gx, gk, gb

    return make_output("conv2d", (x, kernel, bias), np.ascontiguousarray(out), back)


@lru_cache(maxsize=None)
def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Interpolation matrix ``[n_out, n_in]`` (half-pixel centers, clamped)."""
    mat = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * ratio - 0.5, 0.0), n_in - 1)
        i0 = int(np.floor(src))
        i1 = min(i0 + 1, n_in - 1)
        frac = src - i0
        mat[i, i0] += 1.0 - frac
        mat[i, i1] += frac
    mat.setflags(write=False)
    return mat


@lru_cache(maxsize=None)
def nearest_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Selection matrix ``[n_out, n_in]`` with source index ``floor(i * n_in / n_out)``."""
    mat = np.zeros((n_out, n_in))
    for i in range(n_out):
        mat[i, min((i * n_in) // n_out, n_in - 1)] = 1.0
    mat.setflags(write=False)
    return mat


def _separable_resize(op, x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    out = rows @ x.data @ cols.T
    return make_output(op, (x,), out, lambda g: (rows.T @ g @ cols,))


def _check_resize(op, x, out_h, out_w):
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected [N,C,H,W], got {x.shape}")
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"{op}: output size must be positive, got {(out_h, out_w)}")


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _check_resize("bilinear_resize", x, out_h, out_w)
    if x.shape[2:] == (out_h, out_w):
        return make_output("bilinear_resize", (x,), x.data.copy(), lambda g: (g,))
    return _separable_resize(
        "bilinear_resize", x, bilinear_matrix(x.shape[2], out_h), bilinear_matrix(x.shape[3], out_w)
    )


def nearest_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    _check_resize("nearest_resize", x, out_h, out_w)
    return _separable_resize(
        "nearest_resize", x, nearest_matrix(x.shape[2], out_h), nearest_matrix(x.shape[3], out_w)
    )


# losses -------------------------------------------------------------------


def _log_softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean over the batch of ``-log softmax(logits)[label]``."""
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: expected [N,C] logits, got {logits.shape}")
    n, c = logits.shape
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape != (n,):
        raise ShapeError(f"softmax_cross_entropy: {y.shape[0]} labels for {n} rows")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise LabelError(f"labels must lie in [0, {c}), got range [{y.min()}, {y.max()}]")
    logp = _log_softmax(logits.data)
    rows = np.arange(n)
    loss = -logp[rows, y].sum() / n

    def back(g):
        d = np.exp(logp)
        d[rows, y] -= 1.0
        return (d * (float(g) / n),)

    return make_output("softmax_cross_entropy", (logits,), np.array(loss), back)


def softmax_entropy(logits: Tensor) -> Tensor:
    """Mean over the batch of the entropy (nats) of ``softmax(logits)``."""
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise ShapeError(f"softmax_entropy: expected [N,C>=2] logits, got {logits.shape}")
    n = logits.shape[0]
    logp = _log_softmax(logits.data)
    p = np.exp(logp)
    ent = -(p * logp).sum(axis=1)

    def back(g):
        # dH/dz_j = -p_j (log p_j + H)
        return (-p * (logp + ent[:, None]) * (float(g) / n),)

    return make_output("softmax_entropy", (logits,), np.array(ent.sum() / n), back)


def l1_mean(mask: Tensor, gate) -> Tensor:
    """``(1/N) sum_n gate_n * mean_ij mask[n]`` for a ``[N, H, W]`` mask."""
    if mask.ndim != 3:
        raise ShapeError(f"l1_mean: expected [N,H,W] mask, got {mask.shape}")
    n, h, w = mask.shape
    gate = np.asarray(gate, dtype=np.float64).reshape(-1)
    if gate.shape != (n,):
        raise ShapeError(f"l1_mean: {gate.shape[0]} gates for {n} masks")
    value = (gate * np.abs(mask.data).mean(axis=(1, 2))).sum() / n
    sign = np.sign(mask.data)

    def back(g):
        return (sign * gate[:, None, None] * (float(g) / (n * h * w)),)

    return make_output("l1_mean", (mask,), np.array(value), back)
