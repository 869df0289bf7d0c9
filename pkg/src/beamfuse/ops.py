"""Differentiable neural primitives built on the Tensor graph.

Shapes follow the numpy convention: batch and token axes lead, channels
last for dense ops, channels-first (B, C, H, W) for convolutions.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import as_strided
from scipy import special

from .tensor import Tensor

LAYERNORM_EPS = 1e-5


def affine(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight + bias over the last axis of x."""
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(
            f"affine shape mismatch: input {x.shape} vs weight {weight.shape}")
    out = x @ weight
    if bias is not None:
        if bias.shape != (weight.shape[1],):
            raise ValueError(
                f"affine bias shape {bias.shape} does not match weight {weight.shape}")
        out = out + bias
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(np.where(mask, x.data, 0.0), (x,),
                          lambda g: (np.where(mask, g, 0.0),))


def gelu(x: Tensor) -> Tensor:
    """Exact erf-based GELU."""
    v = x.data
    cdf = 0.5 * (1.0 + special.erf(v / math.sqrt(2.0)))
    data = v * cdf
    pdf = np.exp(-0.5 * v * v) / math.sqrt(2.0 * math.pi)
    return Tensor.from_op(data.astype(v.dtype), (x,),
                          lambda g: ((g * (cdf + v * pdf)).astype(v.dtype),))


def sigmoid(x: Tensor) -> Tensor:
    s = special.expit(x.data).astype(x.dtype)
    return Tensor.from_op(s, (x,), lambda g: (g * s * (1.0 - s),))


def dropout(x: Tensor, rate: float, rng: np.random.Generator,
            training: bool) -> Tensor:
    """Inverted dropout; identity when not training or rate is zero."""
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return Tensor.from_op(x.data * keep, (x,), lambda g: (g * keep,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return Tensor.from_op(y, (x,), backward)


def masked_softmax(scores: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax over the entries where mask == 1; masked entries are exact zero.

    mask is a constant {0,1} array broadcastable to scores. Every row
    (slice along axis) must keep at least one unmasked entry.
    """
    mask = np.asarray(mask)
    if axis != -1 and axis != scores.ndim - 1:
        raise ValueError("masked_softmax operates along the last axis")
    row_alive = (mask > 0).any(axis=-1)
    if not row_alive.all():
        bad = np.argwhere(~np.atleast_1d(row_alive))[0]
        raise ValueError(
            f"masked_softmax: mask row {tuple(int(i) for i in bad)} has no "
            "unmasked entries (mask construction bug)")
    m = mask.astype(scores.dtype)
    neg = np.where(mask > 0, scores.data, -np.inf)
    rowmax = neg.max(axis=-1, keepdims=True)
    # shift only the live entries; masked ones are zeroed after exp anyway
    shifted = np.where(mask > 0, scores.data - rowmax, 0.0)
    e = np.exp(shifted) * m
    denom = e.sum(axis=-1, keepdims=True)
    y = e / denom

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return (y * (g - dot),)

    return Tensor.from_op(y, (scores,), backward)


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    data = (np.log(s) + m).squeeze(axis)
    soft = e / s
    keep_shape = s.shape

    def backward(g):
        return (g.reshape(keep_shape) * soft,)

    return Tensor.from_op(np.atleast_1d(data), (x,), backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    data = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)
    return Tensor.from_op(data, (x,), lambda g: (np.where(inside, g, 0.0),))


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor,
               eps: float = LAYERNORM_EPS) -> Tensor:
    """Normalize over the last (channel) axis, then scale and shift."""
    c = x.shape[-1]
    if gain.shape != (c,) or shift.shape != (c,):
        raise ValueError(
            f"layer_norm params {gain.shape}/{shift.shape} do not match "
            f"channels {c} of input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + shift.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=lead)
        dshift = g.sum(axis=lead)
        dxhat = g * gain.data
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, dgain, dshift

    return Tensor.from_op(out, (x, gain, shift), backward)


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int,
            h_out: int, w_out: int) -> np.ndarray:
    b, c = xp.shape[:2]
    sb, sc, sh, sw = xp.strides
    win = as_strided(
        xp,
        shape=(b, c, kh, kw, h_out, w_out),
        strides=(sb, sc, sh, sw, sh * stride, sw * stride),
        writeable=False,
    )
    return np.ascontiguousarray(win.transpose(0, 4, 5, 1, 2, 3)).reshape(
        b, h_out * w_out, c * kh * kw)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """2D convolution, x (B, C_in, H, W), weight (C_out, C_in, kh, kw)."""
    b, c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = weight.shape
    if c_in != c_in_w:
        raise ValueError(
            f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    if h_out < 1 or w_out < 1:
        raise ValueError(
            f"conv2d output would be empty: input {x.shape}, kernel "
            f"({kh},{kw}), stride {stride}, padding {padding}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cols = _im2col(xp, kh, kw, stride, h_out, w_out)
    w_flat = weight.data.reshape(c_out, -1).T
    out = np.matmul(cols, w_flat)
    if bias is not None:
        out = out + bias.data
    out = out.transpose(0, 2, 1).reshape(b, c_out, h_out, w_out)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gm = g.reshape(b, c_out, h_out * w_out).transpose(0, 2, 1)
        dw = dx = db = None
        if weight.requires_grad:
            k = cols.shape[-1]
            dw_flat = np.matmul(cols.reshape(-1, k).T, gm.reshape(-1, c_out))
            dw = dw_flat.T.reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            db = gm.sum(axis=(0, 1))
        if x.requires_grad:
            dcols = np.matmul(gm, w_flat.T)
            dwin = dcols.reshape(b, h_out, w_out, c_in, kh, kw).transpose(
                0, 3, 4, 5, 1, 2)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * h_out:stride,
                        j:j + stride * w_out:stride] += dwin[:, :, i, j]
            dx = dxp[:, :, padding:padding + h, padding:padding + w]
            if padding == 0:
                dx = dx.copy()
        if bias is None:
            return dx, dw
        return dx, dw, db

    return Tensor.from_op(out, parents, backward)


def adaptive_avg_pool(x: Tensor, out_hw: tuple[int, int]) -> Tensor:
    """Average-pool (B, C, H, W) to (B, C, vo, ho).

    Kernel extents are ceil(H/vo) x ceil(W/ho); windows tile from the origin
    with stride equal to the kernel, the last window truncating at the
    border and averaging over its actual coverage.
    """
    vo, ho = out_hw
    b, c, h, w = x.shape
    if vo < 1 or ho < 1 or vo > h or ho > w:
        raise ValueError(
            f"adaptive_avg_pool target ({vo},{ho}) exceeds input ({h},{w})")
    kh = -(-h // vo)
    kw = -(-w // ho)
    if (vo - 1) * kh >= h or (ho - 1) * kw >= w:
        raise ValueError(
            f"adaptive_avg_pool: ({h},{w}) -> ({vo},{ho}) leaves an empty "
            f"window with kernel ({kh},{kw})")

    if h % vo == 0 and w % ho == 0:
        out = x.data.reshape(b, c, vo, kh, ho, kw).mean(axis=(3, 5))

        def backward(g):
            gw = g[:, :, :, None, :, None] / (kh * kw)
            return (np.broadcast_to(
                gw, (b, c, vo, kh, ho, kw)).reshape(b, c, h, w).copy(),)

        return Tensor.from_op(out, (x,), backward)

    rows = [(i * kh, min((i + 1) * kh, h)) for i in range(vo)]
    cols = [(j * kw, min((j + 1) * kw, w)) for j in range(ho)]
    out = np.empty((b, c, vo, ho), dtype=x.dtype)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            out[:, :, i, j] = x.data[:, :, r0:r1, c0:c1].mean(axis=(2, 3))

    def backward(g):
        dx = np.zeros_like(x.data)
        for i, (r0, r1) in enumerate(rows):
            for j, (c0, c1) in enumerate(cols):
                area = (r1 - r0) * (c1 - c0)
                dx[:, :, r0:r1, c0:c1] += g[:, :, i:i + 1, j:j + 1] / area
        return (dx,)

    return Tensor.from_op(out, (x,), backward)
