"""Compact learned per-modality feature extractors.

Grid modalities (image, lidar BEV, radar maps) go through a stack of
stride-2 convolutions with channel layer-norm and ReLU, then adaptive
average pooling to the shared (C, V_A, H_A) interface. GPS and beam
history go through small per-token MLPs producing one C-vector per frame
or history index.
"""

from __future__ import annotations

import numpy as np

from . import ops
from .params import ParamStore, fan_in_uniform
from .tensor import Tensor

GRID_MODALITIES = ("image", "lidar", "radar")
VECTOR_MODALITIES = ("beam", "gps")
MODALITIES = ("image", "lidar", "radar", "beam", "gps")

GRID_INPUT_CHANNELS = {"image": 3, "lidar": 1, "radar": 2}
VECTOR_INPUT_DIMS = {"beam": 1, "gps": 2}


def init_grid_encoder(store: ParamStore, prefix: str, in_channels: int,
                      widths: list[int], rng: np.random.Generator) -> None:
    c_prev = in_channels
    for i, width in enumerate(widths):
        store.add(f"{prefix}/conv{i}/w",
                  fan_in_uniform(rng, (width, c_prev, 3, 3)))
        store.add(f"{prefix}/conv{i}/b", np.zeros(width))
        store.add(f"{prefix}/ln{i}/g", np.ones(width))
        store.add(f"{prefix}/ln{i}/s", np.zeros(width))
        c_prev = width


def init_vector_encoder(store: ParamStore, prefix: str, in_dim: int,
                        hidden: int, out_dim: int,
                        rng: np.random.Generator) -> None:
    store.add(f"{prefix}/fc0/w", fan_in_uniform(rng, (in_dim, hidden)))
    store.add(f"{prefix}/fc0/b", np.zeros(hidden))
    store.add(f"{prefix}/fc1/w", fan_in_uniform(rng, (hidden, out_dim)))
    store.add(f"{prefix}/fc1/b", np.zeros(out_dim))


def _channel_layer_norm(x: Tensor, gain: Tensor, shift: Tensor) -> Tensor:
    # (B, C, H, W) -> normalize over C at each spatial site
    moved = x.transpose(0, 2, 3, 1)
    normed = ops.layer_norm(moved, gain, shift)
    return normed.transpose(0, 3, 1, 2)


def grid_encode(x: Tensor, store: ParamStore, prefix: str, widths: list[int],
                pool: tuple[int, int]) -> Tensor:
    """Encode (B, C_in, H, W) to (B, C, V_A, H_A)."""
    h = x
    trace = [tuple(x.shape[2:])]
    for i in range(len(widths)):
        h = ops.conv2d(h, store[f"{prefix}/conv{i}/w"],
                       store[f"{prefix}/conv{i}/b"], stride=2, padding=1)
        h = _channel_layer_norm(h, store[f"{prefix}/ln{i}/g"],
                                store[f"{prefix}/ln{i}/s"])
        h = ops.relu(h)
        trace.append(tuple(h.shape[2:]))
    if h.shape[2] < pool[0] or h.shape[3] < pool[1]:
        raise ValueError(
            f"{prefix}: spatial extent fell below pool target {pool}; "
            f"stage extents {trace}")
    return ops.adaptive_avg_pool(h, pool)


def vector_encode(x: Tensor, store: ParamStore, prefix: str) -> Tensor:
    """Encode (B, tokens, in_dim) to (B, tokens, C) with a shared 2-layer MLP."""
    b, tokens, in_dim = x.shape
    w0 = store[f"{prefix}/fc0/w"]
    if in_dim != w0.shape[0]:
        raise ValueError(
            f"{prefix}: expected {w0.shape[0]} input features per token, "
            f"got {in_dim}")
    flat = x.reshape(b * tokens, in_dim)
    h = ops.relu(ops.affine(flat, w0, store[f"{prefix}/fc0/b"]))
    out = ops.affine(h, store[f"{prefix}/fc1/w"], store[f"{prefix}/fc1/b"])
    return out.reshape(b, tokens, out.shape[-1])
