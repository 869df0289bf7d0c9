"""Finite-difference verification of the backward pass on a micro model.

The check builds a small double-precision model on a tiny synthetic batch,
computes the full training loss gradient once by backpropagation, then
compares sampled coordinates against central finite differences. The
difference quotient never touches the backward implementation, so it is an
independent oracle for it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .config import load_config
from .features import featurize_windows
from .model import BeamFuseModel, ModelConfig
from .scenario import SceneParams, generate_windows
from .train import batch_losses

MICRO_OVERRIDES = {
    "model.channels": "8",
    "model.heads": "2",
    "model.pool_v": "2",
    "model.pool_h": "2",
    "model.ffn_mult": "2",
    "model.head_mult": "2",
    "model.dropout": "0",
    "model.embed_hidden": "8",
    "model.vector_hidden": "8",
    "model.image_widths": "8,8,8",
    "model.grid_widths": "8,8",
    "scene.antennas": "4",
    "scene.codebook": "8",
    "scene.window": "3",
    "scene.sequences": "2",
    "scene.frames": "6",
    "scene.image_size": "16",
    "scene.bev_cells": "16",
    "scene.radar_antennas": "2",
    "scene.radar_samples": "16",
    "scene.radar_chirps": "4",
    "scene.angle_bins": "16",
    "scene.clutter_points": "10",
    "scene.vehicle_points": "50",
    "train.precision": "double",
}


@dataclass
class CoordResult:
    path: str
    index: int
    autodiff: float
    finite_diff: float
    rel_error: float


@dataclass
class GradCheckReport:
    coords: list[CoordResult]
    tolerance: float

    @property
    def max_rel_error(self) -> float:
        return max(c.rel_error for c in self.coords)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def worst_by_path(self) -> dict[str, float]:
        worst: dict[str, float] = {}
        for c in self.coords:
            worst[c.path] = max(worst.get(c.path, 0.0), c.rel_error)
        return worst


def micro_config(extra: dict[str, str] | None = None) -> dict:
    overrides = dict(MICRO_OVERRIDES)
    overrides.update(extra or {})
    return load_config(None, overrides)


def relative_error(a: float, b: float, floor: float = 1e-7) -> float:
    diff = abs(a - b)
    if diff < floor:
        return 0.0
    return diff / max(abs(a), abs(b))


def run_gradcheck(seed: int = 0, n_coords: int = 50, step: float = 1e-5,
                  tolerance: float = 1e-4,
                  config: dict | None = None) -> GradCheckReport:
    cfg = config or micro_config()
    scene = SceneParams.from_config(cfg)
    mc = ModelConfig.from_config(cfg)
    train_windows, _ = generate_windows(scene, seed)
    windows = train_windows[:3]
    feats, labels, _, _ = featurize_windows(windows, scene)
    # mixed availability exercises placeholders and the fusion mask
    avail = np.array([[1, 1, 1, 1, 1],
                      [1, 0, 1, 0, 1],
                      [0, 1, 0, 1, 1]])[:len(windows)]

    model = BeamFuseModel.build(mc, rngmod.stream(seed, "init"), np.float64)
    # move off the freshly-initialized zeros: exact-zero biases put sparse
    # inputs right on the ReLU kink and zero-variance layer-norm plateau,
    # where central differences are meaningless
    jitter = rngmod.stream(seed, "jitter")
    for _, p in model.params.items():
        p.data = p.data + jitter.normal(0.0, 0.05, p.shape)

    def loss_value() -> float:
        breakdown, _ = batch_losses(model, feats, labels, avail, cfg,
                                    None, np.float64)
        return breakdown.total.item()

    model.params.zero_grad()
    breakdown, _ = batch_losses(model, feats, labels, avail, cfg,
                                None, np.float64)
    breakdown.total.backward()

    coord_rng = rngmod.stream(seed, "coords")
    paths = model.params.paths()
    chosen_paths = coord_rng.choice(len(paths), size=min(n_coords, len(paths)),
                                    replace=False)
    results = []
    for pi in chosen_paths:
        path = paths[int(pi)]
        p = model.params[path]
        index = int(coord_rng.integers(p.size))
        auto = float(p.grad.reshape(-1)[index]) if p.grad is not None else 0.0
        flat = p.data.reshape(-1)
        orig = flat[index]
        flat[index] = orig + step
        f_plus = loss_value()
        flat[index] = orig - step
        f_minus = loss_value()
        flat[index] = orig
        fd = (f_plus - f_minus) / (2.0 * step)
        results.append(CoordResult(path, index, auto, fd,
                                   relative_error(auto, fd)))
    return GradCheckReport(results, tolerance)
