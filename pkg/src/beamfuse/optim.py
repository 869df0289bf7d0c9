"""Adaptive-moment optimizer with decoupled weight decay and the
warmup-plus-cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .params import ParamStore


def schedule_lr(step: int, warmup: int, total: int, base: float) -> float:
    """Learning rate at a given optimizer step.

    Linear ramp base*(step+1)/warmup while step < warmup, then cosine decay
    to zero over the remaining steps.
    """
    if not 0 <= step < total:
        raise ValueError(f"step {step} outside [0, {total})")
    if warmup >= total:
        raise ValueError(f"warmup {warmup} must be < total {total}")
    if step < warmup:
        return base * (step + 1) / warmup
    frac = (step - warmup) / (total - warmup)
    return base * 0.5 * (1.0 + math.cos(math.pi * frac))


class AdamW:
    """Decoupled-weight-decay Adam over a ParamStore.

    Weight decay multiplies parameters by (1 - lr*decay) each step rather
    than entering the gradient. Moments live in float64 when the parameters
    do, float32 otherwise.
    """

    def __init__(self, params: ParamStore, base_lr: float,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0,
                 warmup: int = 0, total_steps: int = 1):
        self.params = params
        self.base_lr = float(base_lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.warmup = int(warmup)
        self.total_steps = int(total_steps)
        self.step_count = 0
        self.m = {path: np.zeros_like(t.data) for path, t in params.items()}
        self.v = {path: np.zeros_like(t.data) for path, t in params.items()}

    def current_lr(self) -> float:
        return schedule_lr(self.step_count, self.warmup, self.total_steps,
                           self.base_lr)

    def step(self) -> float:
        """Apply one update from the gradients stored on the parameters.

        Returns the learning rate that was used.
        """
        lr = self.current_lr()
        b1, b2 = self.beta1, self.beta2
        t = self.step_count + 1
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for path, p in self.params.items():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            elif not np.isfinite(g).all():
                raise FloatingPointError(
                    f"non-finite gradient for parameter {path!r}")
            if self.weight_decay:
                p.data = p.data * (1.0 - lr * self.weight_decay)
            m = self.m[path] = b1 * self.m[path] + (1.0 - b1) * g
            v = self.v[path] = b2 * self.v[path] + (1.0 - b2) * (g * g)
            update = (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = p.data - (lr * update).astype(p.data.dtype)
        self.step_count = t
        return lr

    # ------------------------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moments and step counter, flattened for checkpointing."""
        out: dict[str, np.ndarray] = {
            "step": np.asarray([self.step_count], dtype=np.float64)}
        for path in self.params.paths():
            out[f"m/{path}"] = self.m[path]
            out[f"v/{path}"] = self.v[path]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.step_count = int(arrays["step"][0])
        for path in self.params.paths():
            self.m[path] = np.asarray(arrays[f"m/{path}"])
            self.v[path] = np.asarray(arrays[f"v/{path}"])
            if self.m[path].shape != self.params[path].shape:
                raise ValueError(f"optimizer state shape mismatch at {path!r}")
