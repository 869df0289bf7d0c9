"""Learnable parameter store, addressable by path."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import Tensor


class ParamStore:
    """All learnable arrays of a model, keyed by a unique slash-path.

    Iteration order is sorted by path so that gradient accumulation,
    optimizer updates and checkpoints are reproducible.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Tensor] = {}

    def add(self, path: str, array: np.ndarray) -> Tensor:
        if path in self._params:
            raise ValueError(f"duplicate parameter path {path!r}")
        t = Tensor(np.asarray(array, dtype=self.dtype), requires_grad=True,
                   name=path)
        self._params[path] = t
        return t

    def __getitem__(self, path: str) -> Tensor:
        return self._params[path]

    def __contains__(self, path: str) -> bool:
        return path in self._params

    def __len__(self) -> int:
        return len(self._params)

    def paths(self) -> list[str]:
        return sorted(self._params)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        for path in sorted(self._params):
            yield path, self._params[path]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def count_scalars(self) -> int:
        return sum(p.size for p in self._params.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {path: t.data for path, t in self.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Overwrite parameter values in place; shapes must match."""
        missing = sorted(set(self._params) - set(arrays))
        extra = sorted(set(arrays) - set(self._params))
        if missing or extra:
            raise ValueError(
                f"parameter set mismatch: missing {missing[:3]}, extra {extra[:3]}")
        for path, t in self._params.items():
            src = np.asarray(arrays[path])
            if src.shape != t.shape:
                raise ValueError(
                    f"shape mismatch for {path!r}: checkpoint {src.shape} "
                    f"vs model {t.shape}")
            t.data = src.astype(self.dtype)


def fan_in_uniform(rng: np.random.Generator, shape: tuple[int, ...],
                   fan_in: int | None = None) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    if fan_in is None:
        # conv (out, in, kh, kw) or affine (in, out)
        if len(shape) == 4:
            fan_in = shape[1] * shape[2] * shape[3]
        elif len(shape) == 2:
            fan_in = shape[0]
        else:
            fan_in = shape[-1]
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def gaussian(rng: np.random.Generator, shape: tuple[int, ...],
             std: float = 0.02) -> np.ndarray:
    return rng.normal(0.0, std, size=shape)
