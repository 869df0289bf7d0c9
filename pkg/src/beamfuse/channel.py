"""Uniform-linear-array channel, DFT beam codebook, and the exhaustive
optimal-beam oracle that labels the synthetic data."""

from __future__ import annotations

import numpy as np


def steering_vector(theta: float, n: int) -> np.ndarray:
    """Array response a_k = exp(i*pi*k*sin(theta)) for half-wavelength spacing."""
    if not -np.pi / 2 < theta < np.pi / 2:
        raise ValueError(f"azimuth {theta} outside (-pi/2, pi/2)")
    k = np.arange(n)
    return np.exp(1j * np.pi * k * np.sin(theta))


def dft_codebook(n: int, k: int) -> np.ndarray:
    """K unit-norm beams on the uniform sin-space grid, shape (K, N).

    Beam j points at sin(theta_j) = -1 + (2j+1)/K.
    """
    if k < n:
        raise ValueError(f"codebook size {k} < antenna count {n}")
    j = np.arange(k)
    sines = -1.0 + (2.0 * j + 1.0) / k
    ant = np.arange(n)
    return np.exp(1j * np.pi * np.outer(sines, ant)) / np.sqrt(n)


def beam_gains(h: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    """|h^H f_k|^2 for every beam."""
    return np.abs(codebook @ np.conj(h)) ** 2


def optimal_beam(h: np.ndarray, codebook: np.ndarray) -> int:
    """Exhaustive argmax of the effective gain; ties break to the smaller index."""
    h = np.asarray(h)
    if not np.any(h):
        raise ValueError("zero channel vector has no optimal beam")
    return int(np.argmax(beam_gains(h, codebook)))


def los_channel(theta: float, rng_phase: float, n: int,
                amplitude: float = 1.0) -> np.ndarray:
    """Single-path line-of-sight channel: complex gain times the steering vector."""
    gain = amplitude * np.exp(1j * rng_phase)
    return gain * steering_vector(theta, n)
