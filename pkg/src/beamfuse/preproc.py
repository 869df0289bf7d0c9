"""Sensor preprocessing: raw records to the normalized arrays the encoders
consume. Everything here is deterministic plain numpy; no gradients flow
through preprocessing."""

from __future__ import annotations

import numpy as np

EARTH_RADIUS_M = 6371000.0
BEV_CELL_CAP = 5.0


def minmax_normalize(x: np.ndarray) -> np.ndarray:
    """Scale to [0, 1]; a constant input maps to all zeros."""
    x = np.asarray(x, dtype=np.float64)
    lo = x.min()
    hi = x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def radar_maps(cube: np.ndarray, angle_bins: int, velocity_bins: int) -> np.ndarray:
    """Range-angle and range-velocity magnitude maps from a radar cube.

    cube is complex, indexed (antenna, sample, chirp). The RA map sums
    |2D-DFT| of each (antenna x sample) slice over chirps, antennas
    zero-padded to angle_bins; the RV map sums |2D-DFT| of each
    (sample x chirp) slice over antennas, chirps zero-padded to
    velocity_bins. The angle and velocity axes are center-shifted so zero
    frequency lands mid-axis; the range axis is left as-is. Each map is
    min-max normalized and the two are stacked on a leading channel axis.
    """
    cube = np.asarray(cube)
    if cube.ndim != 3 or min(cube.shape) < 1:
        raise ValueError(f"radar cube must be 3D non-empty, got {cube.shape}")
    m_r, s_r, a_r = cube.shape
    if angle_bins < m_r:
        raise ValueError(f"angle_bins {angle_bins} < antenna count {m_r}")
    if velocity_bins < a_r:
        raise ValueError(f"velocity_bins {velocity_bins} < chirp count {a_r}")
    if angle_bins != velocity_bins:
        raise ValueError(
            f"angle_bins {angle_bins} != velocity_bins {velocity_bins}")
    g = angle_bins

    # RA: (angle, range), one 2D-DFT per chirp slice, summed over chirps
    ra = np.abs(np.fft.fft2(cube, s=(g, s_r), axes=(0, 1))).sum(axis=2)
    ra = np.fft.fftshift(ra, axes=0)

    # RV: (range, velocity), one 2D-DFT per antenna slice, summed over antennas
    rv = np.abs(np.fft.fft2(cube, s=(s_r, g), axes=(1, 2))).sum(axis=0)
    rv = np.fft.fftshift(rv, axes=1)

    if ra.shape != rv.shape:
        raise ValueError(
            f"RA {ra.shape} and RV {rv.shape} differ; angle/velocity bins "
            f"must equal the per-chirp sample count {s_r} to stack")
    return np.stack([minmax_normalize(ra), minmax_normalize(rv)])


def lidar_bev(points: np.ndarray, grid: tuple[int, int],
              bounds: tuple[float, float, float, float]) -> tuple[np.ndarray, int]:
    """Rasterize a point cloud into per-cell counts capped at five.

    points is (P, 3); the first coordinate bins into grid rows, the second
    into columns. Points on the max boundary fall into the last cell.
    Returns (counts, number of out-of-bounds points dropped).
    """
    v_g, h_g = grid
    x0, x1, y0, y1 = bounds
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate BEV bounds {bounds}")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    x = points[:, 0]
    y = points[:, 1]
    inside = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
    dropped = int((~inside).sum())
    xi = x[inside]
    yi = y[inside]
    rows = np.minimum((v_g * (xi - x0) / (x1 - x0)).astype(np.int64), v_g - 1)
    cols = np.minimum((h_g * (yi - y0) / (y1 - y0)).astype(np.int64), h_g - 1)
    counts = np.zeros((v_g, h_g), dtype=np.float64)
    np.add.at(counts, (rows, cols), 1.0)
    return np.minimum(counts, BEV_CELL_CAP), dropped


def gps_to_local(ue: tuple[float, float], bs: tuple[float, float]) -> tuple[float, float]:
    """(east, north) meters of the UE relative to the BS, equirectangular."""
    for lat, lon in (ue, bs):
        if abs(lat) > 90.0 or abs(lon) > 180.0:
            raise ValueError(f"invalid coordinate ({lat}, {lon})")
    dlat = np.deg2rad(ue[0] - bs[0])
    dlon = np.deg2rad(ue[1] - bs[1])
    north = EARTH_RADIUS_M * dlat
    east = EARTH_RADIUS_M * dlon * np.cos(np.deg2rad(bs[0]))
    return float(east), float(north)


def local_to_gps(east: float, north: float,
                 bs: tuple[float, float]) -> tuple[float, float]:
    """Inverse of gps_to_local about the same BS reference."""
    lat = bs[0] + np.rad2deg(north / EARTH_RADIUS_M)
    lon = bs[1] + np.rad2deg(east / (EARTH_RADIUS_M * np.cos(np.deg2rad(bs[0]))))
    return float(lat), float(lon)


def image_standardize(img: np.ndarray, mean: np.ndarray,
                      std: np.ndarray) -> np.ndarray:
    """Per-channel (x - mean) / std over the trailing channel axis."""
    img = np.asarray(img, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if np.any(std <= 0):
        raise ValueError(f"non-positive std {std}")
    return (img - mean) / std


def beam_normalize(history: np.ndarray, codebook_size: int) -> np.ndarray:
    """Map beam indices in [0, K-1] to [0, 1]."""
    idx = np.asarray(history, dtype=np.float64)
    if idx.size and (idx.min() < 0 or idx.max() > codebook_size - 1):
        raise ValueError(
            f"beam index outside [0, {codebook_size - 1}]: "
            f"range [{idx.min()}, {idx.max()}]")
    return idx / (codebook_size - 1)
