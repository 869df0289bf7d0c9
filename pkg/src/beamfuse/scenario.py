"""Synthetic V2I scene generation.

Coordinate frame: the base station sits at the origin with its array
boresight along +y; x is lateral. A vehicle (the UE) follows a straight,
turning, or crossing path in front of the array at 10 Hz. Each frame gets a
line-of-sight channel whose exhaustively-evaluated best codebook beam is
the ground-truth label, plus rendered camera / LiDAR / radar / GPS records.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .channel import dft_codebook, los_channel, optimal_beam
from .encoders import MODALITIES
from .preproc import local_to_gps

FAMILIES = ("straight", "turning", "crossing")


@dataclass
class SceneParams:
    antennas: int = 16
    codebook: int = 64
    window: int = 5
    sequences: int = 100
    frames: int = 30
    fps: float = 10.0
    speed_min: float = 5.0
    speed_max: float = 15.0
    jitter: float = 0.05
    families: tuple[str, ...] = FAMILIES
    night_fraction: float = 0.5
    image_size: int = 64
    bev_cells: int = 64
    field_depth: float = 100.0
    field_width: float = 100.0
    radar_antennas: int = 4
    radar_samples: int = 64
    radar_chirps: int = 16
    angle_bins: int = 64
    noise_gps: float = 0.5
    noise_image: float = 0.02
    noise_image_night: float = 0.06
    noise_lidar: float = 0.02
    noise_radar: float = 0.05
    clutter_points: int = 40
    vehicle_points: int = 200
    distractors: int = 3
    range_max: float = 120.0
    radar_vmax: float = 20.0
    gps_scale: float = 60.0
    origin_lat: float = 40.0
    origin_lon: float = -105.0
    day_brightness: float = 1.0
    night_brightness: float = 0.35
    train_fraction: float = 0.8
    gen_mask_mode: str = "none"
    gen_mask_ratio: float = 0.5
    gen_mask_count: int = 1
    gen_mask_ratios: tuple[float, ...] = (0.0,) * 5

    def __post_init__(self):
        if self.antennas < 2 or self.codebook < self.antennas:
            raise ValueError("need antennas >= 2 and codebook >= antennas")
        if self.window < 2:
            raise ValueError("window must be >= 2")
        for fam in self.families:
            if fam not in FAMILIES:
                raise ValueError(f"unknown trajectory family {fam!r}")

    @classmethod
    def from_config(cls, cfg: dict) -> "SceneParams":
        return cls(
            antennas=cfg["scene.antennas"], codebook=cfg["scene.codebook"],
            window=cfg["scene.window"], sequences=cfg["scene.sequences"],
            frames=cfg["scene.frames"], fps=cfg["scene.fps"],
            speed_min=cfg["scene.speed_min"], speed_max=cfg["scene.speed_max"],
            jitter=cfg["scene.jitter"],
            families=tuple(cfg["scene.families"]),
            night_fraction=cfg["scene.night_fraction"],
            image_size=cfg["scene.image_size"],
            bev_cells=cfg["scene.bev_cells"],
            field_depth=cfg["scene.field_depth"],
            field_width=cfg["scene.field_width"],
            radar_antennas=cfg["scene.radar_antennas"],
            radar_samples=cfg["scene.radar_samples"],
            radar_chirps=cfg["scene.radar_chirps"],
            angle_bins=cfg["scene.angle_bins"],
            noise_gps=cfg["scene.noise_gps"],
            noise_image=cfg["scene.noise_image"],
            noise_image_night=cfg["scene.noise_image_night"],
            noise_lidar=cfg["scene.noise_lidar"],
            noise_radar=cfg["scene.noise_radar"],
            clutter_points=cfg["scene.clutter_points"],
            vehicle_points=cfg["scene.vehicle_points"],
            distractors=cfg["scene.distractors"],
            range_max=cfg["scene.range_max"],
            radar_vmax=cfg["scene.radar_vmax"],
            gps_scale=cfg["scene.gps_scale"],
            origin_lat=cfg["scene.origin_lat"],
            origin_lon=cfg["scene.origin_lon"],
            day_brightness=cfg["scene.day_brightness"],
            night_brightness=cfg["scene.night_brightness"],
            train_fraction=cfg["scene.train_fraction"],
            gen_mask_mode=cfg["scene.gen_mask_mode"],
            gen_mask_ratio=cfg["scene.gen_mask_ratio"],
            gen_mask_count=cfg["scene.gen_mask_count"],
            gen_mask_ratios=tuple(cfg["scene.gen_mask_ratios"]),
        )

    def bev_bounds(self) -> tuple[float, float, float, float]:
        half = self.field_width / 2.0
        return (-half, half, 0.0, self.field_depth)


@dataclass
class SampleWindow:
    seq: int
    t: int
    image: np.ndarray        # (H, W, 3) float32 in [0, 1]
    lidar: np.ndarray        # (P, 3) float32
    radar: np.ndarray        # (M_R, S_R, A_R) complex64
    gps: np.ndarray          # (2, 2) float64, rows (lat, lon) at t-1 and t
    beam_history: np.ndarray  # (W-1,) int64, labels at t-W+1 .. t-1
    beam_label: int
    avail: np.ndarray        # (5,) int in the fixed modality order
    scenario: str


# ----------------------------------------------------------------------
# trajectories

def simulate_trajectory(scene: SceneParams, family: str,
                        rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame UE positions (L, 2) and velocities (L, 2) at fps."""
    if family not in FAMILIES:
        raise ValueError(f"unknown trajectory family {family!r}")
    n = scene.frames
    dt = 1.0 / scene.fps
    speed = rng.uniform(scene.speed_min, scene.speed_max)
    tgrid = np.arange(n) * dt

    if family == "straight":
        y0 = rng.uniform(8.0, 28.0)
        direction = 1.0 if rng.random() < 0.5 else -1.0
        half_span = speed * tgrid[-1] / 2.0
        x = -direction * half_span + direction * speed * tgrid
        x += rng.uniform(-4.0, 4.0)
        y = np.full(n, y0)
    elif family == "turning":
        arc_len = speed * tgrid[-1]
        max_sweep = math.radians(140.0)
        radius = max(8.0, arc_len / max_sweep) * rng.uniform(1.0, 1.6)
        y_c = radius + rng.uniform(6.0, 20.0)
        sweep = arc_len / radius
        direction = 1.0 if rng.random() < 0.5 else -1.0
        lo = -math.radians(70.0)
        hi = math.radians(70.0) - sweep
        psi0 = rng.uniform(lo, max(lo, hi))
        psi = psi0 + sweep * tgrid / tgrid[-1]
        if direction < 0:
            psi = -psi
        x = radius * np.sin(psi)
        y = y_c - radius * np.cos(psi)
    else:  # crossing
        start = np.array([rng.uniform(-15.0, 15.0), rng.uniform(30.0, 45.0)])
        target = np.array([rng.uniform(-15.0, 15.0), rng.uniform(5.0, 10.0)])
        dist = float(np.linalg.norm(target - start))
        v_eff = min(speed, max(1.0, (dist - 1.0) / tgrid[-1]))
        heading = (target - start) / dist
        x = start[0] + heading[0] * v_eff * tgrid
        y = start[1] + heading[1] * v_eff * tgrid

    pos = np.stack([x, y], axis=1)
    if scene.jitter > 0:
        pos = pos + rng.normal(0.0, scene.jitter, pos.shape)
    vel = np.empty_like(pos)
    vel[:-1] = (pos[1:] - pos[:-1]) / dt
    vel[-1] = vel[-2]
    if (pos[:, 1] <= 0.5).any():
        raise RuntimeError("trajectory left the field of view (y <= 0.5)")
    return pos, vel


def azimuth_range(pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    theta = np.arctan2(pos[..., 0], pos[..., 1])
    rng_m = np.hypot(pos[..., 0], pos[..., 1])
    return theta, rng_m


# ----------------------------------------------------------------------
# per-frame sensor rendering

def _add_blob(img: np.ndarray, row: float, col: float, sigma: float,
              color: np.ndarray, amp: float) -> None:
    size = img.shape[0]
    rr = np.arange(size)[:, None]
    cc = np.arange(size)[None, :]
    blob = np.exp(-((rr - row) ** 2 + (cc - col) ** 2) / (2.0 * sigma ** 2))
    img += amp * blob[:, :, None] * color[None, None, :]


def render_image(theta: float, rng_m: float, scene: SceneParams,
                 rng: np.random.Generator, night: bool) -> np.ndarray:
    s = scene.image_size
    img = np.full((s, s, 3), 0.35)
    img[: s // 3] = 0.55          # sky band
    col = (theta / math.pi + 0.5) * (s - 1)
    row = (1.0 - min(rng_m / scene.range_max, 1.0)) * (s - 1)
    sigma = 1.0 + 4.0 * max(0.0, 1.0 - rng_m / 80.0)
    _add_blob(img, row, col, sigma, np.array([0.95, 0.35, 0.2]), 0.7)
    for _ in range(scene.distractors):
        _add_blob(img, rng.uniform(0, s - 1), rng.uniform(0, s - 1),
                  rng.uniform(1.0, 3.0), rng.uniform(0.1, 0.6, 3), 0.35)
    brightness = scene.night_brightness if night else scene.day_brightness
    img *= brightness
    noise = scene.noise_image_night if night else scene.noise_image
    if noise > 0:
        img += rng.normal(0.0, noise, img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def render_lidar(pos: np.ndarray, vel: np.ndarray, scene: SceneParams,
                 rng: np.random.Generator) -> np.ndarray:
    heading = math.atan2(vel[1], vel[0]) if np.hypot(*vel) > 1e-6 else 0.0
    dims = np.array([2.4, 1.5, 1.5])   # length, width, height
    n = scene.vehicle_points
    # sample box surface faces weighted by area
    areas = np.array([dims[1] * dims[2], dims[1] * dims[2],
                      dims[0] * dims[2], dims[0] * dims[2],
                      dims[0] * dims[1]])
    faces = rng.choice(5, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, n)
    v = rng.uniform(-0.5, 0.5, n)
    pts = np.zeros((n, 3))
    for f in range(5):
        m = faces == f
        if f in (0, 1):   # front/back
            pts[m, 0] = (0.5 if f == 0 else -0.5) * dims[0]
            pts[m, 1] = u[m] * dims[1]
            pts[m, 2] = (v[m] + 0.5) * dims[2]
        elif f in (2, 3):  # sides
            pts[m, 0] = u[m] * dims[0]
            pts[m, 1] = (0.5 if f == 2 else -0.5) * dims[1]
            pts[m, 2] = (v[m] + 0.5) * dims[2]
        else:              # roof
            pts[m, 0] = u[m] * dims[0]
            pts[m, 1] = v[m] * dims[1]
            pts[m, 2] = dims[2]
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, -s], [s, c]])
    pts[:, :2] = pts[:, :2] @ rot.T + pos
    if scene.clutter_points > 0:
        half = scene.field_width / 2.0
        clutter = np.stack([
            rng.uniform(-half, half, scene.clutter_points),
            rng.uniform(0.0, scene.field_depth, scene.clutter_points),
            rng.uniform(0.0, 0.3, scene.clutter_points)], axis=1)
        pts = np.concatenate([pts, clutter])
    if scene.noise_lidar > 0:
        pts = pts + rng.normal(0.0, scene.noise_lidar, pts.shape)
    return pts.astype(np.float32)


def radar_target_freqs(theta: float, rng_m: float, v_radial: float,
                       scene: SceneParams) -> tuple[float, float, float]:
    """Normalized (antenna, sample, chirp) frequencies of the point target."""
    f_angle = 0.5 * math.sin(theta)
    f_range = 0.45 * min(rng_m / scene.range_max, 1.0)
    f_vel = 0.45 * max(-1.0, min(v_radial / scene.radar_vmax, 1.0))
    return f_angle, f_range, f_vel


def render_radar(theta: float, rng_m: float, v_radial: float,
                 scene: SceneParams, rng: np.random.Generator) -> np.ndarray:
    f_a, f_r, f_v = radar_target_freqs(theta, rng_m, v_radial, scene)
    m = np.arange(scene.radar_antennas)[:, None, None]
    s = np.arange(scene.radar_samples)[None, :, None]
    a = np.arange(scene.radar_chirps)[None, None, :]
    cube = np.exp(2j * np.pi * (f_a * m + f_r * s + f_v * a))
    if scene.noise_radar > 0:
        shape = cube.shape
        cube = cube + scene.noise_radar * (
            rng.normal(size=shape) + 1j * rng.normal(size=shape)
        ) / math.sqrt(2.0)
    return cube.astype(np.complex64)


def render_gps(pos: np.ndarray, scene: SceneParams,
               rng: np.random.Generator) -> np.ndarray:
    east = pos[0] + (rng.normal(0.0, scene.noise_gps) if scene.noise_gps > 0 else 0.0)
    north = pos[1] + (rng.normal(0.0, scene.noise_gps) if scene.noise_gps > 0 else 0.0)
    lat, lon = local_to_gps(east, north, (scene.origin_lat, scene.origin_lon))
    return np.array([lat, lon])


# ----------------------------------------------------------------------
# availability sampling

def sample_availability(mode: str, rng: np.random.Generator,
                        ratio: float = 0.5, count: int = 1,
                        ratios: tuple[float, ...] = (0.0,) * 5) -> np.ndarray:
    """One availability draw over (image, lidar, radar, beam, gps).

    Modes: "none" keeps everything; "independent" drops modality i with
    probability ratios[i]; "miss_n" picks `count` distinct modalities and
    drops each with probability `ratio`. A draw never returns the all-zero
    mask; configurations that would force one are rejected.
    """
    k = len(MODALITIES)
    if mode == "none":
        return np.ones(k, dtype=np.int64)
    if mode == "independent":
        if all(r >= 1.0 for r in ratios):
            raise ValueError("independent masking with all ratios 1 would "
                             "drop every modality")
        while True:
            mask = (rng.random(k) >= np.asarray(ratios)).astype(np.int64)
            if mask.any():
                return mask
    if mode == "miss_n":
        if not 0 <= count <= k:
            raise ValueError(f"miss count {count} outside [0, {k}]")
        if count == k and ratio >= 1.0:
            raise ValueError("miss_n dropping all modalities at ratio 1")
        while True:
            mask = np.ones(k, dtype=np.int64)
            chosen = rng.choice(k, size=count, replace=False)
            for c in chosen:
                if rng.random() < ratio:
                    mask[c] = 0
            if mask.any():
                return mask
    raise ValueError(f"unknown masking mode {mode!r}")


# ----------------------------------------------------------------------
# sequence simulation and window assembly

def simulate_sequence(scene: SceneParams, seq_id: int, seed: int
                      ) -> tuple[list[dict], str]:
    """All frames of one vehicle pass: sensors plus oracle labels."""
    traj_rng = rngmod.stream(seed, "traj", seq_id)
    family = scene.families[seq_id % len(scene.families)]
    night = rngmod.stream(seed, "night", seq_id).random() < scene.night_fraction
    tag = f"{family}_{'night' if night else 'day'}"
    pos, vel = simulate_trajectory(scene, family, traj_rng)
    theta, rng_m = azimuth_range(pos)
    book = dft_codebook(scene.antennas, scene.codebook)
    frames = []
    for t in range(scene.frames):
        frame_rng = rngmod.stream(seed, "frame", seq_id, t)
        phase = frame_rng.uniform(0.0, 2.0 * np.pi)
        h = los_channel(float(theta[t]), phase, scene.antennas,
                        amplitude=1.0 / max(float(rng_m[t]), 1.0))
        label = optimal_beam(h, book)
        v_rad = float(np.dot(pos[t], vel[t]) / max(float(rng_m[t]), 1e-6))
        frames.append({
            "t": t,
            "theta": float(theta[t]),
            "range": float(rng_m[t]),
            "label": label,
            "gps": render_gps(pos[t], scene, frame_rng),
            "image": render_image(float(theta[t]), float(rng_m[t]), scene,
                                  frame_rng, night),
            "lidar": render_lidar(pos[t], vel[t], scene, frame_rng),
            "radar": render_radar(float(theta[t]), float(rng_m[t]), v_rad,
                                  scene, frame_rng),
        })
    return frames, tag


def assemble_windows(frames: list[dict], window: int, codebook: int,
                     seq_id: int, scenario: str,
                     avail_of: "callable | None" = None) -> list[SampleWindow]:
    """Sliding windows over a frame sequence.

    Each window at frame t >= window carries the grid sensors of frame t,
    GPS at t-1 and t, and the oracle labels of the preceding window-1
    frames as beam history.
    """
    if len(frames) < window + 1:
        logging.getLogger(__name__).warning(
            "sequence %d too short for window %d (%d frames), skipped",
            seq_id, window, len(frames))
        return []
    out = []
    for t in range(window, len(frames)):
        history = np.array([frames[i]["label"]
                            for i in range(t - window + 1, t)], dtype=np.int64)
        if history.size and history.max() >= codebook:
            raise ValueError("history label outside the codebook")
        avail = (np.ones(len(MODALITIES), dtype=np.int64)
                 if avail_of is None else avail_of(seq_id, t))
        out.append(SampleWindow(
            seq=seq_id, t=t,
            image=frames[t]["image"],
            lidar=frames[t]["lidar"],
            radar=frames[t]["radar"],
            gps=np.stack([frames[t - 1]["gps"], frames[t]["gps"]]),
            beam_history=history,
            beam_label=int(frames[t]["label"]),
            avail=avail,
            scenario=scenario,
        ))
    return out


def generate_windows(scene: SceneParams, seed: int
                     ) -> tuple[list[SampleWindow], list[SampleWindow]]:
    """All sequences, split 80/20 (by sequence, never by frame)."""
    def avail_of(seq_id: int, t: int) -> np.ndarray:
        r = rngmod.stream(seed, "avail", seq_id, t)
        return sample_availability(scene.gen_mask_mode, r,
                                   scene.gen_mask_ratio,
                                   scene.gen_mask_count,
                                   scene.gen_mask_ratios)

    per_seq = []
    for seq_id in range(scene.sequences):
        frames, tag = simulate_sequence(scene, seq_id, seed)
        per_seq.append(assemble_windows(frames, scene.window, scene.codebook,
                                        seq_id, tag, avail_of))
    order = rngmod.stream(seed, "split").permutation(scene.sequences)
    n_train = int(round(scene.train_fraction * scene.sequences))
    train_ids = set(order[:n_train].tolist())
    train = [w for ws in per_seq for w in ws if w.seq in train_ids]
    test = [w for ws in per_seq for w in ws if w.seq not in train_ids]
    return train, test
