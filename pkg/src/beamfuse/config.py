"""Run configuration: flat key=value text with documented defaults.

Unknown keys are rejected; missing keys take the defaults below. The fully
resolved configuration is echoed into every run directory so a run can be
reproduced from its own output.
"""

from __future__ import annotations

from pathlib import Path


class ConfigError(Exception):
    pass


# key -> default; the default's type defines how the value is parsed
DEFAULTS: dict[str, object] = {
    # model
    "model.channels": 64,
    "model.heads": 8,
    "model.pool_v": 4,
    "model.pool_h": 4,
    "model.specific_layers": 2,
    "model.fusion_layers": 1,
    "model.ffn_mult": 4,
    "model.head_mult": 4,
    "model.dropout": 0.1,
    "model.embed_hidden": 64,
    "model.vector_hidden": 64,
    "model.image_widths": [16, 32, 64, 64],
    "model.grid_widths": [16, 32, 64],
    "model.use_posemb": True,
    "model.use_gate": True,
    "model.use_cma": True,
    "model.cma_include_missing": True,
    # training
    "train.batch": 16,
    "train.lr": 1e-4,
    "train.epochs": 20,
    "train.warmup": 5,
    "train.weight_decay": 0.01,
    "train.seed": 0,
    "train.precision": "single",
    "train.val_fraction": 0.1,
    "train.resume": "",
    # losses
    "loss.beta1": 0.25,
    "loss.beta2": 2.0,
    "loss.label_sigma": 1.0,
    "loss.tau": 0.07,
    "loss.lambda_focal": 10.0,
    "loss.lambda_contrastive": 0.2,
    "loss.lambda_reg": 0.2,
    # training-time availability sampling
    "mask.mode": "miss_n",
    "mask.ratio": 0.5,
    "mask.count": 1,
    "mask.ratios": [0.0, 0.0, 0.0, 0.0, 0.0],
    # synthetic scene generation
    "scene.antennas": 16,
    "scene.codebook": 64,
    "scene.window": 5,
    "scene.sequences": 100,
    "scene.frames": 30,
    "scene.seed": 0,
    "scene.fps": 10.0,
    "scene.speed_min": 5.0,
    "scene.speed_max": 15.0,
    "scene.jitter": 0.05,
    "scene.families": ["straight", "turning", "crossing"],
    "scene.night_fraction": 0.5,
    "scene.image_size": 64,
    "scene.bev_cells": 64,
    "scene.field_depth": 100.0,
    "scene.field_width": 100.0,
    "scene.radar_antennas": 4,
    "scene.radar_samples": 64,
    "scene.radar_chirps": 16,
    "scene.angle_bins": 64,
    "scene.noise_gps": 0.5,
    "scene.noise_image": 0.02,
    "scene.noise_image_night": 0.06,
    "scene.noise_lidar": 0.02,
    "scene.noise_radar": 0.05,
    "scene.clutter_points": 40,
    "scene.vehicle_points": 200,
    "scene.distractors": 3,
    "scene.range_max": 120.0,
    "scene.radar_vmax": 20.0,
    "scene.gps_scale": 60.0,
    "scene.origin_lat": 40.0,
    "scene.origin_lon": -105.0,
    "scene.day_brightness": 1.0,
    "scene.night_brightness": 0.35,
    "scene.train_fraction": 0.8,
    "scene.gen_mask_mode": "none",
    "scene.gen_mask_ratio": 0.5,
    "scene.gen_mask_count": 1,
    "scene.gen_mask_ratios": [0.0, 0.0, 0.0, 0.0, 0.0],
    # evaluation
    "eval.batch": 64,
    "eval.seed": 1234,
    "eval.dba_delta": 5.0,
    "eval.dba_k": 3,
    "eval.ratios": [0.0, 0.25, 0.5, 0.75],
    "eval.miss_counts": [0, 1, 2, 3],
    "eval.miss_ratio": 0.5,
}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_value(key: str, text: str):
    default = DEFAULTS[key]
    text = text.strip()
    try:
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, list):
            if not text:
                return []
            elem = default[0] if default else 0.0
            items = [s.strip() for s in text.split(",")]
            if isinstance(elem, str):
                return items
            if isinstance(elem, int):
                return [int(s) for s in items]
            return [float(s) for s in items]
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from exc


def load_config(path: str | Path | None = None,
                overrides: dict[str, str] | None = None) -> dict:
    """Resolve a full configuration from an optional file plus overrides."""
    cfg = dict(DEFAULTS)
    pairs: list[tuple[str, str]] = []
    if path is not None:
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            pairs.append((key.strip(), value))
    for key, value in (overrides or {}).items():
        pairs.append((key, value))
    for key, value in pairs:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = parse_value(key, str(value))
    return cfg


def format_config(cfg: dict) -> str:
    lines = []
    for key in sorted(cfg):
        value = cfg[key]
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, list):
            text = ",".join(str(v) for v in value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def echo_config(cfg: dict, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "config.txt"
    target.write_text(format_config(cfg))
    return target
