"""Bridge from raw sample windows to the arrays the model consumes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .preproc import (beam_normalize, gps_to_local, image_standardize,
                      lidar_bev, minmax_normalize, radar_maps)
from .scenario import SampleWindow, SceneParams


@dataclass
class FeatureExtractor:
    scene: SceneParams

    def image(self, img: np.ndarray) -> np.ndarray:
        # per-image, per-channel standardization
        mean = img.mean(axis=(0, 1))
        std = img.std(axis=(0, 1))
        std = np.maximum(std, 1e-6)
        out = image_standardize(img, mean, std)
        return out.transpose(2, 0, 1).astype(np.float32)

    def lidar(self, points: np.ndarray) -> np.ndarray:
        cells = self.scene.bev_cells
        counts, _ = lidar_bev(points, (cells, cells), self.scene.bev_bounds())
        return minmax_normalize(counts)[None].astype(np.float32)

    def radar(self, cube: np.ndarray) -> np.ndarray:
        g = self.scene.angle_bins
        return radar_maps(cube, g, g).astype(np.float32)

    def gps(self, latlon: np.ndarray) -> np.ndarray:
        origin = (self.scene.origin_lat, self.scene.origin_lon)
        out = np.empty((2, 2), dtype=np.float32)
        for i in range(2):
            east, north = gps_to_local(tuple(latlon[i]), origin)
            # fixed scene bounds to [0, 1]; per-sample min-max would erase
            # the absolute position the beam depends on
            out[i, 0] = 0.5 + east / (2.0 * self.scene.gps_scale)
            out[i, 1] = 0.5 + north / (2.0 * self.scene.gps_scale)
        return out

    def beam(self, history: np.ndarray) -> np.ndarray:
        return beam_normalize(history, self.scene.codebook).astype(np.float32)

    def window(self, w: SampleWindow) -> dict[str, np.ndarray]:
        return {
            "image": self.image(w.image),
            "lidar": self.lidar(w.lidar),
            "radar": self.radar(w.radar),
            "beam": self.beam(w.beam_history),
            "gps": self.gps(w.gps),
        }


def stack_features(feats: list[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    return {k: np.stack([f[k] for f in feats]) for k in feats[0]}


def featurize_windows(windows: list[SampleWindow], scene: SceneParams
                      ) -> tuple[dict[str, np.ndarray], np.ndarray,
                                 np.ndarray, list[str]]:
    """Batched features, labels, stored availability and scenario tags."""
    fx = FeatureExtractor(scene)
    feats = stack_features([fx.window(w) for w in windows])
    labels = np.array([w.beam_label for w in windows], dtype=np.int64)
    avail = np.stack([w.avail for w in windows]).astype(np.int64)
    tags = [w.scenario for w in windows]
    return feats, labels, avail, tags
