"""
Procedural piecewise-smooth scenes with aligned color and depth.

Each scene is a tilted background plane overlaid with rectangles and
ellipses drawn far-to-near, each carrying its own depth plane and a lightly
textured color, so depth discontinuities coincide with image edges.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from config.constants import SceneConfig, get_config

config = get_config()

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass
class Scene:
    rgb: np.ndarray    # (3, H, W) in [0, 1]
    depth: np.ndarray  # (H, W) in [0, 1]

    @property
    def gray(self) -> np.ndarray:
        return to_gray(self.rgb)


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luminance of a (3, H, W) image."""
    return np.tensordot(LUMA_WEIGHTS, rgb.astype(np.float32), axes=([0], [0]))


def _shape_mask(kind: str, yy, xx, cy, cx, hy, hx) -> np.ndarray:
    if kind == 'rect':
        return (np.abs(yy - cy) <= hy) & (np.abs(xx - cx) <= hx)
    return ((yy - cy) / hy) ** 2 + ((xx - cx) / hx) ** 2 <= 1.0


def generate_scene(height: int, width: int, rng: np.random.Generator,
                   scene_config: Optional[SceneConfig] = None) -> Scene:
    scene_config = scene_config or config.scenes
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    extent = float(max(height, width))
    ny, nx = yy / extent, xx / extent

    gy, gx = rng.uniform(-0.15, 0.15, size=2)
    depth = 0.85 + gy * (ny - 0.5) + gx * (nx - 0.5)
    base = rng.uniform(0.2, 0.8, size=3)
    tilt = rng.uniform(-0.2, 0.2, size=(3, 2))
    rgb = base[:, None, None] + tilt[:, 0, None, None] * (ny - 0.5) + tilt[:, 1, None, None] * (nx - 0.5)

    count = int(rng.integers(scene_config.min_shapes, scene_config.max_shapes + 1))
    near_depths = np.sort(rng.uniform(0.1, 0.7, size=count))[::-1]
    half_min = scene_config.min_shape_side / 2.0
    half_max = max(half_min + 1.0, extent / 4.0)
    for shape_depth in near_depths:
        kind = 'rect' if rng.random() < 0.5 else 'ellipse'
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        hy, hx = rng.uniform(half_min, half_max, size=2)
        mask = _shape_mask(kind, yy, xx, cy, cx, hy, hx)
        sy, sx = rng.uniform(-0.1, 0.1, size=2)
        depth = np.where(mask, shape_depth + sy * (yy - cy) / extent + sx * (xx - cx) / extent, depth)

        color = rng.uniform(0.0, 1.0, size=3)
        angle, frequency = rng.uniform(0, np.pi), rng.uniform(4, 16)
        texture = scene_config.texture_amplitude * np.sin(
            2 * np.pi * frequency * (nx * np.cos(angle) + ny * np.sin(angle)))
        rgb = np.where(mask[None], color[:, None, None] + texture[None], rgb)

    return Scene(rgb=np.clip(rgb, 0.0, 1.0).astype(np.float32),
                 depth=np.clip(depth, 0.0, 1.0).astype(np.float32))
