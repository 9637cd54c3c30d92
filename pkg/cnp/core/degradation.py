"""
Synthetic corruption protocols.

depth-holes     rectangles plus random-walk blobs removed from a depth map,
                Gaussian noise on the surviving values; input is
                [gray, holed depth, mask].
sparse-visible  a random 5% of pixels kept, grown by a diamond structuring
                element; input is [visible image, mask].
additive-noise  optional Poisson shot noise then Gaussian noise, clipped to
                [0, 1]; input is [noisy image, ones].

The target is always the clean channel(s), untouched.
"""

from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from config.constants import DegradationSpec, degradation_problems
from ..utils.error_handler import ErrorHandler
from ..utils.error_types import ConfigurationError
from .tensor import Tensor


def hole_mask(shape: Tuple[int, int], spec: DegradationSpec,
              rng: np.random.Generator) -> np.ndarray:
    """1 where depth survives, 0 inside holes."""
    height, width = shape
    holes = np.zeros(shape, dtype=bool)
    for _ in range(spec.hole_count):
        side_h = min(int(rng.integers(spec.hole_min_side, spec.hole_max_side + 1)), height)
        side_w = min(int(rng.integers(spec.hole_min_side, spec.hole_max_side + 1)), width)
        top = int(rng.integers(0, height - side_h + 1))
        left = int(rng.integers(0, width - side_w + 1))
        holes[top:top + side_h, left:left + side_w] = True

    fraction = rng.uniform(spec.blob_fraction_min, spec.blob_fraction_max)
    target = int(fraction * height * width)
    if target > 0:
        holes |= _random_walk_blobs(shape, target, spec.blob_brush, rng)
    return (~holes).astype(np.float32)


def _random_walk_blobs(shape, target: int, brush: int, rng: np.random.Generator) -> np.ndarray:
    height, width = shape
    blobs = np.zeros(shape, dtype=bool)
    covered = 0
    walk_length = 4 * max(height, width)
    budget = 50 * height * width
    moves = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)])
    row = col = 0
    for step in range(budget):
        if covered >= target:
            break
        if step % walk_length == 0:
            row, col = int(rng.integers(0, height)), int(rng.integers(0, width))
        dr, dc = moves[rng.integers(0, 4)]
        row = min(max(row + dr, 0), height - 1)
        col = min(max(col + dc, 0), width - 1)
        patch = blobs[max(row - brush, 0):row + brush + 1, max(col - brush, 0):col + brush + 1]
        covered += int((~patch).sum())
        patch[...] = True
    return blobs


def visible_seeds(shape: Tuple[int, int], spec: DegradationSpec,
                  rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(visible_fraction) pixel visibility."""
    return rng.random(shape) < spec.visible_fraction


def dilate_visible(seeds: np.ndarray, radius: int) -> np.ndarray:
    """
    Grow the visible set by ``radius`` pixels of total extent.

    The structuring element is a diamond of city-block radius radius // 2,
    so a lone seed at the default radius 4 becomes 13 pixels and 5% seeds
    cover about half the image.
    """
    half = radius // 2
    if half <= 0:
        return seeds.copy()
    diamond = ndimage.iterate_structure(ndimage.generate_binary_structure(2, 1), half)
    return ndimage.binary_dilation(seeds, structure=diamond)


def _check_binary(mask: np.ndarray) -> None:
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ConfigurationError("mask must be binary (only 0 and 1 values)")


def degrade(clean: np.ndarray, spec: DegradationSpec,
            mask: Optional[np.ndarray] = None) -> Tuple[Tensor, Tensor]:
    """
    Corrupt a clean (C, H, W) stack.

    Returns (input, target) as 1 x C x H x W tensors. For depth-holes the
    stack must be [gray, depth]; an explicit binary ``mask`` replaces the
    random holes.
    """
    ErrorHandler.raise_if_problems(degradation_problems(spec), 'degradation spec')
    clean = np.asarray(clean, dtype=np.float32)
    if clean.ndim == 2:
        clean = clean[None]
    shape = clean.shape[1:]
    rng = np.random.default_rng(spec.seed)

    if spec.kind == 'depth-holes':
        if clean.shape[0] != 2:
            raise ConfigurationError(
                f"depth-holes needs a [gray, depth] stack, got {clean.shape[0]} channels")
        gray, depth = clean
        if mask is None:
            mask = hole_mask(shape, spec, rng)
        else:
            mask = np.asarray(mask, dtype=np.float32)
            _check_binary(mask)
        noisy = depth
        if spec.depth_noise_sigma > 0:
            noisy = depth + rng.normal(0.0, spec.depth_noise_sigma, size=shape)
        holed = np.clip(noisy, 0.0, 1.0) * mask
        inputs = np.stack([gray, holed, mask])
        target = depth[None]
    elif spec.kind == 'sparse-visible':
        mask = dilate_visible(visible_seeds(shape, spec, rng), spec.dilate_radius).astype(np.float32)
        inputs = np.concatenate([clean * mask[None], mask[None]])
        target = clean
    else:
        noisy = clean.astype(np.float64)
        if spec.poisson:
            noisy = rng.poisson(noisy * spec.photon_scale) / spec.photon_scale
        if spec.gaussian_sigma > 0:
            noisy = noisy + rng.normal(0.0, spec.gaussian_sigma, size=clean.shape)
        noisy = np.clip(noisy, 0.0, 1.0)
        mask = np.ones(shape, dtype=np.float32)
        inputs = np.concatenate([noisy, mask[None]])
        target = clean

    return (Tensor(inputs[None].astype(np.float32)),
            Tensor(np.array(target, dtype=np.float32)[None]))
