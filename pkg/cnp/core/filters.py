"""
Reference image filters.

Box and Gaussian smoothing, a brute-force (joint) bilateral filter used to
produce filter-learning targets, and guided normalized-convolution hole
filling used as the classical depth-restoration baseline.
"""

from typing import Optional

import numpy as np
from scipy import ndimage

from config.constants import FILTER_KINDS, FilterConfig, get_config
from ..utils.error_types import ConfigurationError

config = get_config()


def _check_kernel(kernel_size: int) -> None:
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ConfigurationError(f"kernel size must be a positive odd number, got {kernel_size}")


def _per_channel(img: np.ndarray, fn) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return fn(img)
    return np.stack([fn(channel) for channel in img])


def gaussian_kernel(kernel_size: int, sigma: float) -> np.ndarray:
    _check_kernel(kernel_size)
    radius = kernel_size // 2
    offsets = np.arange(-radius, radius + 1)
    if sigma <= 0:
        taps = (offsets == 0).astype(np.float64)
    else:
        taps = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    kernel = np.outer(taps, taps)
    return kernel / kernel.sum()


def box_filter(img: np.ndarray, kernel_size: int) -> np.ndarray:
    _check_kernel(kernel_size)
    kernel = np.full((kernel_size, kernel_size), 1.0 / kernel_size ** 2)
    return _per_channel(img, lambda ch: ndimage.correlate(ch, kernel, mode='reflect'))


def gaussian_filter(img: np.ndarray, kernel_size: int, sigma: float) -> np.ndarray:
    kernel = gaussian_kernel(kernel_size, sigma)
    return _per_channel(img, lambda ch: ndimage.correlate(ch, kernel, mode='reflect'))


def _shifts(img: np.ndarray, radius: int):
    padded = np.pad(img, radius, mode='reflect')
    height, width = img.shape
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            yield dy, dx, padded[radius + dy:radius + dy + height, radius + dx:radius + dx + width]


def joint_bilateral_filter(img: np.ndarray, guide: np.ndarray, kernel_size: int,
                           sigma_spatial: float, sigma_range: float) -> np.ndarray:
    """
    Brute-force O(pixels * k^2) bilateral filter of a 2-D image with range
    weights taken from a 2-D guide (the image itself for a plain bilateral).
    """
    _check_kernel(kernel_size)
    img = np.asarray(img, dtype=np.float64)
    guide = np.asarray(guide, dtype=np.float64)
    if img.shape != guide.shape:
        raise ConfigurationError(f"guide shape {guide.shape} differs from image shape {img.shape}")
    radius = kernel_size // 2
    numerator = np.zeros_like(img)
    denominator = np.zeros_like(img)
    guide_shifts = _shifts(guide, radius)
    for (dy, dx, shifted), (_, _, guide_shifted) in zip(_shifts(img, radius), guide_shifts):
        spatial = np.exp(-(dy * dy + dx * dx) / (2.0 * sigma_spatial ** 2))
        weight = spatial * np.exp(-(guide_shifted - guide) ** 2 / (2.0 * sigma_range ** 2))
        numerator += weight * shifted
        denominator += weight
    return numerator / denominator


def bilateral_filter(img: np.ndarray, kernel_size: int, sigma_spatial: float,
                     sigma_range: float) -> np.ndarray:
    return _per_channel(img, lambda ch: joint_bilateral_filter(
        ch, ch, kernel_size, sigma_spatial, sigma_range))


def oracle_filter(img: np.ndarray, kind: str, params: Optional[FilterConfig] = None) -> np.ndarray:
    """Deterministic reference filter used to build (input, filtered) pairs."""
    params = params or config.filters
    if kind == 'box':
        return box_filter(img, params.kernel_size)
    if kind == 'gaussian':
        return gaussian_filter(img, params.kernel_size, params.sigma_spatial)
    if kind == 'bilateral':
        return bilateral_filter(img, params.kernel_size, params.sigma_spatial, params.sigma_range)
    raise ConfigurationError(f"unknown filter kind '{kind}', expected one of {FILTER_KINDS}")


def fill_holes_normalized(depth: np.ndarray, mask: np.ndarray, guide: np.ndarray,
                          params: Optional[FilterConfig] = None) -> np.ndarray:
    """
    Fill mask-0 pixels by guided normalized convolution.

    Each pass averages known depth in a k x k window, weighted spatially and
    by guide similarity, and fills every hole pixel with nonzero support;
    large holes close from the border inwards over successive passes. Known
    pixels are never changed.
    """
    params = params or config.filters
    _check_kernel(params.kernel_size)
    filled = np.asarray(depth, dtype=np.float64) * mask
    known = np.asarray(mask, dtype=np.float64).copy()
    guide = np.asarray(guide, dtype=np.float64)
    radius = params.kernel_size // 2
    max_passes = max(params.fill_max_passes, int(np.ceil(max(depth.shape) / max(radius, 1))))
    for _ in range(max_passes):
        missing = known == 0
        if not missing.any():
            break
        numerator = np.zeros_like(filled)
        denominator = np.zeros_like(filled)
        pairs = zip(_shifts(filled, radius), _shifts(known, radius), _shifts(guide, radius))
        for (dy, dx, value), (_, _, support), (_, _, guide_shifted) in pairs:
            weight = np.exp(-(dy * dy + dx * dx) / (2.0 * params.sigma_spatial ** 2))
            weight = weight * np.exp(-(guide_shifted - guide) ** 2 / (2.0 * params.sigma_range ** 2))
            numerator += weight * support * value
            denominator += weight * support
        newly = missing & (denominator > 1e-12)
        if not newly.any():
            break
        filled[newly] = numerator[newly] / denominator[newly]
        known[newly] = 1.0
    if (known == 0).any() and (known == 1).any():
        filled[known == 0] = filled[known == 1].mean()
    return filled
