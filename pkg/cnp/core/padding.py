"""
Reflect padding to pyramid-compatible sizes and the matching crop.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from ..utils.error_types import ConfigurationError
from .tensor import Tensor


@dataclass(frozen=True)
class CropRecord:
    """Original spatial size of a padded image."""
    height: int
    width: int


def padded_size(size: int, multiple: int) -> int:
    return -(-size // multiple) * multiple


def pad_reflect(image: Union[np.ndarray, Tensor], multiple: int) -> Tuple[np.ndarray, CropRecord]:
    """
    Reflect-pad the bottom and right edges of a (..., H, W) array up to the
    next multiple of ``multiple``.
    """
    if multiple < 1:
        raise ConfigurationError(f"padding multiple must be >= 1, got {multiple}")
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    height, width = data.shape[-2], data.shape[-1]
    pad_h = padded_size(height, multiple) - height
    pad_w = padded_size(width, multiple) - width
    record = CropRecord(height, width)
    if pad_h == 0 and pad_w == 0:
        return data, record
    widths = [(0, 0)] * (data.ndim - 2) + [(0, pad_h), (0, pad_w)]
    mode = 'reflect' if min(height, width) > 1 else 'edge'
    return np.pad(data, widths, mode=mode), record


def crop_to(image: np.ndarray, record: CropRecord) -> np.ndarray:
    """Undo pad_reflect."""
    return image[..., :record.height, :record.width]
