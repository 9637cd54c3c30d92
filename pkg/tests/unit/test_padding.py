"""
Unit tests for cnp.core.padding
"""
import numpy as np
import pytest

from cnp.core.padding import crop_to, pad_reflect, padded_size
from cnp.core.tensor import Tensor
from cnp.utils.error_types import ConfigurationError

pytestmark = pytest.mark.unit


class TestPadReflect:
    """Test reflect padding to the model period"""

    @pytest.mark.parametrize("size,multiple,expected", [(16, 8, 16), (17, 8, 24), (1, 4, 4), (5, 1, 5)])
    def test_padded_size(self, size, multiple, expected):
        """Test sizes round up to the next multiple"""
        assert padded_size(size, multiple) == expected

    def test_pads_bottom_right_only(self):
        """Test the original image stays in the top-left corner"""
        image = np.random.default_rng(0).random((2, 3, 13, 10))
        padded, record = pad_reflect(image, 8)
        assert padded.shape == (2, 3, 16, 16)
        np.testing.assert_array_equal(padded[..., :13, :10], image)
        assert (record.height, record.width) == (13, 10)

    def test_reflection(self):
        """Test padded columns mirror the columns left of the edge"""
        image = np.arange(24, dtype=np.float64).reshape(4, 6)
        padded, _ = pad_reflect(image, 4)
        np.testing.assert_array_equal(padded[0], [0, 1, 2, 3, 4, 5, 4, 3])

    def test_aligned_input_unchanged(self):
        """Test aligned inputs are returned as they are"""
        image = np.zeros((1, 8, 8))
        padded, _ = pad_reflect(Tensor(image), 4)
        assert padded.shape == (1, 8, 8)

    def test_single_pixel_uses_edge(self):
        """Test one-pixel dimensions repeat the pixel"""
        padded, _ = pad_reflect(np.full((1, 1, 1), 0.7), 4)
        np.testing.assert_array_equal(padded, np.full((1, 4, 4), 0.7))

    def test_invalid_multiple(self):
        """Test multiples below one are rejected"""
        with pytest.raises(ConfigurationError):
            pad_reflect(np.zeros((2, 2)), 0)

    def test_crop_undoes_padding(self):
        """Test crop_to restores the original size and values"""
        image = np.random.default_rng(1).random((3, 21, 19))
        padded, record = pad_reflect(image, 16)
        np.testing.assert_array_equal(crop_to(padded, record), image)
