"""
Unit tests for cnp.io.pnm
"""
import numpy as np
import pytest

from cnp.io.pnm import (
    PnmImage, array_to_pnm, encode_pnm, parse_pnm, pnm_to_array, read_pnm, write_pnm
)
from cnp.utils.error_types import PnmParseError

pytestmark = pytest.mark.unit


class TestParse:
    """Test header and payload parsing"""

    def test_p5_8bit(self):
        """Test a minimal 8-bit gray image"""
        image = parse_pnm(b"P5\n3 2\n255\n" + bytes(range(6)))
        assert (image.format, image.width, image.height, image.maxval) == ('P5', 3, 2, 255)
        np.testing.assert_array_equal(image.pixels, [[0, 1, 2], [3, 4, 5]])

    def test_p5_16bit_big_endian(self):
        """Test 16-bit samples are read most significant byte first"""
        image = parse_pnm(b"P5 2 1 65535\n" + b"\x01\x02\xff\xfe")
        assert image.pixels.dtype == np.uint16
        np.testing.assert_array_equal(image.pixels, [[0x0102, 0xfffe]])

    def test_p6_channels(self):
        """Test P6 pixels are (H, W, 3)"""
        image = parse_pnm(b"P6\n1 1\n255\n" + b"\x0a\x14\x1e")
        np.testing.assert_array_equal(image.pixels[0, 0], [10, 20, 30])

    def test_comments_between_tokens(self):
        """Test comments may appear between header tokens"""
        data = b"P5\n# made by hand\n2 # width done\n1\n# maxval next\n255\n" + b"\x07\x08"
        np.testing.assert_array_equal(parse_pnm(data).pixels, [[7, 8]])

    def test_single_whitespace_after_maxval(self):
        """Test exactly one whitespace byte separates the header from pixels"""
        # the payload starts with a byte that looks like whitespace
        image = parse_pnm(b"P5 2 1 255\n" + b"\x0a\x0b")
        np.testing.assert_array_equal(image.pixels, [[10, 11]])

    def test_trailing_bytes_ignored(self):
        """Test bytes past the payload are not part of the image"""
        image = parse_pnm(b"P5 1 1 255\n\x05extra")
        assert image.pixels.shape == (1, 1)


class TestParseErrors:
    """Test malformed inputs report an offset"""

    def test_bad_magic(self):
        """Test non-P5/P6 magic fails at offset 0"""
        with pytest.raises(PnmParseError) as excinfo:
            parse_pnm(b"P2\n1 1\n255\n0")
        assert excinfo.value.offset == 0

    def test_unsupported_maxval(self):
        """Test maxvals other than 255 and 65535 are rejected"""
        with pytest.raises(PnmParseError, match="maxval"):
            parse_pnm(b"P5 1 1 1023\n\x00\x00")

    def test_non_numeric_header(self):
        """Test non-decimal header tokens report where they start"""
        with pytest.raises(PnmParseError) as excinfo:
            parse_pnm(b"P5 x1 1 255\n\x00")
        assert excinfo.value.offset == 3

    def test_truncated_payload(self):
        """Test short pixel data is reported with the byte offset reached"""
        with pytest.raises(PnmParseError, match="truncated") as excinfo:
            parse_pnm(b"P5 2 2 255\n\x00\x01")
        assert excinfo.value.offset == 13

    def test_truncated_header(self):
        """Test a file that ends inside its header"""
        with pytest.raises(PnmParseError, match="end of header"):
            parse_pnm(b"P5 2 2")

    def test_missing_separator(self):
        """Test the byte after maxval must be whitespace"""
        with pytest.raises(PnmParseError, match="whitespace"):
            parse_pnm(b"P5 1 1 255")

    def test_unterminated_comment(self):
        """Test a comment running to end of file"""
        with pytest.raises(PnmParseError, match="comment"):
            parse_pnm(b"P5 1 # no newline")


class TestWrite:
    """Test encoding and file round trips"""

    def test_encode_header(self):
        """Test the written header layout"""
        image = PnmImage('P5', 255, np.array([[1, 2]], dtype=np.uint8))
        assert encode_pnm(image) == b"P5\n2 1\n255\n\x01\x02"

    @pytest.mark.parametrize("maxval,shape", [(255, (5, 7)), (65535, (4, 3)), (255, (2, 3, 3))])
    def test_file_round_trip(self, tmp_path, maxval, shape):
        """Test written files read back to identical pixels"""
        dtype = np.uint16 if maxval > 255 else np.uint8
        pixels = np.random.default_rng(0).integers(0, maxval + 1, size=shape).astype(dtype)
        image = PnmImage('P6' if len(shape) == 3 else 'P5', maxval, pixels)
        path = write_pnm(image, tmp_path / 'sub' / 'img.pnm')
        restored = read_pnm(path)
        assert restored.maxval == maxval and restored.format == image.format
        np.testing.assert_array_equal(restored.pixels, pixels)

    def test_read_missing_file(self, tmp_path):
        """Test reading a missing file raises FileNotFoundError"""
        with pytest.raises(FileNotFoundError):
            read_pnm(tmp_path / 'missing.pgm')

    def test_parse_error_carries_path(self, tmp_path):
        """Test file parse errors carry the file context"""
        path = tmp_path / 'bad.pgm'
        path.write_bytes(b"P9")
        with pytest.raises(PnmParseError) as excinfo:
            read_pnm(path)
        assert excinfo.value.context['file_path'] == str(path)


class TestArrayConversion:
    """Test float conversion and quantization"""

    def test_normalized_values(self):
        """Test pixels scale to [0, 1] by maxval"""
        values = pnm_to_array(PnmImage('P5', 65535, np.array([[0, 65535]], dtype=np.uint16)))
        np.testing.assert_array_equal(values, [[[0.0, 1.0]]])

    def test_quantization_error(self):
        """Test 16-bit quantization error stays under half a step"""
        values = np.random.default_rng(1).random((1, 6, 6))
        restored = pnm_to_array(array_to_pnm(values, 65535))
        assert np.abs(restored - values).max() <= 0.5 / 65535 + 1e-7

    def test_color_layout(self):
        """Test (3, H, W) arrays become P6 and come back channel-first"""
        values = np.zeros((3, 2, 2))
        values[2] = 1.0
        image = array_to_pnm(values, 255)
        assert image.format == 'P6'
        np.testing.assert_array_equal(pnm_to_array(image), values)

    def test_clipping(self):
        """Test out-of-range values are clipped"""
        image = array_to_pnm(np.array([[-0.5, 1.5]]), 255)
        np.testing.assert_array_equal(image.pixels, [[0, 255]])

    def test_bad_shape(self):
        """Test arrays that are not images are rejected"""
        with pytest.raises(PnmParseError):
            array_to_pnm(np.zeros((2, 2, 2)), 255)
