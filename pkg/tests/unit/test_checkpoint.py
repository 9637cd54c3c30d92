"""
Unit tests for cnp.io.checkpoint
"""
import struct

import numpy as np
import pytest

from cnp.core.graph import forward, param_count
from cnp.core.training import evaluate
from cnp.io import checkpoint
from cnp.io.checkpoint import decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from cnp.utils.error_types import (
    CheckpointCrcError, CheckpointError, CheckpointMagicError, CheckpointTruncatedError,
    CheckpointVersionError
)
from tests.fixtures.sample_data import depth_samples, small_graph, unit_image

pytestmark = pytest.mark.unit


@pytest.fixture
def graph():
    model = small_graph(2, seed=7, fusion_mode='concat')
    model.metadata = {'task': 'depth', 'step': 12}
    return model


@pytest.fixture
def payload(graph):
    return encode_checkpoint(graph)


class TestRoundTrip:
    """Test save then load restores the model"""

    def test_parameters_identical(self, graph, payload):
        """Test every parameter is restored bit for bit"""
        restored = decode_checkpoint(payload)
        assert list(restored.params) == list(graph.params)
        for name, param in graph.params.items():
            np.testing.assert_array_equal(restored.params[name].data, param.data)

    def test_architecture_and_metadata(self, graph, payload):
        """Test the rebuilt graph has the same config and metadata"""
        restored = decode_checkpoint(payload)
        assert restored.config == graph.config
        assert restored.builder == graph.builder
        assert param_count(restored) == param_count(graph)
        assert restored.metadata == {'task': 'depth', 'step': 12}

    def test_same_predictions(self, graph, payload):
        """Test the restored model computes the same output"""
        x = unit_image((1, 3, 16, 16))
        np.testing.assert_array_equal(forward(decode_checkpoint(payload), x).data, forward(graph, x).data)

    def test_file_round_trip(self, graph, tmp_path):
        """Test save_checkpoint and load_checkpoint through a file"""
        path = save_checkpoint(graph, tmp_path / 'runs' / 'model.cnpk')
        assert path.exists()
        assert load_checkpoint(path).metadata['task'] == 'depth'

    def test_five_level_model_scores_the_same(self, tmp_path):
        """Test a saved and reloaded five-level model reproduces the in-memory held-out PSNR"""
        model = small_graph(5, seed=2)
        model.params['adjust.conv2.weight'].data *= 100.0
        samples = depth_samples(2, 32)
        restored = load_checkpoint(save_checkpoint(model, tmp_path / 'five.cnpk'))
        assert evaluate(restored, samples) == evaluate(model, samples)

    def test_float64_stored_as_float32(self, graph):
        """Test a float64 graph is written as float32 values"""
        restored = decode_checkpoint(encode_checkpoint(graph.astype(np.float64)))
        assert restored.dtype == np.float32
        name = next(iter(graph.params))
        np.testing.assert_array_equal(restored.params[name].data, graph.params[name].data)

    def test_layout_prefix(self, payload):
        """Test the file starts with the magic and version 1"""
        assert payload[:4] == b'CNPK'
        assert struct.unpack('<I', payload[4:8])[0] == 1

    def test_configured_dtype_code(self, graph, payload, mocker):
        """Test tensors are written with the configured dtype code and read back"""
        settings = checkpoint.config.checkpoint
        mocker.patch.dict(settings.dtype_codes, {1: '<f8'})
        mocker.patch.object(settings, 'stored_dtype_code', 1)
        wide = encode_checkpoint(graph)
        assert len(wide) - len(payload) == 4 * param_count(graph)
        restored = decode_checkpoint(wide)
        for name, param in graph.params.items():
            np.testing.assert_array_equal(restored.params[name].data, param.data)

    def test_unknown_dtype_code(self, payload, mocker):
        """Test a dtype code missing from the configuration is rejected"""
        mocker.patch.dict(checkpoint.config.checkpoint.dtype_codes, {}, clear=True)
        with pytest.raises(CheckpointError, match="unsupported dtype code 0"):
            decode_checkpoint(payload)


class TestCorruption:
    """Test every failure mode is distinguished"""

    def test_flipped_byte(self, payload):
        """Test a flipped byte inside the tensor data fails the CRC"""
        damaged = bytearray(payload)
        damaged[-6] ^= 0xFF
        with pytest.raises(CheckpointCrcError):
            decode_checkpoint(bytes(damaged))

    def test_flipped_crc(self, payload):
        """Test a damaged trailer fails the CRC"""
        damaged = bytearray(payload)
        damaged[-1] ^= 0x01
        with pytest.raises(CheckpointCrcError):
            decode_checkpoint(bytes(damaged))

    def test_bad_magic(self, payload):
        """Test the wrong magic bytes"""
        with pytest.raises(CheckpointMagicError):
            decode_checkpoint(b'XNPK' + payload[4:])

    def test_unsupported_version(self, payload):
        """Test a newer format version is refused"""
        with pytest.raises(CheckpointVersionError, match="version 2"):
            decode_checkpoint(payload[:4] + struct.pack('<I', 2) + payload[8:])

    @pytest.mark.parametrize("cut", [2, 6, 10, 20, -2])
    def test_truncation(self, payload, cut):
        """Test files cut short anywhere report truncation"""
        end = cut if cut > 0 else len(payload) + cut
        with pytest.raises(CheckpointTruncatedError):
            decode_checkpoint(payload[:end])

    def test_truncated_inside_tensor_data(self, payload):
        """Test a cut through the tensor values reports truncation"""
        with pytest.raises(CheckpointTruncatedError):
            decode_checkpoint(payload[:len(payload) // 2])

    def test_trailing_bytes(self, payload):
        """Test bytes after the trailer are rejected"""
        with pytest.raises(CheckpointError, match="unexpected bytes"):
            decode_checkpoint(payload + b'\x00')

    def test_shape_mismatch(self, graph):
        """Test stored tensors must match the architecture"""
        name = next(iter(graph.params))
        graph.params[name].data = graph.params[name].data[:1]
        with pytest.raises(CheckpointError, match="architecture expects"):
            decode_checkpoint(encode_checkpoint(graph))

    def test_error_carries_path(self, payload, tmp_path):
        """Test load errors carry the file context"""
        path = tmp_path / 'bad.cnpk'
        path.write_bytes(payload[:10])
        with pytest.raises(CheckpointTruncatedError) as excinfo:
            load_checkpoint(path)
        assert excinfo.value.context['file_path'] == str(path)

    def test_missing_file(self, tmp_path):
        """Test a missing checkpoint raises FileNotFoundError"""
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / 'absent.cnpk')
