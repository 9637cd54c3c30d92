"""
Unit tests for cnp.core.graph
"""
from dataclasses import replace

import numpy as np
import pytest

from config.constants import InitConfig, get_config
from cnp.core.graph import (
    build, build_cnp, build_simple_multiscale, build_single_level, forward, init_params,
    param_count, rebuild
)
from cnp.core import tensor as T
from cnp.core.tensor import Tensor
from cnp.core.training import loss, psnr
from cnp.utils.error_types import ConfigurationError
from tests.fixtures.sample_data import random_array, small_config, small_graph, unit_image

pytestmark = pytest.mark.unit


def bilinear_upsample(x, boundary):
    """Separable x2 linear interpolation; the sample past the trailing edge is zero or replicated."""
    for axis in (2, 3):
        pad = [(0, 0)] * 4
        pad[axis] = (0, 1)
        padded = np.pad(x, pad, mode=boundary)
        head = np.take(padded, range(x.shape[axis]), axis=axis)
        tail = np.take(padded, range(1, x.shape[axis] + 1), axis=axis)
        out = np.stack([head, 0.5 * (head + tail)], axis=axis + 1)
        shape = list(x.shape)
        shape[axis] *= 2
        x = out.reshape(shape)
    return x


def expected_cnp_params(levels, F, E, S, in_c, out_c):
    conv = lambda i, o, k: o * i * k * k + o
    total = 0
    for level in range(levels):
        total += conv(in_c if level == 0 else F, F, 3) + conv(F, F, 3) + 2 * F
        total += conv(F, E, 1) + S * (conv(E, E, 3) + E) + conv(E, F, 1)
        if level > 0:
            total += conv(F, F, 3)
    total += F + conv(F, F, 3) + F + conv(F, out_c, 3)
    return total


class TestBuildCnp:
    """Test pyramid construction"""

    @pytest.mark.parametrize("levels", [1, 2, 3, 5])
    def test_node_structure(self, levels):
        """Test one downsampling and one upsampling per extra level"""
        graph = build_cnp(small_config(levels))
        ops = [node.op for node in graph.nodes]
        assert ops.count('maxpool') == levels - 1
        assert ops.count('deconv') == levels - 1
        assert ops.count('fuse') == levels - 1
        assert graph.period == 2 ** (levels - 1)
        assert graph.output == 'residual.add'

    @pytest.mark.parametrize("levels,transforms", [(1, 1), (3, 1), (3, 3), (5, 2)])
    def test_param_count_formula(self, levels, transforms):
        """Test the exact parameter count of the sum-fusion pyramid"""
        graph = build_cnp(small_config(levels, transform_layers=transforms))
        assert param_count(graph) == expected_cnp_params(levels, 8, 4, transforms, 3, 1)

    def test_level_depth_grows(self):
        """Test deeper levels pass through more extraction modules"""
        graph = build_cnp(small_config(4))
        for level in range(4):
            assert f"l{level}.extract.conv1" in graph.by_name
        assert graph.by_name['l3.extract.conv1'].scale == 3

    def test_concat_fusion_adds_projection(self):
        """Test concat fusion doubles channels and projects them back"""
        graph = build_cnp(small_config(3, fusion_mode='concat'))
        assert graph.by_name['l1.recon.fuse'].out_channels == 16
        assert graph.by_name['l1.recon.project'].out_channels == 8

    def test_strided_conv_downsampling(self):
        """Test strided-conv replaces max pooling"""
        graph = build_cnp(small_config(3, downsample_mode='strided-conv'))
        down = graph.by_name['l1.down']
        assert down.op == 'conv' and down.stride == 2

    def test_invalid_config_raises(self):
        """Test configuration problems become ConfigurationError"""
        with pytest.raises(ConfigurationError, match="levels"):
            build_cnp(small_config(0))
        with pytest.raises(ConfigurationError, match="residual"):
            build_cnp(small_config(2, residual_channel=3))

    @pytest.mark.parametrize("levels", [1, 2, 3, 4])
    def test_deeper_pyramid_extends_descent(self, levels):
        """Test one more level keeps every descent layer with the same name and shape"""
        descent = lambda graph: [(node.name, node.param_shapes) for node in graph.nodes
                                 if '.extract.' in node.name or node.name.endswith('.down')]
        shallow = descent(build_cnp(small_config(levels)))
        deep = descent(build_cnp(small_config(levels + 1)))
        assert deep[:len(shallow)] == shallow
        assert {name.split('.')[0] for name, _ in deep[len(shallow):]} == {f"l{levels}"}

    def test_rebuild_from_descriptor(self):
        """Test a descriptor rebuilds the same architecture"""
        graph = build_cnp(small_config(3, fusion_mode='concat'))
        clone = rebuild(graph.descriptor())
        assert [n.name for n in clone.nodes] == [n.name for n in graph.nodes]
        assert param_count(clone) == param_count(graph)


class TestBaselines:
    """Test single-level and simple-multiscale builders"""

    def test_single_level_structure(self):
        """Test (layers - 1) 3x3 convs plus a 1x1 output conv"""
        graph = build_single_level(8, small_config())
        convs = [n for n in graph.nodes if n.op == 'conv']
        assert len(convs) == 8
        assert convs[-1].kernel == 1
        assert graph.period == 1

    def test_single_level_needs_two_layers(self):
        """Test single-level rejects fewer than two layers"""
        with pytest.raises(ConfigurationError):
            build_single_level(1)

    def test_simple_multiscale_budget_matched(self):
        """Test the branch width brings the parameter count within 10% of the pyramid"""
        model_config = replace(get_config().model, levels=3)
        target = param_count(build_cnp(model_config))
        graph = build_simple_multiscale(model_config)
        assert abs(param_count(graph) - target) <= 0.1 * target

    def test_simple_multiscale_budget_at_five_levels(self):
        """Test the chosen branch width is the closest match to the default five-level pyramid"""
        model_config = get_config().model
        target = param_count(build_cnp(model_config))
        graph = build_simple_multiscale(model_config)
        gap = abs(param_count(graph) - target)
        assert gap <= 0.1 * target
        for width in (graph.branch_channels - 1, graph.branch_channels + 1):
            neighbour = build_simple_multiscale(model_config, branch_channels=width)
            assert abs(param_count(neighbour) - target) >= gap

    def test_simple_multiscale_forward_shape(self):
        """Test simple multiscale output keeps the input size"""
        graph = build_simple_multiscale(small_config(3), branch_channels=6)
        init_params(graph, 0)
        out = forward(graph, unit_image((1, 3, 16, 16)))
        assert out.shape == (1, 1, 16, 16)

    def test_build_unknown_builder(self):
        """Test build rejects unknown builder names"""
        with pytest.raises(ConfigurationError, match="builder"):
            build('unet')


class TestInitialization:
    """Test deterministic initialization"""

    def test_same_seed_same_params(self):
        """Test initialization is a pure function of the seed"""
        a, b, c = small_graph(seed=3), small_graph(seed=3), small_graph(seed=4)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name].data, b.params[name].data)
        assert any(not np.array_equal(a.params[n].data, c.params[n].data) for n in a.params)

    def test_deconv_starts_bilinear(self):
        """Test transposed convs start close to per-channel bilinear kernels"""
        weight = small_graph(3).params['l1.recon.up.weight'].data
        np.testing.assert_allclose(weight[0, 0], [[0.25, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.25]], atol=0.01)
        assert abs(weight[0, 1]).max() < 0.01

    def test_deconv_upsamples_bilinearly(self):
        """Test a freshly initialized transposed conv matches x2 bilinear upsampling with a zero trailing edge"""
        graph = small_graph(3)
        x = unit_image((1, 8, 8, 8), seed=1)
        up = T.transposed_conv2d(Tensor(x), graph.params['l1.recon.up.weight'],
                                 graph.params['l1.recon.up.bias'], stride=2, padding=1, output_padding=1)
        zero_edge = psnr(up.data, bilinear_upsample(x, 'constant'))
        replicated_edge = psnr(up.data, bilinear_upsample(x, 'edge'))
        assert zero_edge > 30.0
        assert replicated_edge < zero_edge

    def test_he_normal_spread(self):
        """Test a 56-channel 3x3 conv weight has std within 15% of sqrt(2 / fan_in)"""
        graph = build_cnp()
        init_params(graph, 0)
        weight = graph.params['l1.extract.conv2.weight'].data
        assert weight.shape == (56, 56, 3, 3)
        assert weight.std() == pytest.approx(np.sqrt(2.0 / (56 * 9)), rel=0.15)

    def test_prelu_slopes(self):
        """Test PReLU slopes start at the configured value"""
        graph = small_graph(2)
        np.testing.assert_allclose(graph.params['l0.extract.prelu1.slope'].data, 0.25)

    def test_output_scale(self):
        """Test the final conv is scaled down relative to a full He init"""
        small = small_graph(2).params['adjust.conv2.weight'].data
        graph = build_cnp(small_config(2))
        init_params(graph, 0, InitConfig(output_scale=1.0))
        full = graph.params['adjust.conv2.weight'].data
        np.testing.assert_allclose(small, full * 1e-3, rtol=1e-5)


class TestForward:
    """Test forward evaluation"""

    @pytest.mark.parametrize("levels", [1, 3, 5])
    def test_output_shape(self, levels):
        """Test the output has the input size and the output channel count"""
        graph = small_graph(levels)
        out = forward(graph, unit_image((2, 3, 32, 48)))
        assert out.shape == (2, 1, 32, 48)

    def test_indivisible_input(self):
        """Test inputs not divisible by the period point at pad_reflect"""
        with pytest.raises(ConfigurationError, match="pad_reflect"):
            forward(small_graph(3), unit_image((1, 3, 18, 16)))

    def test_wrong_channel_count(self):
        """Test forward checks the input channel count"""
        with pytest.raises(ConfigurationError, match="input channels"):
            forward(small_graph(2), unit_image((1, 2, 16, 16)))

    def test_zero_adjustment_is_identity(self):
        """Test a residual model with a zero output conv returns its residual channel"""
        graph = small_graph(3)
        graph.params['adjust.conv2.weight'].data[...] = 0.0
        graph.params['adjust.conv2.bias'].data[...] = 0.0
        x = unit_image((1, 3, 16, 16))
        np.testing.assert_array_equal(forward(graph, x).data[0, 0], x[0, 1])

    def test_blocking(self):
        """Test blocking from the top level changes nothing and blocking level 1 does"""
        graph = small_graph(3)
        graph.params['adjust.conv2.weight'].data *= 1000.0
        x = unit_image((1, 3, 16, 16), seed=2)
        full = forward(graph, x).data
        np.testing.assert_array_equal(forward(graph, x, blocked_from_level=3).data, full)
        assert not np.allclose(forward(graph, x, blocked_from_level=1).data, full)

    def test_astype_copies(self):
        """Test astype returns a float64 copy with equal values"""
        graph = small_graph(2)
        wide = graph.astype(np.float64)
        assert wide.dtype == np.float64 and graph.dtype == np.float32
        x = unit_image((1, 3, 8, 8))
        np.testing.assert_allclose(forward(wide, x).data, forward(graph, x).data, rtol=1e-4, atol=1e-6)


class TestGradientFlow:
    """Test every parameter takes part in the loss"""

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("fusion_mode", ['sum', 'concat'])
    def test_every_parameter_gets_gradient(self, seed, fusion_mode):
        """Test one backward pass leaves a nonzero gradient on every parameter"""
        graph = small_graph(3, seed=seed, fusion_mode=fusion_mode).astype(np.float64)
        x = unit_image((2, 3, 32, 32), seed=seed).astype(np.float64)
        target = Tensor(random_array((2, 1, 32, 32), seed + 50))
        T.backward(loss(forward(graph, x), target))
        silent = [param.name for param in graph.parameters() if not np.any(param.grad)]
        assert silent == []
