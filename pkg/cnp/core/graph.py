"""
Pyramid model construction, initialization and forward evaluation.

A model is an ordered list of named nodes (a DAG). Each node records its op,
its inputs, the pyramid level it belongs to, its resolution scale and its
kernel geometry, which is everything the analysis module needs. Parameters
are named "<node>.weight", "<node>.bias" and "<node>.slope".
"""

from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.constants import CnpConfig, InitConfig, get_config, model_problems
from ..utils.error_handler import ErrorHandler
from ..utils.error_types import ConfigurationError
from . import tensor as T
from .tensor import Parameter, Tensor

config = get_config()

BUILDERS = ('cnp', 'single-level', 'simple-multiscale')


@dataclass
class GraphNode:
    """One layer of a model graph."""
    name: str
    op: str
    inputs: Tuple[str, ...]
    level: int
    scale: int
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    in_channels: int = 0
    out_channels: int = 0
    mode: str = ''
    start: int = 0

    @property
    def param_shapes(self) -> Dict[str, Tuple[int, ...]]:
        if self.op == 'conv':
            return {f"{self.name}.weight": (self.out_channels, self.in_channels, self.kernel, self.kernel),
                    f"{self.name}.bias": (self.out_channels,)}
        if self.op == 'deconv':
            return {f"{self.name}.weight": (self.in_channels, self.out_channels, self.kernel, self.kernel),
                    f"{self.name}.bias": (self.out_channels,)}
        if self.op == 'prelu':
            return {f"{self.name}.slope": (self.out_channels,)}
        return {}


class ModelGraph:
    """Built model: node list, named parameters and the architecture descriptor."""

    def __init__(self, nodes: List[GraphNode], model_config: CnpConfig, builder: str,
                 layers: Optional[int] = None, branch_channels: Optional[int] = None,
                 dtype=np.float32):
        names = [node.name for node in nodes]
        if len(set(names)) != len(names):
            raise ConfigurationError("graph node names must be unique")
        self.nodes = nodes
        self.by_name = {node.name: node for node in nodes}
        self.config = model_config
        self.builder = builder
        self.layers = layers
        self.branch_channels = branch_channels
        self.output = nodes[-1].name
        self.params: Dict[str, Parameter] = {}
        for node in nodes:
            for pname, shape in node.param_shapes.items():
                self.params[pname] = Parameter(pname, np.zeros(shape), dtype=dtype)
        self.metadata: Dict[str, object] = {}

    @property
    def dtype(self):
        first = next(iter(self.params.values()), None)
        return first.dtype if first is not None else np.dtype(np.float32)

    @property
    def period(self) -> int:
        """Input sizes must be multiples of this (one factor 2 per downsampling)."""
        return 2 ** max(node.scale for node in self.nodes)

    @property
    def input_channels(self) -> int:
        return self.by_name['input'].out_channels

    def parameters(self) -> List[Parameter]:
        return list(self.params.values())

    def zero_grad(self) -> None:
        for param in self.params.values():
            param.zero_grad()

    def astype(self, dtype) -> 'ModelGraph':
        """Copy of this graph with parameters cast to ``dtype``."""
        clone = ModelGraph(self.nodes, self.config, self.builder, self.layers,
                           self.branch_channels, dtype=dtype)
        for name, param in self.params.items():
            clone.params[name].data = param.data.astype(dtype)
        clone.metadata = dict(self.metadata)
        return clone

    def descriptor(self) -> Dict[str, object]:
        """Everything needed to rebuild an identical architecture."""
        return {
            'builder': self.builder,
            'config': asdict(self.config),
            'layers': self.layers,
            'branch_channels': self.branch_channels,
        }

    def __repr__(self) -> str:
        return (f"ModelGraph(builder='{self.builder}', levels={self.config.levels}, "
                f"nodes={len(self.nodes)}, params={param_count(self)})")


class _NodeList:
    """Appends nodes while tracking channel counts."""

    def __init__(self):
        self.nodes: List[GraphNode] = []
        self.channels: Dict[str, int] = {}

    def add(self, name, op, inputs, level, scale, out_channels=None, **geometry) -> str:
        inputs = tuple(inputs)
        in_channels = self.channels[inputs[0]] if inputs else 0
        if out_channels is None:
            out_channels = in_channels
        self.nodes.append(GraphNode(name, op, inputs, level, scale, in_channels=in_channels,
                                    out_channels=out_channels, **geometry))
        self.channels[name] = out_channels
        return name

    def conv(self, name, src, level, scale, out_channels, kernel=3, stride=1):
        return self.add(name, 'conv', [src], level, scale, out_channels,
                        kernel=kernel, stride=stride, padding=kernel // 2)

    def prelu(self, name, src, level, scale):
        return self.add(name, 'prelu', [src], level, scale)


def _validated(model_config: Optional[CnpConfig]) -> CnpConfig:
    model_config = model_config or config.model
    ErrorHandler.raise_if_problems(model_problems(model_config), 'model configuration')
    return model_config


def _extraction(nl: _NodeList, prefix: str, src: str, level: int, scale: int, width: int) -> str:
    x = nl.conv(f"{prefix}.extract.conv1", src, level, scale, width)
    x = nl.prelu(f"{prefix}.extract.prelu1", x, level, scale)
    x = nl.conv(f"{prefix}.extract.conv2", x, level, scale, width)
    return nl.prelu(f"{prefix}.extract.prelu2", x, level, scale)


def _mapping(nl: _NodeList, prefix: str, src: str, level: int, scale: int,
             width: int, embed: int, transforms: int) -> str:
    x = nl.conv(f"{prefix}.map.shrink", src, level, scale, embed, kernel=1)
    for j in range(1, transforms + 1):
        x = nl.conv(f"{prefix}.map.transform{j}", x, level, scale, embed)
        x = nl.prelu(f"{prefix}.map.transform{j}.prelu", x, level, scale)
    return nl.conv(f"{prefix}.map.expand", x, level, scale, width, kernel=1)


def _adjustment(nl: _NodeList, src: str, model_config: CnpConfig) -> str:
    x = nl.prelu('adjust.prelu1', src, 0, 0)
    x = nl.conv('adjust.conv1', x, 0, 0, nl.channels[src])
    x = nl.prelu('adjust.prelu2', x, 0, 0)
    x = nl.conv('adjust.conv2', x, 0, 0, model_config.output_channels)
    if model_config.residual:
        skip = nl.add('residual.select', 'select', ['input'], 0, 0,
                      model_config.output_channels, start=model_config.residual_channel)
        x = nl.add('residual.add', 'add', [x, skip], 0, 0)
    return x


def _cnp_nodes(model_config: CnpConfig) -> List[GraphNode]:
    F, E, S = model_config.feature_channels, model_config.embed_channels, model_config.transform_layers
    L = model_config.levels
    nl = _NodeList()
    nl.add('input', 'input', [], 0, 0, model_config.input_channels)

    # Descent: each level downsamples the previous extraction output and
    # applies one more extraction module.
    features = [_extraction(nl, 'l0', 'input', 0, 0, F)]
    for i in range(1, L):
        if model_config.downsample_mode == 'maxpool':
            down = nl.add(f"l{i}.down", 'maxpool', [features[-1]], i, i, kernel=2, stride=2)
        else:
            down = nl.add(f"l{i}.down", 'conv', [features[-1]], i, i, F,
                          kernel=3, stride=2, padding=1)
        features.append(_extraction(nl, f"l{i}", down, i, i, F))

    # Mapping is a side branch per level; level 0 runs last.
    mapped = {}
    for i in list(range(1, L)) + [0]:
        mapped[i] = _mapping(nl, f"l{i}", features[i], i, i, F, E, S)

    # Progressive reconstruction from the deepest level.
    current = mapped[L - 1]
    for i in range(L - 1, 0, -1):
        up = nl.add(f"l{i}.recon.up", 'deconv', [current], i, i - 1, F,
                    kernel=3, stride=2, padding=1)
        current = nl.add(f"l{i - 1}.recon.fuse", 'fuse', [mapped[i - 1], up], i - 1, i - 1,
                         2 * F if model_config.fusion_mode == 'concat' else F,
                         mode=model_config.fusion_mode)
        if model_config.fusion_mode == 'concat':
            current = nl.conv(f"l{i - 1}.recon.project", current, i - 1, i - 1, F, kernel=1)

    _adjustment(nl, current, model_config)
    return nl.nodes


def build_cnp(model_config: Optional[CnpConfig] = None) -> ModelGraph:
    """Build the multi-level pyramid with adaptive depth and progressive upsampling."""
    model_config = _validated(model_config)
    return ModelGraph(_cnp_nodes(model_config), model_config, 'cnp')


def build_single_level(layers: int, model_config: Optional[CnpConfig] = None) -> ModelGraph:
    """(layers - 1) x [3x3 conv + PReLU] then a 1x1 output conv, all at full resolution."""
    if layers < 2:
        raise ConfigurationError(f"single-level model needs layers >= 2, got {layers}")
    model_config = replace(_validated(model_config), levels=1)
    nl = _NodeList()
    nl.add('input', 'input', [], 0, 0, model_config.input_channels)
    x = 'input'
    for j in range(1, layers):
        x = nl.conv(f"body.conv{j}", x, 0, 0, model_config.feature_channels)
        x = nl.prelu(f"body.prelu{j}", x, 0, 0)
    x = nl.conv('output.conv', x, 0, 0, model_config.output_channels, kernel=1)
    if model_config.residual:
        skip = nl.add('residual.select', 'select', ['input'], 0, 0,
                      model_config.output_channels, start=model_config.residual_channel)
        nl.add('residual.add', 'add', [x, skip], 0, 0)
    return ModelGraph(nl.nodes, model_config, 'single-level', layers=layers)


def _simple_multiscale_nodes(model_config: CnpConfig, width: int) -> List[GraphNode]:
    embed = min(model_config.embed_channels, width - 1)
    nl = _NodeList()
    nl.add('input', 'input', [], 0, 0, model_config.input_channels)
    merged = None
    for i in range(model_config.levels):
        src = 'input'
        if i > 0:
            factor = 2 ** i
            src = nl.add(f"b{i}.down", 'avgpool', ['input'], i, i, kernel=factor, stride=factor)
        x = _extraction(nl, f"b{i}", src, i, i, width)
        x = _mapping(nl, f"b{i}", x, i, i, width, embed, model_config.transform_layers)
        for j in range(1, i + 1):
            x = nl.add(f"b{i}.up{j}", 'deconv', [x], i, i - j, width,
                       kernel=3, stride=2, padding=1)
        if merged is None:
            merged = x
        else:
            merged = nl.add(f"merge.fuse{i}", 'fuse', [merged, x], 0, 0, width, mode='sum')
    _adjustment(nl, merged, model_config)
    return nl.nodes


def _count(nodes: Sequence[GraphNode]) -> int:
    return sum(int(np.prod(shape)) for node in nodes for shape in node.param_shapes.values())


def build_simple_multiscale(model_config: Optional[CnpConfig] = None,
                            branch_channels: Optional[int] = None) -> ModelGraph:
    """
    Independent equal-depth branches on 2^i-downsampled copies of the input,
    each upsampled back to full resolution and summed.

    Without ``branch_channels`` the branch width is chosen so the parameter
    count is as close as possible to ``build_cnp`` with the same config.
    """
    model_config = _validated(model_config)
    if branch_channels is None:
        target = _count(_cnp_nodes(model_config))
        candidates = range(2, 4 * model_config.feature_channels + 1)
        branch_channels = min(
            candidates, key=lambda w: abs(_count(_simple_multiscale_nodes(model_config, w)) - target))
    if branch_channels < 2:
        raise ConfigurationError(f"branch_channels must be >= 2, got {branch_channels}")
    return ModelGraph(_simple_multiscale_nodes(model_config, branch_channels), model_config,
                      'simple-multiscale', branch_channels=branch_channels)


def rebuild(descriptor: Dict[str, object]) -> ModelGraph:
    """Rebuild an architecture from ``ModelGraph.descriptor()`` output."""
    model_config = CnpConfig(**descriptor['config'])
    builder = descriptor['builder']
    if builder == 'cnp':
        return build_cnp(model_config)
    if builder == 'single-level':
        return build_single_level(int(descriptor['layers']), model_config)
    if builder == 'simple-multiscale':
        return build_simple_multiscale(model_config, descriptor.get('branch_channels'))
    raise ConfigurationError(f"unknown builder '{builder}', expected one of {BUILDERS}")


def build(builder: str, model_config: Optional[CnpConfig] = None, layers: int = 8) -> ModelGraph:
    if builder == 'cnp':
        return build_cnp(model_config)
    if builder == 'single-level':
        return build_single_level(layers, model_config)
    if builder == 'simple-multiscale':
        return build_simple_multiscale(model_config)
    raise ConfigurationError(f"unknown builder '{builder}', expected one of {BUILDERS}")


def _bilinear_kernel(kernel: int) -> np.ndarray:
    center = (kernel - 1) / 2.0
    taps = 1.0 - np.abs(np.arange(kernel) - center) / (center + 1.0)
    return np.outer(taps, taps)


def init_params(graph: ModelGraph, seed: int, init: Optional[InitConfig] = None) -> None:
    """
    Deterministically initialize every parameter.

    Convolutions get He-normal weights and zero biases, PReLU slopes start at
    0.25, transposed convs start as per-channel bilinear upsamplers plus a
    little noise. The final adjustment conv is scaled down so a residual
    model starts near the identity.
    """
    init = init or config.init
    rng = np.random.default_rng(seed)
    final_conv = 'adjust.conv2' if 'adjust.conv2' in graph.by_name else 'output.conv'
    for node in graph.nodes:
        if node.op == 'conv':
            fan_in = node.in_channels * node.kernel * node.kernel
            std = np.sqrt(2.0 / fan_in)
            if node.name == final_conv:
                std *= init.output_scale
            weight = rng.normal(0.0, std, size=(node.out_channels, node.in_channels,
                                                node.kernel, node.kernel))
            graph.params[f"{node.name}.weight"].data = weight.astype(graph.dtype)
            graph.params[f"{node.name}.bias"].data = np.zeros(node.out_channels, dtype=graph.dtype)
        elif node.op == 'deconv':
            weight = np.zeros((node.in_channels, node.out_channels, node.kernel, node.kernel))
            diagonal = np.arange(min(node.in_channels, node.out_channels))
            weight[diagonal, diagonal] = _bilinear_kernel(node.kernel)
            weight += rng.normal(0.0, init.deconv_noise_std, size=weight.shape)
            graph.params[f"{node.name}.weight"].data = weight.astype(graph.dtype)
            graph.params[f"{node.name}.bias"].data = np.zeros(node.out_channels, dtype=graph.dtype)
        elif node.op == 'prelu':
            graph.params[f"{node.name}.slope"].data = np.full(
                node.out_channels, init.prelu_slope, dtype=graph.dtype)
    graph.zero_grad()


def param_count(graph: ModelGraph) -> int:
    """Exact number of scalar parameters."""
    return sum(param.data.size for param in graph.params.values())


def forward(graph: ModelGraph, x: Union[Tensor, np.ndarray],
            blocked_from_level: Optional[int] = None, probe: bool = False) -> Tensor:
    """
    Evaluate the model on an (N, C, H, W) input.

    ``blocked_from_level`` zeroes the upsampled contribution of every level
    at or above it. ``probe`` swaps max pooling for average pooling so that
    gradient support reflects the architecture rather than the data.
    """
    x = T.as_tensor(x, dtype=graph.dtype)
    if x.data.ndim != 4:
        raise ConfigurationError(f"forward expects an (N, C, H, W) input, got shape {x.shape}")
    if x.shape[1] != graph.input_channels:
        raise ConfigurationError(
            f"model expects {graph.input_channels} input channels, got {x.shape[1]}")
    period = graph.period
    if x.shape[2] % period or x.shape[3] % period:
        raise ConfigurationError(
            f"input {x.shape[2]}x{x.shape[3]} is not divisible by {period}; "
            f"pad it with pad_reflect(image, {period}) and crop the result")

    params = graph.params
    values: Dict[str, Tensor] = {}
    for node in graph.nodes:
        inputs = [values[name] for name in node.inputs]
        if node.op == 'input':
            out = x
        elif node.op == 'conv':
            out = T.conv2d(inputs[0], params[f"{node.name}.weight"], params[f"{node.name}.bias"],
                           stride=node.stride, padding=node.padding)
        elif node.op == 'prelu':
            out = T.prelu(inputs[0], params[f"{node.name}.slope"])
        elif node.op == 'maxpool':
            out = T.avgpool2d(inputs[0], 2) if probe else T.maxpool2d(inputs[0])
        elif node.op == 'avgpool':
            out = T.avgpool2d(inputs[0], node.kernel)
        elif node.op == 'deconv':
            out = T.transposed_conv2d(inputs[0], params[f"{node.name}.weight"],
                                      params[f"{node.name}.bias"], stride=node.stride,
                                      padding=node.padding, output_padding=node.stride - 1)
        elif node.op == 'fuse':
            first, second = inputs
            upstream = graph.by_name[node.inputs[1]]
            if blocked_from_level is not None and upstream.level >= blocked_from_level:
                second = T.zeros_like(second)
            out = T.fuse(first, second, node.mode)
        elif node.op == 'select':
            out = T.select_channels(inputs[0], node.start, node.out_channels)
        elif node.op == 'add':
            out = T.add(inputs[0], inputs[1])
        else:
            raise ConfigurationError(f"unknown node op '{node.op}' in '{node.name}'")
        values[node.name] = out
    return values[graph.output]
