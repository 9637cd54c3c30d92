"""
Receptive-field and cost analysis for model graphs.

The analytic receptive field is computed by propagating the 1-D index
interval an output position depends on backwards through every node, down
to the input. Starting from a position aligned with the pyramid period makes
the result independent of input size and exactly equal to the gradient
support the empirical probe measures.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.constants import CnpConfig, get_config
from ..utils.error_types import ConfigurationError
from . import tensor as T
from .graph import GraphNode, ModelGraph, build_cnp, build_single_level, forward


config = get_config()

Interval = Tuple[int, int]


@dataclass
class RfTraceEntry:
    name: str
    rf: int
    jump: int


@dataclass
class RfState:
    """Receptive field side length, output jump and per-node trace."""
    rf: int
    jump: int
    trace: List[RfTraceEntry] = field(default_factory=list)


@dataclass
class LevelCost:
    level: int
    macs: int = 0
    params: int = 0
    activations: int = 0
    extraction_macs: int = 0
    # Extraction MACs without conv1, whose input width differs at level 0.
    extraction_shared_macs: int = 0


@dataclass
class CostReport:
    """Multiply-accumulate, parameter and activation totals per pyramid level."""
    levels: List[LevelCost]
    total_macs: int
    total_params: int
    total_activations: int
    peak_live_activations: int
    receptive_field: int


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


def _input_interval(node: GraphNode, interval: Interval) -> Interval:
    """Interval of the node's input that an output interval depends on."""
    lo, hi = interval
    if node.op == 'conv':
        return lo * node.stride - node.padding, hi * node.stride - node.padding + node.kernel - 1
    if node.op in ('maxpool', 'avgpool'):
        return lo * node.stride, hi * node.stride + node.kernel - 1
    if node.op == 'deconv':
        return (_ceil_div(lo + node.padding - node.kernel + 1, node.stride),
                (hi + node.padding) // node.stride)
    return lo, hi


def dependency_intervals(graph: ModelGraph, target: str) -> Dict[str, Interval]:
    """Interval each node contributes to position 0 of ``target``, in that node's own coordinates."""
    index = {node.name: k for k, node in enumerate(graph.nodes)}
    intervals: Dict[str, Interval] = {target: (0, 0)}
    for node in reversed(graph.nodes[:index[target] + 1]):
        if node.name not in intervals:
            continue
        needed = _input_interval(node, intervals[node.name])
        for src in node.inputs:
            if src in intervals:
                lo, hi = intervals[src]
                intervals[src] = (min(lo, needed[0]), max(hi, needed[1]))
            else:
                intervals[src] = needed
    return intervals


def _rf_of(graph: ModelGraph, target: str) -> int:
    lo, hi = dependency_intervals(graph, target).get('input', (0, -1))
    return hi - lo + 1


def analytic_rf(graph: ModelGraph) -> RfState:
    """Receptive field of the model output plus the same figure for every node."""
    trace = [RfTraceEntry(node.name, _rf_of(graph, node.name), 2 ** node.scale)
             for node in graph.nodes]
    final = trace[-1]
    return RfState(rf=final.rf, jump=final.jump, trace=trace)


def _probe_position(size: int, period: int) -> int:
    return ((size // 2) // period) * period


def _fits(graph: ModelGraph, intervals: Dict[str, Interval], size: int) -> bool:
    position = _probe_position(size, graph.period)
    for name, (lo, hi) in intervals.items():
        scale = 2 ** graph.by_name[name].scale
        offset = position // scale
        if lo + offset < 0 or hi + offset >= size // scale:
            return False
    return True


def required_probe_size(graph: ModelGraph) -> int:
    """Smallest square input for which no dependency interval touches the border."""
    intervals = dependency_intervals(graph, graph.output)
    period = graph.period
    size = period
    while not _fits(graph, intervals, size):
        size += period
    return size


def empirical_rf(graph: ModelGraph, input_size: int, seed: int = 0) -> int:
    """
    Measure the receptive field as the gradient support of one output pixel.

    Runs in 64-bit with average pooling in place of max pooling; PReLU slopes
    of an initialized graph are nonzero so no gradient path is masked.
    """
    minimum = required_probe_size(graph)
    if input_size < minimum or input_size % graph.period:
        raise ConfigurationError(
            f"probe input {input_size} too small or misaligned; need a multiple of "
            f"{graph.period} that is at least {minimum}")
    probe = graph.astype(np.float64)
    for node in probe.nodes:
        if node.op == 'prelu':
            slope = probe.params[f"{node.name}.slope"]
            slope.data = np.where(slope.data == 0, 0.25, slope.data)

    rng = np.random.default_rng(seed)
    x = T.Tensor(rng.normal(size=(1, probe.input_channels, input_size, input_size)),
                 requires_grad=True)
    out = forward(probe, x, probe=True)
    row = col = _probe_position(input_size, probe.period)

    def backward_fn(g):
        grad = np.zeros(out.shape, dtype=g.dtype)
        grad[:, :, row, col] = g.reshape(())
        return (grad,)

    pixel = T.make_node(out.data[:, :, row, col].sum().reshape(1, 1, 1, 1), (out,),
                        'pixel', backward_fn)
    T.backward(pixel)
    support = np.abs(x.grad).sum(axis=(0, 1)) > 0
    rows = np.flatnonzero(support.any(axis=1))
    cols = np.flatnonzero(support.any(axis=0))
    if rows.size == 0:
        return 0
    return int(max(rows[-1] - rows[0], cols[-1] - cols[0]) + 1)


def _output_shapes(graph: ModelGraph, height: int, width: int) -> Dict[str, Tuple[int, int, int]]:
    shapes: Dict[str, Tuple[int, int, int]] = {}
    for node in graph.nodes:
        if node.op == 'input':
            shapes[node.name] = (node.out_channels, height, width)
            continue
        _, h, w = shapes[node.inputs[0]]
        if node.op == 'conv':
            h = (h + 2 * node.padding - node.kernel) // node.stride + 1
            w = (w + 2 * node.padding - node.kernel) // node.stride + 1
        elif node.op in ('maxpool', 'avgpool'):
            h, w = h // node.stride, w // node.stride
        elif node.op == 'deconv':
            h, w = h * node.stride, w * node.stride
        shapes[node.name] = (node.out_channels, h, w)
    return shapes


def _node_macs(node: GraphNode, in_shape, out_shape) -> int:
    out_elements = int(np.prod(out_shape))
    if node.op == 'conv':
        return out_elements * node.in_channels * node.kernel * node.kernel
    if node.op == 'deconv':
        return node.in_channels * node.out_channels * node.kernel * node.kernel * in_shape[1] * in_shape[2]
    if node.op == 'input':
        return 0
    return out_elements


def _peak_live(graph: ModelGraph, sizes: Dict[str, int]) -> int:
    last_use = {node.name: k for k, node in enumerate(graph.nodes)}
    for k, node in enumerate(graph.nodes):
        for src in node.inputs:
            last_use[src] = k
    last_use[graph.output] = len(graph.nodes)
    live, peak = 0, 0
    for k, node in enumerate(graph.nodes):
        live += sizes[node.name]
        peak = max(peak, live)
        for name in {src for src in node.inputs} | {node.name}:
            if last_use[name] == k:
                live -= sizes[name]
    return peak


def cost_report(graph: ModelGraph, height: int, width: Optional[int] = None) -> CostReport:
    """Analytic MAC, parameter and activation-memory model for one forward pass."""
    width = height if width is None else width
    if height % graph.period or width % graph.period:
        raise ConfigurationError(
            f"input {height}x{width} is not divisible by {graph.period}")
    shapes = _output_shapes(graph, height, width)
    depth = max(node.level for node in graph.nodes) + 1
    levels = [LevelCost(level=i) for i in range(depth)]
    sizes = {}
    for node in graph.nodes:
        in_shape = shapes[node.inputs[0]] if node.inputs else shapes[node.name]
        entry = levels[node.level]
        macs = _node_macs(node, in_shape, shapes[node.name])
        entry.macs += macs
        if '.extract.' in node.name:
            entry.extraction_macs += macs
            if not node.name.endswith('.extract.conv1'):
                entry.extraction_shared_macs += macs
        entry.params += sum(int(np.prod(s)) for s in node.param_shapes.values())
        sizes[node.name] = int(np.prod(shapes[node.name]))
        entry.activations += sizes[node.name]
    return CostReport(
        levels=levels,
        total_macs=sum(level.macs for level in levels),
        total_params=sum(level.params for level in levels),
        total_activations=sum(level.activations for level in levels),
        peak_live_activations=_peak_live(graph, sizes),
        receptive_field=analytic_rf(graph).rf,
    )


def single_level_layers_for(rf: int) -> int:
    """Depth of a plain 3x3 network whose receptive field is at least ``rf``."""
    return max(2, rf // 2 + 1)


def analysis_rows(levels: Sequence[int], transform_layers: int,
                  model_config: Optional[CnpConfig] = None,
                  height: Optional[int] = None, width: Optional[int] = None) -> List[Dict[str, object]]:
    """
    One row per pyramid depth: receptive field next to the published one,
    cost, and the cost of the single-level network that reaches the same
    receptive field.
    """
    settings = config.analysis
    height = height or settings.input_height
    width = width or settings.input_width
    base = replace(model_config or config.model, transform_layers=transform_layers)
    reference = dict(enumerate(settings.reference_cnp_rf, start=1))
    rows = []
    baseline_macs = None
    for level_count in levels:
        graph = build_cnp(replace(base, levels=level_count))
        report = cost_report(graph, height, width)
        layers = single_level_layers_for(report.receptive_field)
        single = cost_report(build_single_level(layers, base), height, width)
        baseline_macs = baseline_macs or report.total_macs
        rows.append({
            'levels': level_count,
            'transform_layers': transform_layers,
            'receptive_field': report.receptive_field,
            'reference_rf': reference.get(level_count),
            'gmacs': report.total_macs / 1e9,
            'params': report.total_params,
            'activations_m': report.total_activations / 1e6,
            'peak_live_m': report.peak_live_activations / 1e6,
            'cost_ratio': report.total_macs / baseline_macs,
            'single_level_layers': layers,
            'single_level_gmacs': single.total_macs / 1e9,
            'single_level_activations_m': single.total_activations / 1e6,
        })
    return rows


def single_level_rows(layer_counts: Optional[Sequence[int]] = None) -> List[Dict[str, object]]:
    """Receptive field of plain networks next to the published reference column."""
    settings = config.analysis
    layer_counts = layer_counts or settings.single_level_layers
    reference = dict(zip(settings.single_level_layers, settings.reference_single_level_rf))
    rows = []
    for layers in layer_counts:
        rows.append({
            'layers': layers,
            'receptive_field': analytic_rf(build_single_level(layers)).rf,
            'reference_rf': reference.get(layers),
        })
    return rows
