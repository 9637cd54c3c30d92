"""
Central finite-difference gradient checks in 64-bit.

Each check compares the analytic gradient of a scalar function against
(f(x + eps) - f(x - eps)) / 2 eps for every (or a sample of) input
coordinates. Coordinates whose error exceeds ``refine_above`` are retried
with steps eps/10, eps/100, ... and keep the smallest error, so a step that
straddles a PReLU or max-pool kink does not count as a failure.
"""

from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.constants import CnpConfig, GradcheckConfig, InitConfig, LossSpec, get_config
from ..utils.error_types import ConfigurationError
from . import tensor as T
from .graph import build_cnp, forward, init_params
from .tensor import Parameter, Tensor
from .training import image_gradient, loss

config = get_config()

Case = Tuple[Callable[[], Tensor], List[Tensor]]


@dataclass
class GradcheckReport:
    """Worst error after refinement, next to the worst error at the configured epsilon alone."""
    max_rel_error: float
    checked: int
    worst: str = ''
    single_step_error: float = 0.0
    refined: int = 0

    def merged(self, other: 'GradcheckReport') -> 'GradcheckReport':
        worst = other if other.max_rel_error >= self.max_rel_error else self
        return GradcheckReport(worst.max_rel_error, self.checked + other.checked, worst.worst,
                               max(self.single_step_error, other.single_step_error),
                               self.refined + other.refined)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def _analytic(fn: Callable[[], Tensor], leaves: Sequence[Tensor]) -> List[np.ndarray]:
    for leaf in leaves:
        if isinstance(leaf, Parameter):
            leaf.zero_grad()
        else:
            leaf.grad = None
    T.backward(fn())
    return [np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy() for leaf in leaves]


def _numeric(fn: Callable[[], Tensor], leaf: Tensor, index: Tuple[int, ...], eps: float) -> float:
    original = leaf.data[index]
    leaf.data[index] = original + eps
    plus = fn().item()
    leaf.data[index] = original - eps
    minus = fn().item()
    leaf.data[index] = original
    return (plus - minus) / (2.0 * eps)


def gradcheck(fn: Callable[[], Tensor], leaves: Sequence[Tensor],
              settings: Optional[GradcheckConfig] = None,
              samples_per_leaf: Optional[int] = None,
              rng: Optional[np.random.Generator] = None) -> GradcheckReport:
    """
    Check d fn() / d leaf for every leaf.

    ``fn`` must rebuild its result from the current ``leaf.data`` on every
    call. With ``samples_per_leaf`` only that many random coordinates of each
    leaf are checked.
    """
    settings = settings or config.gradcheck
    rng = rng or np.random.default_rng(0)
    grads = _analytic(fn, leaves)
    worst, worst_name, checked = 0.0, '', 0
    single_step, refined = 0.0, 0
    for k, (leaf, grad) in enumerate(zip(leaves, grads)):
        if samples_per_leaf is None:
            indices = list(np.ndindex(leaf.shape))
        else:
            flat = rng.choice(leaf.data.size, size=min(samples_per_leaf, leaf.data.size), replace=False)
            indices = [np.unravel_index(int(i), leaf.shape) for i in flat]
        for index in indices:
            eps = settings.epsilon
            error = relative_error(grad[index], _numeric(fn, leaf, index, eps))
            single_step = max(single_step, error)
            refined += int(settings.refinements > 0 and error > settings.refine_above)
            for _ in range(settings.refinements):
                if error <= settings.refine_above:
                    break
                eps /= 10.0
                error = min(error, relative_error(grad[index], _numeric(fn, leaf, index, eps)))
            checked += 1
            if error > worst:
                worst = error
                worst_name = f"{getattr(leaf, 'name', f'leaf{k}')}{tuple(int(i) for i in index)}"
    return GradcheckReport(max_rel_error=float(worst), checked=checked, worst=worst_name,
                           single_step_error=float(single_step), refined=refined)


# ============================================================================
# Op catalog
# ============================================================================

def project(x: Tensor, weights: np.ndarray) -> Tensor:
    """sum(x * weights) as a 1x1x1x1 scalar."""
    def backward_fn(g):
        return (g.reshape(()) * weights,)

    value = np.full((1, 1, 1, 1), np.sum(x.data * weights), dtype=x.dtype)
    return T.make_node(value, (x,), 'project', backward_fn)


def _leaf(rng: np.random.Generator, *shape) -> Tensor:
    return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)


def _param(rng: np.random.Generator, name: str, *shape) -> Parameter:
    return Parameter(name, rng.normal(size=shape), dtype=np.float64)


def _projected(core: Callable[[], Tensor], leaves: List[Tensor], rng: np.random.Generator) -> Case:
    weights = rng.normal(size=core().shape)
    return (lambda: project(core(), weights)), leaves


def _conv_case(rng):
    x, w, b = _leaf(rng, 2, 3, 7, 7), _param(rng, 'weight', 4, 3, 3, 3), _param(rng, 'bias', 4)
    stride = int(rng.integers(1, 3))
    return _projected(lambda: T.conv2d(x, w, b, stride=stride, padding=1), [x, w, b], rng)


def _deconv_case(rng):
    x, w, b = _leaf(rng, 1, 3, 4, 4), _param(rng, 'weight', 3, 2, 3, 3), _param(rng, 'bias', 2)
    return _projected(lambda: T.transposed_conv2d(x, w, b), [x, w, b], rng)


def _maxpool_case(rng):
    x = _leaf(rng, 1, 2, 6, 6)
    return _projected(lambda: T.maxpool2d(x), [x], rng)


def _avgpool_case(rng):
    x = _leaf(rng, 1, 2, 6, 6)
    factor = int(rng.integers(2, 4))
    return _projected(lambda: T.avgpool2d(x, factor), [x], rng)


def _prelu_case(rng):
    x = _leaf(rng, 2, 3, 5, 5)
    slope = Parameter('slope', rng.uniform(0.05, 0.5, size=3), dtype=np.float64)
    return _projected(lambda: T.prelu(x, slope), [x, slope], rng)


def _binary_case(op):
    def case(rng):
        a, b = _leaf(rng, 1, 2, 4, 4), _leaf(rng, 1, 2, 4, 4)
        return _projected(lambda: op(a, b), [a, b], rng)
    return case


def _scale_case(rng):
    x = _leaf(rng, 1, 2, 4, 4)
    factor = float(rng.uniform(-2.0, 2.0))
    return _projected(lambda: T.scale(x, factor), [x], rng)


def _concat_case(rng):
    a, b = _leaf(rng, 1, 2, 4, 4), _leaf(rng, 1, 3, 4, 4)
    return _projected(lambda: T.fuse(a, b, 'concat'), [a, b], rng)


def _select_case(rng):
    x = _leaf(rng, 1, 4, 3, 3)
    return _projected(lambda: T.select_channels(x, 1, 2), [x], rng)


def _crop_case(rng):
    x = _leaf(rng, 1, 2, 6, 6)
    return _projected(lambda: T.crop(x, 4, 5), [x], rng)


def _reduction_case(op):
    def case(rng):
        x = _leaf(rng, 1, 2, 3, 3)
        return _projected(lambda: op(x), [x], rng)
    return case


def _mse_case(rng):
    a, b = _leaf(rng, 1, 1, 4, 4), _leaf(rng, 1, 1, 4, 4)
    return (lambda: T.mse(a, b)), [a, b]


def _image_gradient_case(rng):
    x = _leaf(rng, 1, 2, 6, 6)
    return _projected(lambda: image_gradient(x), [x], rng)


def _loss_case(rng):
    pred, target = _leaf(rng, 1, 1, 8, 8), _leaf(rng, 1, 1, 8, 8)
    spec = LossSpec(grad_weight=float(rng.uniform(0.1, 2.0)))
    return (lambda: loss(pred, target, spec)), [pred, target]


OP_CASES: Dict[str, Callable[[np.random.Generator], Case]] = {
    'conv2d': _conv_case,
    'transposed_conv2d': _deconv_case,
    'maxpool2d': _maxpool_case,
    'avgpool2d': _avgpool_case,
    'prelu': _prelu_case,
    'add': _binary_case(T.add),
    'sub': _binary_case(T.sub),
    'scale': _scale_case,
    'concat': _concat_case,
    'select_channels': _select_case,
    'crop': _crop_case,
    'sum_all': _reduction_case(T.sum_all),
    'mean': _reduction_case(T.mean),
    'mse': _mse_case,
    'image_gradient': _image_gradient_case,
    'loss': _loss_case,
}


def model_case(levels: int, rng: np.random.Generator,
               settings: Optional[GradcheckConfig] = None) -> Case:
    """Full pyramid in float64, output layer at full He scale so every parameter matters."""
    settings = settings or config.gradcheck
    model_config = replace(CnpConfig(), levels=levels, feature_channels=settings.model_features,
                           embed_channels=settings.model_embed)
    graph = build_cnp(model_config).astype(np.float64)
    init_params(graph, int(rng.integers(0, 2 ** 31)), InitConfig(output_scale=1.0))
    size = settings.model_size
    x = Tensor(rng.normal(size=(1, model_config.input_channels, size, size)), dtype=np.float64)
    target = Tensor(0.5 * rng.normal(size=(1, model_config.output_channels, size, size)),
                    dtype=np.float64)
    spec = LossSpec(grad_weight=1.0)
    return (lambda: loss(forward(graph, x), target, spec)), graph.parameters()


def run_gradient_suite(settings: Optional[GradcheckConfig] = None, seed: int = 0,
                       ops: Optional[Sequence[str]] = None,
                       include_models: bool = True) -> List[Dict[str, object]]:
    """One result row per op and per model depth."""
    settings = settings or config.gradcheck
    names = list(ops) if ops is not None else list(OP_CASES)
    unknown = [name for name in names if name not in OP_CASES]
    if unknown:
        raise ConfigurationError(f"unknown gradient checks {unknown}, expected some of {sorted(OP_CASES)}")
    rows = []
    print(f"⚙️ Gradient checks: {len(names)} ops x {settings.seeds} seeds")
    for k, name in enumerate(names):
        total = GradcheckReport(0.0, 0)
        for trial in range(settings.seeds):
            rng = np.random.default_rng([seed, k, trial])
            fn, leaves = OP_CASES[name](rng)
            total = total.merged(gradcheck(fn, leaves, settings, rng=rng))
        rows.append(_row(name, settings.seeds, total, settings))

    if include_models:
        for levels in settings.model_levels:
            print(f"⚙️ Gradient check: pyramid with {levels} level(s)")
            total = GradcheckReport(0.0, 0)
            for trial in range(settings.model_seeds):
                rng = np.random.default_rng([seed, 1000 + levels, trial])
                fn, leaves = model_case(levels, rng, settings)
                total = total.merged(gradcheck(fn, leaves, settings, settings.samples_per_parameter, rng))
            rows.append(_row(f"cnp-L{levels}", settings.model_seeds, total, settings))
    return rows


def _row(name: str, seeds: int, report: GradcheckReport,
         settings: GradcheckConfig) -> Dict[str, object]:
    return {
        'check': name,
        'seeds': seeds,
        'coordinates': report.checked,
        'max_rel_error': report.max_rel_error,
        'single_step_error': report.single_step_error,
        'refined': report.refined,
        'worst': report.worst,
        'passed': report.max_rel_error < settings.tolerance,
    }
