"""
Minimal dense tensor engine with reverse-mode differentiation.

Every activation is a 4-D (batch, channels, height, width) array. Each op
records its parents and a backward closure; ``backward`` walks the recorded
graph in reverse topological order and accumulates gradients into
``Parameter`` objects.
"""

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..utils.error_types import ConfigurationError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """Dense array plus the autodiff bookkeeping of the op that produced it."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            is_float = isinstance(data, np.ndarray) and np.issubdtype(data.dtype, np.floating)
            dtype = data.dtype if is_float else np.float32
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._prev: Tuple['Tensor', ...] = ()
        self._backward: Optional[Callable[[], None]] = None
        self._op = ''

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(grad, dtype=self.data.dtype, copy=True)
        else:
            self.grad += grad

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op='{self._op}')"


class Parameter(Tensor):
    """Named learnable tensor whose gradient buffer always exists."""

    def __init__(self, name: str, data, dtype=np.float32):
        super().__init__(np.array(data, dtype=dtype), requires_grad=True, dtype=dtype)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        self.grad += grad

    def __repr__(self) -> str:
        return f"Parameter('{self.name}', shape={self.shape}, dtype={self.dtype})"


def as_tensor(value, dtype=None) -> Tensor:
    """Wrap arrays; pass tensors through (cast when a dtype is requested)."""
    if isinstance(value, Tensor):
        if dtype is None or value.dtype == dtype:
            return value
        return Tensor(value.data.astype(dtype))
    return Tensor(np.asarray(value), dtype=dtype)


def make_node(data: np.ndarray, parents: Sequence[Tensor], op: str,
              backward_fn: BackwardFn) -> Tensor:
    """
    Register a differentiable op.

    ``backward_fn`` maps the output gradient to one gradient (or None) per
    parent. Parents that do not require gradients are skipped.
    """
    out = Tensor(data)
    out._op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if not out.requires_grad:
        return out
    out._prev = tuple(parents)

    def _backward():
        grads = backward_fn(out.grad)
        for parent, grad in zip(parents, grads):
            if grad is not None and parent.requires_grad:
                parent._accumulate(grad)

    out._backward = _backward
    return out


def _topological_order(root: Tensor) -> List[Tensor]:
    # Iterative post-order DFS; deep pyramids overflow the recursion limit.
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in reversed(node._prev):
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(parameter) into every reachable Parameter."""
    if loss.data.size != 1:
        raise ConfigurationError(
            f"backward needs a scalar loss (1x1x1x1), got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    for node in order:
        if not isinstance(node, Parameter):
            node.grad = None
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward()


def _require_4d(x: Tensor, op: str) -> None:
    if x.data.ndim != 4:
        raise ConfigurationError(f"{op} expects a 4-D (N, C, H, W) tensor, got shape {x.shape}")


def _windows(x: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """(N, C, H, W) -> (N, C, Ho, Wo, k, k) strided view of conv windows."""
    view = sliding_window_view(x, (kernel, kernel), axis=(2, 3))
    return view[:, :, ::stride, ::stride]


# ============================================================================
# Convolutions
# ============================================================================

def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation with weight (outC, inC, k, k) and optional bias (outC,)."""
    _require_4d(x, 'conv2d')
    n, channels, height, width = x.shape
    if weight.data.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ConfigurationError(f"conv2d weight must be (outC, inC, k, k), got {weight.shape}")
    out_channels, in_channels, kernel, _ = weight.shape
    if in_channels != channels:
        raise ConfigurationError(
            f"conv2d weight expects {in_channels} input channels, input has {channels}")
    if bias is not None and bias.shape != (out_channels,):
        raise ConfigurationError(f"conv2d bias must have shape ({out_channels},), got {bias.shape}")
    if stride < 1 or padding < 0:
        raise ConfigurationError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    if height + 2 * padding < kernel or width + 2 * padding < kernel:
        raise ConfigurationError(
            f"conv2d kernel {kernel} larger than padded input {height}x{width} (padding {padding})")

    pad = ((0, 0), (0, 0), (padding, padding), (padding, padding))
    xp = np.pad(x.data, pad)
    windows = _windows(xp, kernel, stride)
    out_h, out_w = windows.shape[2], windows.shape[3]
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward_fn(g):
        dw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        db = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        dx = None
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            span_h = stride * (out_h - 1) + 1
            span_w = stride * (out_w - 1) + 1
            for i in range(kernel):
                for j in range(kernel):
                    contrib = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0]))
                    dxp[:, :, i:i + span_h:stride, j:j + span_w:stride] += contrib.transpose(0, 3, 1, 2)
            dx = dxp[:, :, padding:padding + height, padding:padding + width]
        return dx, dw, db

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(out, parents, 'conv2d', backward_fn)


def transposed_conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
                      stride: int = 2, padding: int = 1, output_padding: int = 1) -> Tensor:
    """
    Scatter-add upsampling with weight (inC, outC, k, k).

    Each input element adds a weight-scaled k x k window at stride offsets;
    this is the adjoint of ``conv2d`` with the same stride and padding. The
    defaults (k=3, stride 2, padding 1, output padding 1) give exactly twice
    the input size.
    """
    _require_4d(x, 'transposed_conv2d')
    n, channels, height, width = x.shape
    if weight.data.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ConfigurationError(
            f"transposed_conv2d weight must be (inC, outC, k, k), got {weight.shape}")
    in_channels, out_channels, kernel, _ = weight.shape
    if in_channels != channels:
        raise ConfigurationError(
            f"transposed_conv2d weight expects {in_channels} input channels, input has {channels}")
    if bias is not None and bias.shape != (out_channels,):
        raise ConfigurationError(
            f"transposed_conv2d bias must have shape ({out_channels},), got {bias.shape}")
    if not 0 <= output_padding < stride:
        raise ConfigurationError(
            f"output_padding must be in [0, stride), got {output_padding} with stride {stride}")

    full_h = (height - 1) * stride + kernel + output_padding
    full_w = (width - 1) * stride + kernel + output_padding
    out_h = full_h - 2 * padding
    out_w = full_w - 2 * padding
    span_h = stride * (height - 1) + 1
    span_w = stride * (width - 1) + 1

    full = np.zeros((n, out_channels, full_h, full_w), dtype=np.result_type(x.data, weight.data))
    for i in range(kernel):
        for j in range(kernel):
            contrib = np.tensordot(x.data, weight.data[:, :, i, j], axes=([1], [0]))
            full[:, :, i:i + span_h:stride, j:j + span_w:stride] += contrib.transpose(0, 3, 1, 2)
    out = full[:, :, padding:padding + out_h, padding:padding + out_w]
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def backward_fn(g):
        gfull = np.zeros((n, out_channels, full_h, full_w), dtype=g.dtype)
        gfull[:, :, padding:padding + out_h, padding:padding + out_w] = g
        windows = _windows(gfull, kernel, stride)[:, :, :height, :width]
        dx = None
        if x.requires_grad:
            dx = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        dw = np.tensordot(x.data, windows, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        db = g.sum(axis=(0, 2, 3)) if bias is not None and bias.requires_grad else None
        return dx, dw, db

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_node(np.ascontiguousarray(out), parents, 'transposed_conv2d', backward_fn)


# ============================================================================
# Pooling
# ============================================================================

def _pool_windows(x: np.ndarray, factor: int) -> np.ndarray:
    n, c, h, w = x.shape
    ho, wo = h // factor, w // factor
    blocks = x.reshape(n, c, ho, factor, wo, factor).transpose(0, 1, 2, 4, 3, 5)
    return blocks.reshape(n, c, ho, wo, factor * factor)


def _unpool_windows(blocks: np.ndarray, factor: int) -> np.ndarray:
    n, c, ho, wo, _ = blocks.shape
    grid = blocks.reshape(n, c, ho, wo, factor, factor).transpose(0, 1, 2, 4, 3, 5)
    return grid.reshape(n, c, ho * factor, wo * factor)


def _check_poolable(x: Tensor, factor: int, op: str) -> None:
    _require_4d(x, op)
    height, width = x.shape[2], x.shape[3]
    if height % factor or width % factor:
        raise ConfigurationError(
            f"{op} needs spatial dims divisible by {factor}, got {height}x{width}; "
            f"pad the input with pad_reflect first")


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 stride-2 max pooling; ties go to the first element in row-major scan order."""
    _check_poolable(x, 2, 'maxpool2d')
    blocks = _pool_windows(x.data, 2)
    argmax = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, argmax[..., None], axis=-1)[..., 0]

    def backward_fn(g):
        gblocks = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(gblocks, argmax[..., None], g[..., None], axis=-1)
        return (_unpool_windows(gblocks, 2),)

    return make_node(out, (x,), 'maxpool2d', backward_fn)


def avgpool2d(x: Tensor, factor: int = 2) -> Tensor:
    """Non-overlapping factor x factor mean pooling."""
    _check_poolable(x, factor, 'avgpool2d')
    blocks = _pool_windows(x.data, factor)
    out = blocks.mean(axis=-1)
    area = factor * factor

    def backward_fn(g):
        gblocks = np.broadcast_to((g / area)[..., None], blocks.shape)
        return (_unpool_windows(np.ascontiguousarray(gblocks), factor),)

    return make_node(out, (x,), 'avgpool2d', backward_fn)


# ============================================================================
# Elementwise and structural ops
# ============================================================================

def prelu(x: Tensor, slope: Tensor) -> Tensor:
    """x for x >= 0, slope[c] * x otherwise."""
    _require_4d(x, 'prelu')
    channels = x.shape[1]
    if slope.shape != (channels,):
        raise ConfigurationError(f"prelu slope must have shape ({channels},), got {slope.shape}")
    a = slope.data[None, :, None, None]
    positive = x.data >= 0
    out = np.where(positive, x.data, a * x.data)

    def backward_fn(g):
        dx = g * np.where(positive, 1.0, a).astype(g.dtype) if x.requires_grad else None
        da = (g * np.where(positive, 0.0, x.data)).sum(axis=(0, 2, 3)) if slope.requires_grad else None
        return dx, da

    return make_node(out, (x, slope), 'prelu', backward_fn)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ConfigurationError(f"{op} needs identical shapes, got {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, 'add')
    return make_node(a.data + b.data, (a, b), 'add', lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, 'sub')
    return make_node(a.data - b.data, (a, b), 'sub', lambda g: (g, -g))


def scale(x: Tensor, factor: float) -> Tensor:
    return make_node(x.data * factor, (x,), 'scale', lambda g: (g * factor,))


def concat(tensors: Sequence[Tensor]) -> Tensor:
    """Channel concatenation of tensors sharing batch and spatial dims."""
    first = tensors[0]
    for t in tensors:
        _require_4d(t, 'concat')
        if (t.shape[0], t.shape[2], t.shape[3]) != (first.shape[0], first.shape[2], first.shape[3]):
            raise ConfigurationError(
                f"concat needs identical batch/spatial dims, got {first.shape} and {t.shape}")
    bounds = np.cumsum([0] + [t.shape[1] for t in tensors])
    out = np.concatenate([t.data for t in tensors], axis=1)

    def backward_fn(g):
        return [g[:, bounds[k]:bounds[k + 1]] for k in range(len(tensors))]

    return make_node(out, tuple(tensors), 'concat', backward_fn)


def fuse(a: Tensor, b: Tensor, mode: str = 'sum') -> Tensor:
    """Merge two feature maps by elementwise sum or channel concatenation."""
    if mode == 'sum':
        return add(a, b)
    if mode == 'concat':
        return concat([a, b])
    raise ConfigurationError(f"unknown fusion mode '{mode}', expected 'sum' or 'concat'")


def select_channels(x: Tensor, start: int, count: int) -> Tensor:
    _require_4d(x, 'select_channels')
    if start < 0 or start + count > x.shape[1]:
        raise ConfigurationError(
            f"channels [{start}, {start + count}) out of range for {x.shape[1]} channels")

    def backward_fn(g):
        dx = np.zeros(x.shape, dtype=g.dtype)
        dx[:, start:start + count] = g
        return (dx,)

    return make_node(x.data[:, start:start + count], (x,), 'select_channels', backward_fn)


def crop(x: Tensor, height: int, width: int) -> Tensor:
    """Keep the top-left height x width region."""
    _require_4d(x, 'crop')
    if height > x.shape[2] or width > x.shape[3]:
        raise ConfigurationError(f"cannot crop {x.shape} to {height}x{width}")
    if (height, width) == x.shape[2:]:
        return x

    def backward_fn(g):
        dx = np.zeros(x.shape, dtype=g.dtype)
        dx[:, :, :height, :width] = g
        return (dx,)

    return make_node(x.data[:, :, :height, :width], (x,), 'crop', backward_fn)


def zeros_like(x: Tensor) -> Tensor:
    return Tensor(np.zeros_like(x.data))


# ============================================================================
# Reductions (results are 1x1x1x1 scalars)
# ============================================================================

def _scalar(value, dtype) -> np.ndarray:
    return np.full((1, 1, 1, 1), value, dtype=dtype)


def sum_all(x: Tensor) -> Tensor:
    def backward_fn(g):
        return (np.broadcast_to(g.reshape(()), x.shape).astype(g.dtype),)

    return make_node(_scalar(x.data.sum(), x.dtype), (x,), 'sum', backward_fn)


def mean(x: Tensor) -> Tensor:
    count = x.data.size

    def backward_fn(g):
        return (np.broadcast_to(g.reshape(()) / count, x.shape).astype(g.dtype),)

    return make_node(_scalar(x.data.mean(), x.dtype), (x,), 'mean', backward_fn)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean of squared differences."""
    _check_same_shape(a, b, 'mse')
    diff = a.data - b.data
    count = diff.size

    def backward_fn(g):
        grad = (2.0 / count) * g.reshape(()) * diff
        return grad, -grad

    return make_node(_scalar(np.mean(diff * diff), diff.dtype), (a, b), 'mse', backward_fn)
