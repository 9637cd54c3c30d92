"""
Loss, patch sampling, optimization loop and PSNR evaluation.

The loss is mean squared intensity error plus ``grad_weight`` times the
mean squared error of forward-difference image gradients. Training draws
random aligned patches, reflect-pads them to the model period, and scores
the prediction cropped back to the patch.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config.constants import (
    LossSpec, TrainConfig, get_config, loss_problems, training_problems
)
from ..io.checkpoint import save_checkpoint
from ..utils.error_handler import ErrorHandler
from ..utils.error_types import ConfigurationError, DatasetError, TrainingDivergedError
from . import tensor as T
from .graph import ModelGraph, forward
from .optimizers import make_optimizer
from .padding import CropRecord, crop_to, pad_reflect
from .tasks import TaskSample
from .tensor import Tensor

config = get_config()


# ============================================================================
# Loss
# ============================================================================

def image_gradient(x: Tensor) -> Tensor:
    """Forward differences [dx, dy] stacked on channels, zero on the trailing column/row."""
    data = x.data
    dx = np.zeros_like(data)
    dy = np.zeros_like(data)
    dx[..., :, :-1] = data[..., :, 1:] - data[..., :, :-1]
    dy[..., :-1, :] = data[..., 1:, :] - data[..., :-1, :]
    channels = data.shape[1]

    def backward_fn(g):
        gx, gy = g[:, :channels], g[:, channels:]
        grad = np.zeros_like(data, dtype=g.dtype)
        grad[..., :, 1:] += gx[..., :, :-1]
        grad[..., :, :-1] -= gx[..., :, :-1]
        grad[..., 1:, :] += gy[..., :-1, :]
        grad[..., :-1, :] -= gy[..., :-1, :]
        return (grad,)

    return T.make_node(np.concatenate([dx, dy], axis=1), (x,), 'image_gradient', backward_fn)


def loss(pred: Tensor, target: Tensor, spec: Optional[LossSpec] = None) -> Tensor:
    """Scalar intensity + gradient loss."""
    spec = spec or config.loss
    ErrorHandler.raise_if_problems(loss_problems(spec), 'loss spec')
    if pred.shape != target.shape:
        raise ConfigurationError(f"loss needs equal shapes, got {pred.shape} and {target.shape}")
    total = T.mse(pred, target)
    if spec.grad_weight:
        gradient_term = T.mse(image_gradient(pred), image_gradient(target))
        total = T.add(total, T.scale(gradient_term, spec.grad_weight))
    return total


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """10 log10(max^2 / MSE); +inf for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigurationError(f"psnr needs equal shapes, got {a.shape} and {b.shape}")
    err = np.mean((a - b) ** 2)
    if err == 0:
        return float('inf')
    return float(10.0 * np.log10(max_val ** 2 / err))


def capped_psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    return min(psnr(a, b, max_val), config.output.psnr_cap)


# ============================================================================
# Patch sampling
# ============================================================================

@dataclass
class PatchBatch:
    inputs: np.ndarray   # (B, C, P', P') padded to the model period
    targets: np.ndarray  # (B, C_out, P, P)
    offsets: np.ndarray  # (B, 3) sample index, row, column
    crop: CropRecord


def sample_patches(samples: Sequence[TaskSample], patch_size: int, batch_size: int,
                   seed: int, step: int = 0, multiple: int = 1) -> PatchBatch:
    """Uniformly random aligned crops; deterministic per (seed, step)."""
    if not samples:
        raise DatasetError("cannot sample patches from an empty dataset")
    rng = np.random.default_rng([seed, step])
    inputs, targets, offsets = [], [], []
    for _ in range(batch_size):
        index = int(rng.integers(0, len(samples)))
        sample = samples[index]
        height, width = sample.inputs.shape[1:]
        if height < patch_size or width < patch_size:
            raise DatasetError(
                f"sample '{sample.name}' is {height}x{width}, smaller than patch {patch_size}")
        row = int(rng.integers(0, height - patch_size + 1))
        col = int(rng.integers(0, width - patch_size + 1))
        inputs.append(sample.inputs[:, row:row + patch_size, col:col + patch_size])
        targets.append(sample.target[:, row:row + patch_size, col:col + patch_size])
        offsets.append((index, row, col))
    padded, record = pad_reflect(np.stack(inputs), multiple)
    return PatchBatch(np.ascontiguousarray(padded), np.stack(targets), np.array(offsets), record)


def steps_per_epoch(samples: Sequence[TaskSample], train_config: TrainConfig) -> int:
    pixels = sum(s.inputs.shape[1] * s.inputs.shape[2] for s in samples)
    per_step = train_config.patch_size ** 2 * train_config.batch_size
    return max(1, int(np.ceil(pixels / per_step)))


# ============================================================================
# Evaluation
# ============================================================================

def predict(graph: ModelGraph, inputs: np.ndarray,
            blocked_from_level: Optional[int] = None) -> np.ndarray:
    """Full-image inference on a (C, H, W) input; output has the input's size."""
    padded, record = pad_reflect(np.asarray(inputs)[None], graph.period)
    out = forward(graph, padded, blocked_from_level=blocked_from_level)
    return crop_to(out.data[0], record)


def per_sample_psnr(graph: ModelGraph, samples: Sequence[TaskSample], max_val: float = 1.0,
                    blocked_from_level: Optional[int] = None) -> List[float]:
    return [capped_psnr(predict(graph, s.inputs, blocked_from_level), s.target, max_val)
            for s in samples]


def evaluate(graph: ModelGraph, samples: Sequence[TaskSample], max_val: float = 1.0,
             blocked_from_level: Optional[int] = None) -> float:
    """Mean capped PSNR over whole target images, holes included."""
    if not samples:
        raise DatasetError("cannot evaluate on an empty test set")
    return float(np.mean(per_sample_psnr(graph, samples, max_val, blocked_from_level)))


# ============================================================================
# Training loop
# ============================================================================

@dataclass
class TrainingResult:
    graph: ModelGraph
    curve: pd.DataFrame
    metrics: Dict[str, float] = field(default_factory=dict)


def loss_curve_is_stable(losses: Sequence[float], window: int = 50, tolerance: float = 0.10) -> bool:
    """
    True when the smoothed loss in the final quarter never rises more than
    ``tolerance`` above the smoothed minimum reached so far.
    """
    smoothed = pd.Series(list(losses), dtype=float).rolling(window, min_periods=1).mean()
    if smoothed.empty:
        return True
    tail = max(1, len(smoothed) // 4)
    final = smoothed.iloc[-tail:]
    running_min = smoothed.cummin().iloc[-tail:]
    return bool((final <= (1.0 + tolerance) * running_min).all())


def train_loop(graph: ModelGraph, samples: Sequence[TaskSample], train_config: Optional[TrainConfig] = None,
               loss_spec: Optional[LossSpec] = None, heldout: Optional[Sequence[TaskSample]] = None,
               checkpoint_path: Optional[Union[str, Path]] = None) -> TrainingResult:
    """
    sample -> forward -> loss -> backward -> optimizer step.

    Records every step's loss and, every ``eval_every`` steps and at the end,
    the held-out PSNR. A non-finite loss aborts with the step index and the
    last finite loss.
    """
    train_config = train_config or config.training
    loss_spec = loss_spec or config.loss
    ErrorHandler.raise_if_problems(training_problems(train_config), 'training configuration')
    if not samples:
        raise DatasetError("training set is empty")

    dtype = np.float64 if train_config.precision == 'float64' else np.float32
    if graph.dtype != dtype:
        graph = graph.astype(dtype)
    optimizer = make_optimizer(graph.parameters(), train_config)
    total_steps = train_config.steps or train_config.epochs * steps_per_epoch(samples, train_config)
    patch = train_config.patch_size

    print(f"⚙️ Training {graph.builder} model for {total_steps} steps "
          f"({train_config.optimizer}, lr={train_config.learning_rate})")
    records = []
    last_finite = None
    heldout_psnr = float('nan')
    for step in range(1, total_steps + 1):
        batch = sample_patches(samples, patch, train_config.batch_size, train_config.seed,
                               step, graph.period)
        optimizer.zero_grad()
        pred = T.crop(forward(graph, batch.inputs), patch, patch)
        value = loss(pred, Tensor(batch.targets, dtype=dtype), loss_spec)
        loss_value = value.item()
        if not np.isfinite(loss_value):
            raise TrainingDivergedError(step, last_finite)
        last_finite = loss_value
        T.backward(value)
        optimizer.step()

        measured = float('nan')
        evaluate_now = train_config.eval_every and step % train_config.eval_every == 0
        if heldout and (evaluate_now or step == total_steps):
            measured = heldout_psnr = evaluate(graph, heldout)
        records.append((step, loss_value, measured))

        if train_config.log_every and step % train_config.log_every == 0:
            print(f"   step {step}/{total_steps}  loss {loss_value:.6f}  heldout_psnr {heldout_psnr:.2f}")
        if checkpoint_path and train_config.checkpoint_every and step % train_config.checkpoint_every == 0:
            _checkpoint(graph, checkpoint_path, optimizer, step, train_config)

    if checkpoint_path:
        _checkpoint(graph, checkpoint_path, optimizer, total_steps, train_config)
    curve = pd.DataFrame(records, columns=list(config.output.loss_curve_columns))
    metrics = {'steps': float(total_steps), 'final_loss': float(last_finite),
               'heldout_psnr': heldout_psnr}
    print(f"✅ Training finished: final loss {last_finite:.6f}")
    return TrainingResult(graph=graph, curve=curve, metrics=metrics)


def _checkpoint(graph: ModelGraph, path, optimizer, step: int, train_config: TrainConfig) -> None:
    graph.metadata.update({'optimizer': optimizer.name, 'step': step,
                           'train_config': asdict(train_config)})
    save_checkpoint(graph, path)
