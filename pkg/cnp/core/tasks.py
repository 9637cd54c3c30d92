"""
Training tasks: channel layouts and in-memory sample generation.

Samples are (input, target) pairs of (C, H, W) float32 arrays built from
procedural scenes. The held-out split follows the 90/10 protocol.
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.model_selection import train_test_split

from config.constants import (
    CnpConfig, DegradationSpec, FilterConfig, SceneConfig, TaskLayout, get_config
)
from ..utils.error_types import ConfigurationError, DatasetError
from .degradation import degrade
from .filters import bilateral_filter, fill_holes_normalized, oracle_filter
from .scenes import Scene, generate_scene

config = get_config()


@dataclass
class TaskSample:
    name: str
    inputs: np.ndarray
    target: np.ndarray


def task_layout(task: str) -> TaskLayout:
    if task not in config.tasks:
        raise ConfigurationError(f"unknown task '{task}', expected one of {sorted(config.tasks)}")
    return config.tasks[task]


def model_config_for_task(task: str, base: Optional[CnpConfig] = None) -> CnpConfig:
    """Architecture config with the task's channel layout filled in."""
    layout = task_layout(task)
    return replace(base or config.model,
                   input_channels=layout.input_channels,
                   output_channels=layout.output_channels,
                   residual_channel=layout.residual_channel)


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def make_task_sample(task: str, scene: Scene, name: str, spec: Optional[DegradationSpec] = None,
                     filter_config: Optional[FilterConfig] = None) -> TaskSample:
    layout = task_layout(task)
    gray = scene.gray
    if layout.degradation is None:
        filter_config = filter_config or config.filters
        target = oracle_filter(gray, filter_config.kind, filter_config)[None]
        return TaskSample(name, gray[None].astype(np.float32), target.astype(np.float32))

    spec = replace(spec or config.degradation, kind=layout.degradation)
    clean = np.stack([gray, scene.depth]) if layout.depth_target else gray[None]
    inputs, target = degrade(clean, spec)
    return TaskSample(name, inputs.data[0], target.data[0])


def generate_task_samples(task: str, count: int, size: int, seed: int,
                          spec: Optional[DegradationSpec] = None,
                          filter_config: Optional[FilterConfig] = None,
                          scene_config: Optional[SceneConfig] = None) -> List[TaskSample]:
    """Deterministic list of ``count`` samples of ``size`` x ``size`` pixels."""
    spec = spec or config.degradation
    samples = []
    for index in range(count):
        rng = np.random.default_rng(sample_seed(seed, index))
        scene = generate_scene(size, size, rng, scene_config)
        sample_spec = replace(spec, seed=sample_seed(spec.seed + seed, index))
        samples.append(make_task_sample(task, scene, f"scene_{index:04d}", sample_spec, filter_config))
    return samples


def split_samples(samples: Sequence[TaskSample], heldout_fraction: Optional[float] = None,
                  seed: int = 0) -> Tuple[List[TaskSample], List[TaskSample]]:
    """Random train / held-out split."""
    heldout_fraction = config.scenes.heldout_fraction if heldout_fraction is None else heldout_fraction
    if len(samples) < 2:
        raise DatasetError(f"need at least 2 samples to split, got {len(samples)}")
    train, heldout = train_test_split(list(samples), test_size=heldout_fraction, random_state=seed)
    return list(train), list(heldout)


def baseline_prediction(task: str, sample: TaskSample,
                        filter_config: Optional[FilterConfig] = None) -> Optional[np.ndarray]:
    """
    Classical non-learned estimate of the target, (C_out, H, W), or None
    when the task has no meaningful baseline.
    """
    layout = task_layout(task)
    filter_config = filter_config or config.filters
    inputs = sample.inputs
    if layout.degradation == 'depth-holes':
        gray, holed, mask = inputs
        return fill_holes_normalized(holed, mask, gray, filter_config)[None]
    if layout.degradation == 'sparse-visible':
        visible, mask = inputs
        return fill_holes_normalized(visible, mask, visible, filter_config)[None]
    if layout.degradation == 'additive-noise':
        return bilateral_filter(inputs[0], filter_config.kernel_size, filter_config.sigma_spatial,
                                filter_config.sigma_range)[None]
    return None
