"""
Shared builders for pyramid toolkit tests.
"""

from dataclasses import replace

import numpy as np

from config.constants import CnpConfig, get_config
from cnp.core.graph import build_cnp, init_params
from cnp.core.tasks import TaskSample, generate_task_samples

SMALL_FEATURES = 8
SMALL_EMBED = 4


def small_config(levels=3, **overrides) -> CnpConfig:
    """Narrow pyramid that runs in milliseconds."""
    base = replace(get_config().model, levels=levels, feature_channels=SMALL_FEATURES,
                   embed_channels=SMALL_EMBED)
    return replace(base, **overrides)


def small_graph(levels=3, seed=0, **overrides):
    graph = build_cnp(small_config(levels, **overrides))
    init_params(graph, seed)
    return graph


def random_array(shape, seed=0, dtype=np.float64) -> np.ndarray:
    return np.random.default_rng(seed).normal(size=shape).astype(dtype)


def unit_image(shape, seed=0) -> np.ndarray:
    """Values in [0, 1]."""
    return np.random.default_rng(seed).random(shape).astype(np.float32)


def depth_samples(count=4, size=32, seed=0):
    return generate_task_samples('depth', count, size, seed)


def constant_sample(name='flat', channels=3, size=16, value=0.5) -> TaskSample:
    inputs = np.full((channels, size, size), value, dtype=np.float32)
    target = np.full((1, size, size), value, dtype=np.float32)
    return TaskSample(name, inputs, target)
