"""
Dataset directories: a manifest.json plus one PNM file per channel.

Depth channels are stored as 16-bit P5, gray and mask channels as 8-bit P5
and colour images as 8-bit P6. Values are normalized to [0, 1] on load.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from config.constants import get_config
from ..core.tasks import TaskSample, task_layout
from ..utils.error_handler import ErrorHandler
from ..utils.error_types import DatasetError, PnmParseError
from .files import atomic_write_text
from .pnm import array_to_pnm, pnm_to_array, read_pnm, write_pnm

config = get_config()

SPLITS = ('train', 'heldout')


@dataclass
class Dataset:
    task: str
    train: List[TaskSample] = field(default_factory=list)
    heldout: List[TaskSample] = field(default_factory=list)


def channel_kinds(task: str) -> Tuple[List[str], List[str]]:
    """(input channel kinds, target channel kinds) for a task."""
    layout = task_layout(task)
    if layout.depth_target:
        return ['gray', 'depth', 'mask'], ['depth']
    if layout.degradation is None:
        return ['gray'], ['gray']
    return ['gray', 'mask'], ['gray']


def maxval_for(kind: str) -> int:
    return config.pnm.depth_maxval if kind == 'depth' else config.pnm.image_maxval


def write_channel(values: np.ndarray, path: Union[str, Path], kind: str) -> Path:
    """Quantize a (1, H, W) or (3, H, W) array in [0, 1] and write it."""
    return write_pnm(array_to_pnm(values, maxval_for(kind)), path)


def read_channels(paths: Sequence[Union[str, Path]]) -> np.ndarray:
    """Stack the channels of several PNM files into one (C, H, W) float32 array."""
    arrays = []
    for path in paths:
        if not Path(path).exists():
            raise DatasetError(f"image file not found: {path}",
                               ErrorHandler.build_file_context(str(path)))
        arrays.append(pnm_to_array(read_pnm(path)))
    sizes = {a.shape[1:] for a in arrays}
    if len(sizes) != 1:
        raise DatasetError(f"channel images differ in size: {sorted(sizes)}")
    return np.concatenate(arrays).astype(np.float32)


def _sample_files(sample: TaskSample, split: str, input_kinds: List[str],
                  target_kinds: List[str]) -> Dict[str, object]:
    return {
        'name': sample.name,
        'split': split,
        'inputs': [f"{split}/{sample.name}_in{c}_{kind}.pgm" for c, kind in enumerate(input_kinds)],
        'target': [f"{split}/{sample.name}_target{c}_{kind}.pgm" for c, kind in enumerate(target_kinds)],
    }


def write_dataset(directory: Union[str, Path], task: str, train: Sequence[TaskSample],
                  heldout: Sequence[TaskSample] = ()) -> Path:
    """Write every sample's channels and the manifest; returns the manifest path."""
    directory = Path(directory)
    input_kinds, target_kinds = channel_kinds(task)
    entries = []
    print(f"💾 Writing {len(train)} train / {len(heldout)} held-out samples to: {directory}")
    for split, samples in (('train', train), ('heldout', heldout)):
        for sample in samples:
            if sample.inputs.shape[0] != len(input_kinds) or sample.target.shape[0] != len(target_kinds):
                raise DatasetError(
                    f"sample '{sample.name}' has {sample.inputs.shape[0]} input / "
                    f"{sample.target.shape[0]} target channels, task '{task}' expects "
                    f"{len(input_kinds)} / {len(target_kinds)}")
            entry = _sample_files(sample, split, input_kinds, target_kinds)
            for c, (rel, kind) in enumerate(zip(entry['inputs'], input_kinds)):
                write_channel(sample.inputs[c:c + 1], directory / rel, kind)
            for c, (rel, kind) in enumerate(zip(entry['target'], target_kinds)):
                write_channel(sample.target[c:c + 1], directory / rel, kind)
            entries.append(entry)

    manifest = {
        'task': task,
        'input_channels': input_kinds,
        'target_channels': target_kinds,
        'samples': entries,
    }
    return atomic_write_text(directory / config.output.manifest_name,
                             json.dumps(manifest, indent=2) + '\n')


def read_manifest(directory: Union[str, Path]) -> Dict[str, object]:
    path = Path(directory) / config.output.manifest_name
    if not path.exists():
        raise DatasetError(f"no {config.output.manifest_name} in {directory}",
                           ErrorHandler.build_file_context(str(path)))
    try:
        manifest = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise DatasetError(f"manifest is not valid JSON: {e}",
                           ErrorHandler.build_file_context(str(path)))
    for key in ('task', 'samples'):
        if key not in manifest:
            raise DatasetError(f"manifest is missing '{key}'",
                               ErrorHandler.build_file_context(str(path)))
    return manifest


def read_dataset(directory: Union[str, Path]) -> Dataset:
    """Load a directory written by ``write_dataset``."""
    directory = Path(directory)
    print(f"🔍 Loading dataset from: {directory}")
    manifest = read_manifest(directory)
    dataset = Dataset(task=manifest['task'])
    for entry in manifest['samples']:
        split = entry.get('split', 'train')
        if split not in SPLITS:
            raise DatasetError(f"sample '{entry.get('name')}' has unknown split '{split}'")
        try:
            inputs = read_channels([directory / rel for rel in entry['inputs']])
            target = read_channels([directory / rel for rel in entry['target']])
        except PnmParseError as e:
            raise DatasetError(f"sample '{entry.get('name')}' is unreadable: {e.message}", e.context)
        if inputs.shape[1:] != target.shape[1:]:
            raise DatasetError(f"sample '{entry['name']}' input and target sizes differ")
        getattr(dataset, split).append(TaskSample(entry['name'], inputs, target))

    if not dataset.train and not dataset.heldout:
        raise DatasetError(f"dataset in {directory} has no samples")
    print(f"✅ Loaded {len(dataset.train)} train / {len(dataset.heldout)} held-out samples "
          f"for task '{dataset.task}'")
    return dataset
