"""
Desk-scale ablation experiments on the synthetic depth-restoration task.

levels       pyramid depth sweep at a fixed mapping depth
transform    mapping depth sweep at a fixed pyramid depth
fusion       progressive pyramid against simple multiscale fusion at equal budget
fusion-mode  sum against concatenation when merging levels
downsample   max pooling against strided convolution
block        one trained pyramid evaluated with its upper levels switched off
             on a test set of large holes

Every experiment trains each variant from the same seed on the same data
and reports held-out PSNR, one row per variant.
"""

from dataclasses import replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from config.constants import AblationConfig, CnpConfig, TrainConfig, get_config
from ..utils.error_types import ConfigurationError
from .graph import ModelGraph, build_cnp, build_simple_multiscale, init_params, param_count
from .tasks import (
    TaskSample, baseline_prediction, generate_task_samples, model_config_for_task, split_samples
)
from .training import capped_psnr, evaluate, train_loop

config = get_config()

ABLATIONS = ('levels', 'transform', 'fusion', 'fusion-mode', 'downsample', 'block')
TASK = 'depth'

Split = Tuple[List[TaskSample], List[TaskSample]]


def _train_config(ablation: AblationConfig, seed: int) -> TrainConfig:
    return TrainConfig(patch_size=ablation.patch_size, batch_size=ablation.batch_size,
                       learning_rate=ablation.learning_rate, optimizer=ablation.optimizer,
                       steps=ablation.steps, eval_every=ablation.steps,
                       log_every=max(1, ablation.steps // 4), seed=seed)


def _base_model(ablation: AblationConfig) -> CnpConfig:
    return model_config_for_task(TASK, replace(config.model, feature_channels=ablation.feature_channels,
                                               embed_channels=ablation.embed_channels))


def make_split(ablation: AblationConfig, seed: int, hole_min_side: Optional[int] = None) -> Split:
    spec = config.degradation
    if hole_min_side is not None:
        spec = replace(spec, hole_min_side=hole_min_side,
                       hole_max_side=max(spec.hole_max_side, hole_min_side))
    samples = generate_task_samples(TASK, ablation.scene_count, ablation.scene_size, seed, spec)
    return split_samples(samples, seed=seed)


def train_and_score(graph: ModelGraph, split: Split, ablation: AblationConfig,
                    seed: int) -> Tuple[ModelGraph, float]:
    train, heldout = split
    init_params(graph, seed)
    result = train_loop(graph, train, _train_config(ablation, seed), heldout=heldout)
    return result.graph, evaluate(result.graph, heldout)


def baseline_psnr(heldout: List[TaskSample]) -> float:
    return float(np.mean([capped_psnr(baseline_prediction(TASK, s), s.target) for s in heldout]))


def _row(experiment: str, variant: str, graph: Optional[ModelGraph], psnr: float,
         **extra) -> Dict[str, object]:
    row = {'experiment': experiment, 'variant': variant,
           'params': param_count(graph) if graph is not None else 0,
           'heldout_psnr': psnr}
    row.update(extra)
    return row


def _sweep(experiment: str, variants: List[Tuple[str, Callable[[], ModelGraph], Dict[str, object]]],
           split: Split, ablation: AblationConfig, seed: int) -> List[Dict[str, object]]:
    rows = []
    for variant, build_graph, extra in variants:
        print(f"⚙️ [{experiment}] training {variant}")
        graph, score = train_and_score(build_graph(), split, ablation, seed)
        rows.append(_row(experiment, variant, graph, score, **extra))
        print(f"📊 [{experiment}] {variant}: held-out PSNR {score:.2f} dB")
    return rows


def _levels(ablation, seed, split):
    base = _base_model(ablation)
    variants = [(f"L={L}", lambda L=L: build_cnp(replace(base, levels=L)),
                 {'levels': L, 'transform_layers': base.transform_layers})
                for L in ablation.level_sweep]
    rows = _sweep('levels', variants, split, ablation, seed)
    rows.append(_row('levels', 'joint-bilateral', None, baseline_psnr(split[1])))
    return rows


def _transform(ablation, seed, split):
    base = replace(_base_model(ablation), levels=ablation.block_levels)
    variants = [(f"S={S}", lambda S=S: build_cnp(replace(base, transform_layers=S)),
                 {'levels': base.levels, 'transform_layers': S})
                for S in ablation.transform_sweep]
    return _sweep('transform', variants, split, ablation, seed)


def _fusion(ablation, seed, split):
    base = _base_model(ablation)
    variants = []
    for L in ablation.fusion_levels:
        level_config = replace(base, levels=L)
        variants.append((f"cnp L={L}", lambda c=level_config: build_cnp(c),
                         {'levels': L, 'builder': 'cnp'}))
        variants.append((f"simple-multiscale L={L}", lambda c=level_config: build_simple_multiscale(c),
                         {'levels': L, 'builder': 'simple-multiscale'}))
    return _sweep('fusion', variants, split, ablation, seed)


def _fusion_mode(ablation, seed, split):
    base = replace(_base_model(ablation), levels=ablation.block_levels)
    variants = [(mode, lambda m=mode: build_cnp(replace(base, fusion_mode=m)), {'fusion_mode': mode})
                for mode in ('sum', 'concat')]
    return _sweep('fusion-mode', variants, split, ablation, seed)


def _downsample(ablation, seed, split):
    base = replace(_base_model(ablation), levels=ablation.block_levels)
    variants = [(mode, lambda m=mode: build_cnp(replace(base, downsample_mode=m)),
                 {'downsample_mode': mode})
                for mode in ('maxpool', 'strided-conv')]
    return _sweep('downsample', variants, split, ablation, seed)


def _block(ablation, seed, split):
    """Train once, then evaluate with levels >= k blocked for k = 1 .. L."""
    levels = ablation.block_levels
    graph = build_cnp(replace(_base_model(ablation), levels=levels))
    print(f"⚙️ [block] training L={levels}")
    graph, _ = train_and_score(graph, split, ablation, seed)
    _, large_holes = make_split(ablation, seed + 1, ablation.large_hole_min_side)
    rows = []
    for unblocked in range(1, levels + 1):
        blocked = unblocked if unblocked < levels else None
        score = evaluate(graph, large_holes, blocked_from_level=blocked)
        rows.append(_row('block', f"{unblocked} level(s) active", graph, score,
                         active_levels=unblocked))
        print(f"📊 [block] {unblocked} active level(s): PSNR {score:.2f} dB")
    return rows


_EXPERIMENTS = {
    'levels': _levels,
    'transform': _transform,
    'fusion': _fusion,
    'fusion-mode': _fusion_mode,
    'downsample': _downsample,
    'block': _block,
}


def run_ablation(kind: str, ablation: Optional[AblationConfig] = None,
                 seed: int = 0) -> List[Dict[str, object]]:
    """Run one named experiment and return its result rows."""
    if kind not in _EXPERIMENTS:
        raise ConfigurationError(f"unknown ablation '{kind}', expected one of {ABLATIONS}")
    ablation = ablation or config.ablation
    split = make_split(ablation, seed)
    print(f"🔍 Ablation '{kind}': {len(split[0])} train / {len(split[1])} held-out scenes "
          f"of {ablation.scene_size}px, {ablation.steps} steps per variant")
    return _EXPERIMENTS[kind](ablation, seed, split)
