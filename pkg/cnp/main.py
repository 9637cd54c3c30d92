"""
Main orchestration module for the pyramid toolkit.

Wires the command-line subcommands (analyze, gen-data, train, infer, eval,
gradcheck, ablate) to the core modules and the file exporters.
"""

import argparse
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from config.constants import (
    DOWNSAMPLE_MODES, FUSION_MODES, OPTIMIZERS, PRECISIONS, LossSpec, get_config
)
from .core.analysis import analysis_rows, single_level_rows
from .core.experiments import ABLATIONS, run_ablation
from .core.gradcheck import OP_CASES, run_gradient_suite
from .core.graph import BUILDERS, build, init_params, param_count
from .core.tasks import (
    baseline_prediction, generate_task_samples, model_config_for_task, split_samples
)
from .core.training import capped_psnr, per_sample_psnr, predict, train_loop
from .io.checkpoint import load_checkpoint
from .io.dataset import channel_kinds, read_channels, read_dataset, write_channel, write_dataset
from .io.exporters import eval_frame, export_table, loss_curve_frame, print_table, write_csv
from .utils.error_handler import ErrorHandler
from .utils.error_types import CnpError, ConfigurationError, DatasetError

config = get_config()


# ============================================================================
# Argument parsing
# ============================================================================

def parse_levels(text: str) -> List[int]:
    """'1..5' or '1,3,5' -> list of level counts."""
    try:
        if '..' in text:
            first, last = text.split('..', 1)
            levels = list(range(int(first), int(last) + 1))
        else:
            levels = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid level list '{text}', use '1..5' or '1,3,5'")
    if not levels or min(levels) < 1:
        raise argparse.ArgumentTypeError(f"level list '{text}' must name levels >= 1")
    return levels


def _add_model_arguments(parser: argparse.ArgumentParser) -> None:
    model = config.model
    parser.add_argument('--builder', choices=BUILDERS, default='cnp',
                        help='Architecture family (default: cnp)')
    parser.add_argument('--levels', type=int, default=model.levels,
                        help=f'Pyramid levels (default: {model.levels})')
    parser.add_argument('--transform', type=int, default=model.transform_layers,
                        help=f'Nonlinear transform layers per mapping (default: {model.transform_layers})')
    parser.add_argument('--features', type=int, default=model.feature_channels,
                        help=f'Feature channels (default: {model.feature_channels})')
    parser.add_argument('--embed', type=int, default=model.embed_channels,
                        help=f'Mapping embedding channels (default: {model.embed_channels})')
    parser.add_argument('--fusion-mode', choices=FUSION_MODES, default=model.fusion_mode,
                        help=f'Level fusion (default: {model.fusion_mode})')
    parser.add_argument('--downsample', choices=DOWNSAMPLE_MODES, default=model.downsample_mode,
                        help=f'Downsampling layer (default: {model.downsample_mode})')
    parser.add_argument('--layers', type=int, default=8,
                        help='Depth of the single-level builder (default: 8)')
    parser.add_argument('--no-residual', action='store_true',
                        help='Predict the target directly instead of a correction')


def _add_training_arguments(parser: argparse.ArgumentParser) -> None:
    training = config.training
    parser.add_argument('--steps', type=int, default=training.steps,
                        help='Optimizer steps (default: epochs x patches per epoch)')
    parser.add_argument('--epochs', type=int, default=training.epochs,
                        help=f'Epochs when --steps is not given (default: {training.epochs})')
    parser.add_argument('--batch-size', type=int, default=training.batch_size,
                        help=f'Patches per step (default: {training.batch_size})')
    parser.add_argument('--patch-size', type=int, default=training.patch_size,
                        help=f'Square patch side (default: {training.patch_size})')
    parser.add_argument('--lr', type=float, default=training.learning_rate,
                        help=f'Learning rate (default: {training.learning_rate})')
    parser.add_argument('--optimizer', choices=OPTIMIZERS, default=training.optimizer,
                        help=f'Optimizer (default: {training.optimizer})')
    parser.add_argument('--grad-weight', type=float, default=config.loss.grad_weight,
                        help=f'Weight of the gradient loss term (default: {config.loss.grad_weight})')
    parser.add_argument('--precision', choices=PRECISIONS, default=training.precision,
                        help=f'Floating point precision (default: {training.precision})')
    parser.add_argument('--log-every', type=int, default=training.log_every,
                        help=f'Progress line interval in steps, 0 disables (default: {training.log_every})')
    parser.add_argument('--eval-every', type=int, default=training.eval_every,
                        help=f'Held-out evaluation interval (default: {training.eval_every})')
    parser.add_argument('--checkpoint-every', type=int, default=training.checkpoint_every,
                        help='Intermediate checkpoint interval, 0 disables (default: 0)')


def _add_scene_arguments(parser: argparse.ArgumentParser) -> None:
    scenes = config.scenes
    parser.add_argument('--count', type=int, default=scenes.count,
                        help=f'Procedural scenes to generate (default: {scenes.count})')
    parser.add_argument('--size', type=int, default=scenes.size,
                        help=f'Scene side in pixels (default: {scenes.size})')
    parser.add_argument('--heldout-fraction', type=float, default=scenes.heldout_fraction,
                        help=f'Held-out share of scenes (default: {scenes.heldout_fraction})')


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=0, help='Seed for all randomness (default: 0)')

    parser = argparse.ArgumentParser(
        prog='cnp_pyramid',
        description='Convolutional neural pyramid: analysis, training and evaluation')
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    analyze = commands.add_parser('analyze', parents=[common],
                                  help='Receptive field and cost table for a level sweep')
    analyze.add_argument('--levels', type=parse_levels, default=parse_levels('1..5'),
                         help="Level counts, e.g. '1..5' or '1,3,5' (default: 1..5)")
    analyze.add_argument('--transform', type=int, default=config.model.transform_layers,
                         help=f'Transform layers (default: {config.model.transform_layers})')
    analyze.add_argument('--features', type=int, default=config.model.feature_channels,
                         help=f'Feature channels (default: {config.model.feature_channels})')
    analyze.add_argument('--embed', type=int, default=config.model.embed_channels,
                         help=f'Embedding channels (default: {config.model.embed_channels})')
    analyze.add_argument('--height', type=int, default=config.analysis.input_height,
                         help=f'Input height (default: {config.analysis.input_height})')
    analyze.add_argument('--width', type=int, default=config.analysis.input_width,
                         help=f'Input width (default: {config.analysis.input_width})')
    analyze.add_argument('--single-level', action='store_true',
                         help='Also print receptive fields of plain single-level networks')
    analyze.add_argument('--output', help='CSV path for the table')

    gen = commands.add_parser('gen-data', parents=[common],
                              help='Write a synthetic dataset directory')
    gen.add_argument('--task', choices=sorted(config.tasks), default='depth',
                     help='Task whose degradation is applied (default: depth)')
    gen.add_argument('--output', required=True, help='Dataset directory')
    _add_scene_arguments(gen)
    gen.add_argument('--hole-min', type=int, default=config.degradation.hole_min_side,
                     help=f'Smallest hole side (default: {config.degradation.hole_min_side})')
    gen.add_argument('--hole-max', type=int, default=config.degradation.hole_max_side,
                     help=f'Largest hole side (default: {config.degradation.hole_max_side})')
    gen.add_argument('--noise-sigma', type=float, default=config.degradation.gaussian_sigma,
                     help=f'Additive Gaussian noise sigma (default: {config.degradation.gaussian_sigma})')
    gen.add_argument('--poisson', action='store_true', help='Add Poisson shot noise before Gaussian noise')

    train = commands.add_parser('train', parents=[common], help='Train a model and save a checkpoint')
    train.add_argument('--task', choices=sorted(config.tasks),
                       help='Task (default: the dataset task, or depth)')
    train.add_argument('--data', help='Dataset directory (default: generate procedural scenes)')
    train.add_argument('--output', required=True, help='Checkpoint path')
    train.add_argument('--curve', help='Loss curve CSV (default: <output>.loss.csv)')
    _add_scene_arguments(train)
    _add_model_arguments(train)
    _add_training_arguments(train)

    infer = commands.add_parser('infer', parents=[common], help='Run a checkpoint on input images')
    infer.add_argument('--checkpoint', required=True, help='Checkpoint path')
    infer.add_argument('--inputs', nargs='+', required=True,
                       help='Channel images stacked in order (e.g. gray, depth, mask)')
    infer.add_argument('--output', required=True, help='Output PNM path')
    infer.add_argument('--kind', choices=('gray', 'depth', 'mask'),
                       help='Output channel kind (default: from the checkpoint task)')
    infer.add_argument('--block-from', type=int, help='Zero the contribution of levels >= this one')

    evaluate = commands.add_parser('eval', parents=[common], help='PSNR of a checkpoint on a dataset')
    evaluate.add_argument('--checkpoint', required=True, help='Checkpoint path')
    evaluate.add_argument('--data', required=True, help='Dataset directory')
    evaluate.add_argument('--split', choices=('heldout', 'train', 'all'), default='heldout',
                          help='Samples to score (default: heldout)')
    evaluate.add_argument('--baseline', action='store_true',
                          help='Also score the classical non-learned baseline')
    evaluate.add_argument('--block-from', type=int, help='Zero the contribution of levels >= this one')
    evaluate.add_argument('--output', help='CSV path for per-sample scores')

    grad = commands.add_parser('gradcheck', parents=[common], help='64-bit finite-difference suite')
    grad.add_argument('--ops', nargs='+', choices=sorted(OP_CASES), help='Ops to check (default: all)')
    grad.add_argument('--seeds', type=int, default=config.gradcheck.seeds,
                      help=f'Random trials per op (default: {config.gradcheck.seeds})')
    grad.add_argument('--no-models', action='store_true', help='Skip the full-model checks')
    grad.add_argument('--output', help='CSV path for the results')

    ablate = commands.add_parser('ablate', parents=[common], help='Desk-scale ablation experiments')
    ablate.add_argument('experiment', choices=ABLATIONS + ('all',), help='Experiment to run')
    ablate.add_argument('--steps', type=int, default=config.ablation.steps,
                        help=f'Training steps per variant (default: {config.ablation.steps})')
    ablate.add_argument('--scene-count', type=int, default=config.ablation.scene_count,
                        help=f'Procedural scenes (default: {config.ablation.scene_count})')
    ablate.add_argument('--scene-size', type=int, default=config.ablation.scene_size,
                        help=f'Scene side (default: {config.ablation.scene_size})')
    ablate.add_argument('--features', type=int, default=config.ablation.feature_channels,
                        help=f'Feature channels (default: {config.ablation.feature_channels})')
    ablate.add_argument('--output', help='CSV path for the results')
    return parser


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    return build_parser().parse_args(argv)


# ============================================================================
# Subcommands
# ============================================================================

def run_analyze(args) -> int:
    base = replace(config.model, feature_channels=args.features, embed_channels=args.embed)
    print(f"⚙️ Analyzing levels {args.levels} at {args.width}x{args.height}")
    rows = analysis_rows(args.levels, args.transform, base, args.height, args.width)
    export_table('Receptive field and cost', rows, args.output)
    if args.single_level:
        export_table('Single-level networks', single_level_rows())
    return 0


def _degradation_from(args):
    return replace(config.degradation, hole_min_side=args.hole_min, hole_max_side=args.hole_max,
                   gaussian_sigma=args.noise_sigma, poisson=args.poisson)


def run_gen_data(args) -> int:
    print(f"⚙️ Generating {args.count} '{args.task}' scenes of {args.size}px")
    samples = generate_task_samples(args.task, args.count, args.size, args.seed, _degradation_from(args))
    train, heldout = split_samples(samples, args.heldout_fraction, args.seed)
    manifest = write_dataset(args.output, args.task, train, heldout)
    print(f"✅ Dataset manifest written to: {manifest}")
    return 0


def _training_data(args):
    if args.data:
        dataset = read_dataset(args.data)
        task = args.task or dataset.task
        if task != dataset.task:
            raise DatasetError(f"dataset task is '{dataset.task}', --task asked for '{task}'")
        if not dataset.train:
            raise DatasetError(f"dataset in {args.data} has no training samples")
        return task, dataset.train, dataset.heldout
    task = args.task or 'depth'
    print(f"⚙️ Generating {args.count} procedural '{task}' scenes of {args.size}px")
    samples = generate_task_samples(task, args.count, args.size, args.seed)
    train, heldout = split_samples(samples, args.heldout_fraction, args.seed)
    return task, train, heldout


def run_train(args) -> int:
    task, train, heldout = _training_data(args)
    model_config = model_config_for_task(task, replace(
        config.model, levels=args.levels, transform_layers=args.transform,
        feature_channels=args.features, embed_channels=args.embed, fusion_mode=args.fusion_mode,
        downsample_mode=args.downsample, residual=not args.no_residual))
    graph = build(args.builder, model_config, args.layers)
    init_params(graph, args.seed)
    graph.metadata['task'] = task
    print(f"⚙️ Built {graph.builder} model with {param_count(graph)} parameters")

    train_config = replace(
        config.training, steps=args.steps, epochs=args.epochs, batch_size=args.batch_size,
        patch_size=args.patch_size, learning_rate=args.lr, optimizer=args.optimizer,
        precision=args.precision, log_every=args.log_every, eval_every=args.eval_every,
        checkpoint_every=args.checkpoint_every, seed=args.seed)
    result = train_loop(graph, train, train_config, LossSpec(grad_weight=args.grad_weight),
                        heldout=heldout, checkpoint_path=args.output)

    curve_path = args.curve or f"{args.output}.loss.csv"
    write_csv(loss_curve_frame(result.curve), curve_path)
    print(f"📊 Final loss {result.metrics['final_loss']:.6f}, "
          f"held-out PSNR {result.metrics['heldout_psnr']:.2f} dB")
    return 0


def _output_kind(graph, requested: Optional[str]) -> str:
    if requested:
        return requested
    task = graph.metadata.get('task')
    if task in config.tasks:
        return channel_kinds(task)[1][0]
    return 'gray'


def run_infer(args) -> int:
    graph = load_checkpoint(args.checkpoint)
    inputs = read_channels(args.inputs)
    if inputs.shape[0] != graph.input_channels:
        raise ConfigurationError(
            f"checkpoint expects {graph.input_channels} input channels, "
            f"{len(args.inputs)} file(s) provide {inputs.shape[0]}")
    print(f"⚙️ Running inference on a {inputs.shape[2]}x{inputs.shape[1]} input")
    output = predict(graph, inputs, args.block_from)
    path = write_channel(output, args.output, _output_kind(graph, args.kind))
    print(f"✅ Output written to: {path}")
    return 0


def run_eval(args) -> int:
    graph = load_checkpoint(args.checkpoint)
    dataset = read_dataset(args.data)
    samples = {'heldout': dataset.heldout, 'train': dataset.train,
               'all': dataset.train + dataset.heldout}[args.split]
    if not samples:
        raise DatasetError(f"dataset in {args.data} has no '{args.split}' samples")
    task = graph.metadata.get('task')
    if task and task != dataset.task:
        ErrorHandler.log_warning(f"checkpoint was trained on '{task}', dataset task is '{dataset.task}'")

    print(f"⚙️ Evaluating {len(samples)} sample(s)")
    scores = per_sample_psnr(graph, samples, blocked_from_level=args.block_from)
    baselines = None
    if args.baseline:
        estimates = [baseline_prediction(dataset.task, s) for s in samples]
        baselines = [capped_psnr(e, s.target) if e is not None else float('nan')
                     for e, s in zip(estimates, samples)]
    frame = eval_frame([s.name for s in samples], scores, baselines)
    print_table(f"PSNR on '{args.split}' ({dataset.task})", frame)
    if args.output:
        write_csv(frame, args.output)
    print(f"📊 Mean PSNR {float(np.mean(scores)):.2f} dB")
    return 0


def run_gradcheck(args) -> int:
    settings = replace(config.gradcheck, seeds=args.seeds)
    rows = run_gradient_suite(settings, args.seed, args.ops, include_models=not args.no_models)
    export_table('Gradient checks', rows, args.output)
    worst = max(row['max_rel_error'] for row in rows)
    single = max(row['single_step_error'] for row in rows)
    refined = sum(row['refined'] for row in rows)
    print(f"📊 Max relative error: {worst:.3e} (tolerance {settings.tolerance:.0e})")
    print(f"📊 At eps={settings.epsilon:.0e} alone: {single:.3e}; {refined} coordinate(s) "
          f"retried with eps/10 .. eps/{10 ** settings.refinements}")
    failed = [row['check'] for row in rows if not row['passed']]
    if failed:
        ErrorHandler.log_error("Gradient check failed", details=failed)
        return 1
    print("✅ All gradient checks passed")
    return 0


def run_ablate(args) -> int:
    ablation = replace(config.ablation, steps=args.steps, scene_count=args.scene_count,
                       scene_size=args.scene_size, feature_channels=args.features)
    experiments = ABLATIONS if args.experiment == 'all' else (args.experiment,)
    rows = []
    for experiment in experiments:
        rows.extend(run_ablation(experiment, ablation, args.seed))
    export_table('Ablation results', rows, args.output)
    return 0


COMMANDS = {
    'analyze': run_analyze,
    'gen-data': run_gen_data,
    'train': run_train,
    'infer': run_infer,
    'eval': run_eval,
    'gradcheck': run_gradcheck,
    'ablate': run_ablate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main function: dispatch a subcommand and map failures to exit codes."""
    args = parse_arguments(argv)
    try:
        return COMMANDS[args.command](args)
    except CnpError as e:
        ErrorHandler.log_app_error(f"'{args.command}' failed", args.command, error=e)
        return 1
    except FileNotFoundError as e:
        ErrorHandler.log_app_error(f"'{args.command}' failed: file not found", args.command, error=e)
        return 1
