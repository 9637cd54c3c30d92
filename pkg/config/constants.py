"""
Configuration constants for the convolutional neural pyramid toolkit.
All magic numbers (architecture defaults, training hyperparameters,
degradation protocols, file-format codes) are centralized here for easy
maintenance.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple


FUSION_MODES = ('sum', 'concat')
DOWNSAMPLE_MODES = ('maxpool', 'strided-conv')
OPTIMIZERS = ('sgd', 'adam')
PRECISIONS = ('float32', 'float64')
DEGRADATION_KINDS = ('depth-holes', 'sparse-visible', 'additive-noise')
FILTER_KINDS = ('box', 'gaussian', 'bilateral')


@dataclass
class CnpConfig:
    """Architecture hyperparameters of a pyramid model."""
    levels: int = 5
    transform_layers: int = 1
    feature_channels: int = 56
    embed_channels: int = 12
    input_channels: int = 3
    output_channels: int = 1
    fusion_mode: str = 'sum'
    downsample_mode: str = 'maxpool'
    residual: bool = True
    residual_channel: int = 1


@dataclass
class InitConfig:
    """Parameter initialization constants."""
    prelu_slope: float = 0.25
    deconv_noise_std: float = 1e-3
    # Output conv starts at this fraction of the He std: near-identity
    # residual model whose weights still receive gradient.
    output_scale: float = 1e-3


@dataclass
class LossSpec:
    """Intensity plus gradient loss weighting."""
    grad_weight: float = 1.0


@dataclass
class TrainConfig:
    """Optimizer loop settings."""
    patch_size: int = 81
    batch_size: int = 32
    learning_rate: float = 1e-5
    optimizer: str = 'sgd'
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 2
    steps: Optional[int] = None
    eval_every: int = 100
    checkpoint_every: int = 0
    log_every: int = 50
    seed: int = 0
    precision: str = 'float32'


@dataclass
class DegradationSpec:
    """Synthetic corruption parameters; all randomness flows from ``seed``."""
    kind: str = 'depth-holes'
    hole_count: int = 6
    hole_min_side: int = 4
    hole_max_side: int = 64
    blob_fraction_min: float = 0.05
    blob_fraction_max: float = 0.15
    blob_brush: int = 1
    depth_noise_sigma: float = 0.005
    visible_fraction: float = 0.05
    dilate_radius: int = 4
    gaussian_sigma: float = 0.01
    poisson: bool = False
    photon_scale: float = 255.0
    seed: int = 0


@dataclass
class FilterConfig:
    """Reference filter parameters for filter-learning pairs."""
    kind: str = 'bilateral'
    kernel_size: int = 5
    sigma_spatial: float = 2.0
    sigma_range: float = 0.1
    fill_max_passes: int = 8


@dataclass
class TaskLayout:
    """Channel layout of a training task."""
    degradation: Optional[str]
    input_channels: int
    output_channels: int
    residual_channel: int
    depth_target: bool = False


@dataclass
class SceneConfig:
    """Procedural piecewise-smooth scene generator."""
    size: int = 96
    count: int = 40
    min_shapes: int = 3
    max_shapes: int = 8
    min_shape_side: int = 6
    texture_amplitude: float = 0.05
    heldout_fraction: float = 0.1


@dataclass
class AnalysisConfig:
    """Receptive-field and cost table settings."""
    input_height: int = 480
    input_width: int = 640
    single_level_layers: Tuple[int, ...] = (8, 20, 48, 112, 256)
    reference_single_level_rf: Tuple[int, ...] = (15, 39, 95, 223, 511)
    # Published pyramid column for 1..5 levels; its layer convention is unstated.
    reference_cnp_rf: Tuple[int, ...] = (15, 39, 95, 223, 511)
    max_cost_ratio: float = 4.0


@dataclass
class GradcheckConfig:
    """Finite-difference gradient suite settings."""
    epsilon: float = 1e-5
    refinements: int = 3
    refine_above: float = 1e-7
    tolerance: float = 1e-5
    seeds: int = 20
    samples_per_parameter: int = 3
    model_seeds: int = 3
    model_levels: Tuple[int, ...] = (1, 2, 3)
    model_features: int = 8
    model_embed: int = 4
    model_size: int = 16


@dataclass
class PnmConfig:
    """Portable anymap format constants."""
    supported_maxvals: Tuple[int, ...] = (255, 65535)
    depth_maxval: int = 65535
    image_maxval: int = 255


@dataclass
class CheckpointConfig:
    """Binary checkpoint layout constants."""
    magic: bytes = b'CNPK'
    version: int = 1
    stored_dtype_code: int = 0
    dtype_codes: Dict[int, str] = field(default_factory=lambda: {0: '<f4'})


@dataclass
class AblationConfig:
    """Desk-scale experiment sizes that finish on a CPU."""
    feature_channels: int = 24
    embed_channels: int = 8
    patch_size: int = 48
    batch_size: int = 8
    steps: int = 2000
    learning_rate: float = 1e-3
    optimizer: str = 'adam'
    scene_size: int = 96
    scene_count: int = 40
    level_sweep: Tuple[int, ...] = (1, 3, 5)
    fusion_levels: Tuple[int, ...] = (2, 3, 5)
    transform_sweep: Tuple[int, ...] = (1, 2, 3)
    block_levels: int = 5
    large_hole_min_side: int = 32


@dataclass
class OutputConfig:
    """Configuration for output formatting."""
    psnr_cap: float = 99.0
    manifest_name: str = 'manifest.json'
    loss_curve_columns: Tuple[str, ...] = ('step', 'loss', 'heldout_psnr')
    eval_columns: Tuple[str, ...] = ('sample', 'psnr', 'baseline_psnr')


# Global configuration instance
@dataclass
class Config:
    """Master configuration class."""
    model: CnpConfig = field(default_factory=CnpConfig)
    init: InitConfig = field(default_factory=InitConfig)
    loss: LossSpec = field(default_factory=LossSpec)
    training: TrainConfig = field(default_factory=TrainConfig)
    degradation: DegradationSpec = field(default_factory=DegradationSpec)
    filters: FilterConfig = field(default_factory=FilterConfig)
    scenes: SceneConfig = field(default_factory=SceneConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)
    pnm: PnmConfig = field(default_factory=PnmConfig)
    checkpoint: CheckpointConfig = field(default_factory=CheckpointConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    tasks: Dict[str, TaskLayout] = field(default_factory=lambda: {
        'depth': TaskLayout('depth-holes', 3, 1, 1, depth_target=True),
        'completion': TaskLayout('sparse-visible', 2, 1, 0),
        'denoise': TaskLayout('additive-noise', 2, 1, 0),
        'filter': TaskLayout(None, 1, 1, 0),
    })


# Default configuration instance
DEFAULT_CONFIG = Config()


def get_config() -> Config:
    """Get the default configuration instance."""
    return DEFAULT_CONFIG


def model_problems(model: CnpConfig) -> List[str]:
    """List violations of the architecture constraints (empty when valid)."""
    problems = []
    if model.levels < 1:
        problems.append(f"levels must be >= 1, got {model.levels}")
    if not 1 <= model.transform_layers <= 3:
        problems.append(f"transform_layers must be in 1..3, got {model.transform_layers}")
    if not model.feature_channels > model.embed_channels > 0:
        problems.append(
            f"need feature_channels > embed_channels > 0, got "
            f"F={model.feature_channels}, E={model.embed_channels}")
    if model.input_channels < 1 or model.output_channels < 1:
        problems.append(
            f"channel counts must be positive, got in={model.input_channels}, "
            f"out={model.output_channels}")
    if model.fusion_mode not in FUSION_MODES:
        problems.append(f"fusion_mode must be one of {FUSION_MODES}, got '{model.fusion_mode}'")
    if model.downsample_mode not in DOWNSAMPLE_MODES:
        problems.append(
            f"downsample_mode must be one of {DOWNSAMPLE_MODES}, got '{model.downsample_mode}'")
    if model.residual:
        last = model.residual_channel + model.output_channels
        if model.residual_channel < 0 or last > model.input_channels:
            problems.append(
                f"residual channels [{model.residual_channel}, {last}) fall outside "
                f"the {model.input_channels} input channels")
    return problems


def training_problems(training: TrainConfig) -> List[str]:
    """List violations of the training-loop constraints."""
    problems = []
    if training.patch_size < 1 or training.batch_size < 1:
        problems.append(
            f"patch_size and batch_size must be positive, got "
            f"{training.patch_size}, {training.batch_size}")
    if training.learning_rate <= 0:
        problems.append(f"learning_rate must be positive, got {training.learning_rate}")
    if training.optimizer not in OPTIMIZERS:
        problems.append(f"optimizer must be one of {OPTIMIZERS}, got '{training.optimizer}'")
    if training.precision not in PRECISIONS:
        problems.append(f"precision must be one of {PRECISIONS}, got '{training.precision}'")
    if training.steps is None and training.epochs < 1:
        problems.append(f"epochs must be >= 1 when steps is unset, got {training.epochs}")
    if training.steps is not None and training.steps < 1:
        problems.append(f"steps must be >= 1, got {training.steps}")
    return problems


def degradation_problems(spec: DegradationSpec) -> List[str]:
    """List violations of a degradation protocol."""
    problems = []
    if spec.kind not in DEGRADATION_KINDS:
        problems.append(f"unknown degradation kind '{spec.kind}', expected one of {DEGRADATION_KINDS}")
    if spec.hole_count < 0:
        problems.append(f"hole_count must be >= 0, got {spec.hole_count}")
    if not 1 <= spec.hole_min_side <= spec.hole_max_side:
        problems.append(
            f"need 1 <= hole_min_side <= hole_max_side, got "
            f"{spec.hole_min_side}, {spec.hole_max_side}")
    if not 0 <= spec.blob_fraction_min <= spec.blob_fraction_max < 1:
        problems.append(
            f"need 0 <= blob_fraction_min <= blob_fraction_max < 1, got "
            f"{spec.blob_fraction_min}, {spec.blob_fraction_max}")
    if not 0 < spec.visible_fraction <= 1:
        problems.append(f"visible_fraction must be in (0, 1], got {spec.visible_fraction}")
    if spec.dilate_radius < 0:
        problems.append(f"dilate_radius must be >= 0, got {spec.dilate_radius}")
    if spec.gaussian_sigma < 0 or spec.depth_noise_sigma < 0:
        problems.append("noise deviations must be non-negative")
    if spec.photon_scale <= 0:
        problems.append(f"photon_scale must be positive, got {spec.photon_scale}")
    return problems


def loss_problems(spec: LossSpec) -> List[str]:
    """List violations of the loss weighting."""
    if spec.grad_weight < 0:
        return [f"grad_weight must be non-negative, got {spec.grad_weight}"]
    return []


def validate_config(config: Config) -> List[str]:
    """Validate configuration parameters; returns every problem found."""
    problems = []
    problems += model_problems(config.model)
    problems += training_problems(config.training)
    problems += degradation_problems(config.degradation)
    problems += loss_problems(config.loss)

    if config.filters.kernel_size % 2 == 0:
        problems.append(f"filter kernel_size must be odd, got {config.filters.kernel_size}")
    for maxval in config.pnm.supported_maxvals:
        if not 0 < maxval <= 65535:
            problems.append(f"unsupported PNM maxval {maxval}")
    if len(config.checkpoint.magic) != 4:
        problems.append("checkpoint magic must be 4 bytes")
    if not 0 < config.scenes.heldout_fraction < 1:
        problems.append(f"heldout_fraction must be in (0, 1), got {config.scenes.heldout_fraction}")
    return problems
