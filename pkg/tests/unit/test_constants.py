"""
Unit tests for config.constants module
"""
from dataclasses import replace

import pytest

from config.constants import (
    DEFAULT_CONFIG, CnpConfig, Config, DegradationSpec, LossSpec, TrainConfig, get_config,
    loss_problems, model_problems, training_problems, validate_config
)

pytestmark = pytest.mark.unit


class TestModelDefaults:
    """Test CnpConfig defaults"""

    def test_default_values(self):
        """Test the reference architecture: five levels, F=56, E=12, one transform"""
        model = CnpConfig()
        assert (model.levels, model.feature_channels, model.embed_channels) == (5, 56, 12)
        assert model.transform_layers == 1
        assert model.fusion_mode == 'sum' and model.downsample_mode == 'maxpool'
        assert model.residual and model.residual_channel == 1

    def test_defaults_are_valid(self):
        """Test the default model has no problems"""
        assert model_problems(CnpConfig()) == []

    @pytest.mark.parametrize("overrides,fragment", [
        ({'levels': 0}, 'levels'),
        ({'transform_layers': 4}, 'transform_layers'),
        ({'embed_channels': 56}, 'feature_channels > embed_channels'),
        ({'fusion_mode': 'max'}, 'fusion_mode'),
        ({'downsample_mode': 'avgpool'}, 'downsample_mode'),
        ({'residual_channel': 3}, 'residual channels'),
    ])
    def test_model_problems(self, overrides, fragment):
        """Test each architecture constraint is reported"""
        problems = model_problems(replace(CnpConfig(), **overrides))
        assert any(fragment in p for p in problems)

    def test_residual_off_ignores_channel(self):
        """Test the residual channel is only checked when residual is on"""
        assert model_problems(CnpConfig(residual=False, residual_channel=9)) == []


class TestTrainingDefaults:
    """Test TrainConfig and LossSpec defaults"""

    def test_default_values(self):
        """Test patch 81, batch 32, SGD at 1e-5 with momentum 0.9"""
        training = TrainConfig()
        assert (training.patch_size, training.batch_size) == (81, 32)
        assert training.learning_rate == 1e-5
        assert training.optimizer == 'sgd' and training.momentum == 0.9

    def test_loss_weight(self):
        """Test the gradient term weight defaults to one"""
        assert LossSpec().grad_weight == 1.0
        assert loss_problems(LossSpec(grad_weight=-0.1))

    @pytest.mark.parametrize("overrides", [
        {'learning_rate': 0.0}, {'optimizer': 'rmsprop'}, {'precision': 'float16'},
        {'steps': 0}, {'patch_size': 0}])
    def test_training_problems(self, overrides):
        """Test invalid training settings are reported"""
        assert training_problems(replace(TrainConfig(), **overrides))


class TestConfig:
    """Test the aggregate Config"""

    def test_default_config_valid(self):
        """Test the shipped defaults validate cleanly"""
        assert validate_config(DEFAULT_CONFIG) == []

    def test_get_config_singleton(self):
        """Test get_config returns the default instance"""
        assert get_config() is DEFAULT_CONFIG

    def test_tasks(self):
        """Test the four task layouts"""
        tasks = Config().tasks
        assert set(tasks) == {'depth', 'completion', 'denoise', 'filter'}
        assert tasks['depth'].input_channels == 3 and tasks['depth'].depth_target
        assert tasks['filter'].degradation is None

    def test_degradation_defaults(self):
        """Test the hole protocol defaults"""
        spec = DegradationSpec()
        assert spec.kind == 'depth-holes'
        assert spec.visible_fraction == 0.05
        assert (spec.blob_fraction_min, spec.blob_fraction_max) == (0.05, 0.15)

    def test_validate_collects_all_problems(self):
        """Test validation reports problems from several sections at once"""
        config = Config()
        config.model = replace(config.model, levels=0)
        config.filters = replace(config.filters, kernel_size=4)
        problems = validate_config(config)
        assert any('levels' in p for p in problems)
        assert any('kernel_size' in p for p in problems)

    def test_modifiable(self):
        """Test config sections can be replaced on a fresh instance"""
        config = Config()
        config.training = replace(config.training, steps=10)
        assert config.training.steps == 10
        assert DEFAULT_CONFIG.training.steps is None
