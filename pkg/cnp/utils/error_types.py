"""
Exception hierarchy and reporting constants for the pyramid toolkit.

Every exception carries one of the ErrorTypes codes and a context dict, so
the CLI can print failures from any layer the same way.
"""

from typing import Any, Dict, Optional


class ErrorTypes:
    """Error codes attached to toolkit exceptions."""

    # Malformed inputs
    INVALID_FORMAT = 'INVALID_FORMAT'
    VALIDATION_ERROR = 'VALIDATION_ERROR'
    PARSING_ERROR = 'PARSING_ERROR'

    # Stored artifacts
    DATA_CORRUPTION = 'DATA_CORRUPTION'
    VERSION_MISMATCH = 'VERSION_MISMATCH'
    TRUNCATED_DATA = 'TRUNCATED_DATA'

    CONFIGURATION_ERROR = 'CONFIGURATION_ERROR'
    NUMERICAL_DIVERGENCE = 'NUMERICAL_DIVERGENCE'
    UNKNOWN_ERROR = 'UNKNOWN_ERROR'


class ContextTypes:
    """Kinds of context an error can carry."""

    FILE = 'FILE'
    CONFIGURATION = 'CONFIGURATION'
    TRAINING = 'TRAINING'


class CnpError(Exception):
    """Base class for all toolkit errors."""

    error_type = ErrorTypes.UNKNOWN_ERROR

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}


class ConfigurationError(CnpError):
    """Invalid configuration or tensor shape contract violation."""

    error_type = ErrorTypes.CONFIGURATION_ERROR


class PnmParseError(CnpError):
    """Malformed, truncated or unsupported PNM data."""

    error_type = ErrorTypes.PARSING_ERROR

    def __init__(self, message: str, offset: int, context: Optional[Dict[str, Any]] = None):
        super().__init__(f"{message} (at byte offset {offset})", context)
        self.offset = offset


class CheckpointError(CnpError):
    """Checkpoint file cannot be used."""

    error_type = ErrorTypes.DATA_CORRUPTION


class CheckpointMagicError(CheckpointError):
    error_type = ErrorTypes.INVALID_FORMAT


class CheckpointVersionError(CheckpointError):
    error_type = ErrorTypes.VERSION_MISMATCH


class CheckpointCrcError(CheckpointError):
    error_type = ErrorTypes.DATA_CORRUPTION


class CheckpointTruncatedError(CheckpointError):
    error_type = ErrorTypes.TRUNCATED_DATA


class DatasetError(CnpError):
    """Missing, empty or inconsistent dataset."""

    error_type = ErrorTypes.VALIDATION_ERROR


class TrainingDivergedError(CnpError):
    """Loss became non-finite during optimization."""

    error_type = ErrorTypes.NUMERICAL_DIVERGENCE

    def __init__(self, step: int, last_finite_loss: Optional[float]):
        super().__init__(
            f"Training diverged at step {step}; last finite loss was {last_finite_loss}",
            {'context_type': ContextTypes.TRAINING, 'step': step,
             'last_finite_loss': last_finite_loss})
        self.step = step
        self.last_finite_loss = last_finite_loss


# Console reporting switches
ERROR_CONFIG = {
    'formatting': {
        'use_emojis': True,
        'include_stack_trace': False,
        'include_context': True
    },
    'logging': {
        'enabled': True,
        'max_context_lines': 5
    },
    'emojis': {
        'error': '❌',
        'warning': '⚠️'
    }
}
