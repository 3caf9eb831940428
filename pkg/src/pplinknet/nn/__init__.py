"""From-scratch numpy layers and the PP-LinkNet-mu model."""

from . import functional
from .checkpoint import (CheckpointError, CheckpointMismatch, load_checkpoint, load_into,
                         save_checkpoint)
from .functional import ShapeMismatch
from .model import ConfigError, Model, ModelConfig, build_model, parameter_count

__all__ = [
    "functional",
    "ShapeMismatch",
    "ConfigError",
    "Model",
    "ModelConfig",
    "build_model",
    "parameter_count",
    "CheckpointError",
    "CheckpointMismatch",
    "save_checkpoint",
    "load_checkpoint",
    "load_into",
]
