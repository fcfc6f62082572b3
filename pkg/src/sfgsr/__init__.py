"""Spatial-frequency gated Swin super-resolution toolkit.

Pure numpy implementation: tape-based reverse-mode autodiff, windowed
attention backbone with a spatial-frequency gated FFN, sensor-style
degradation simulation, composite losses/metrics, and a small trainer.
"""

from sfgsr.tensor import Tensor, Tape, backward, grad_check
from sfgsr.tensor import ShapeError, ConfigurationError, UsageError
from sfgsr.model import ModelConfig, build_model, count_params, estimate_flops

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "grad_check",
    "ShapeError",
    "ConfigurationError",
    "UsageError",
    "ModelConfig",
    "build_model",
    "count_params",
    "estimate_flops",
]
