"""Shared-basis Kolmogorov-Arnold networks with hand-written gradients, plus baselines."""

from .network import ModelSpec, build_model, count_params, load_checkpoint, model_backward, model_forward, save_checkpoint
from .spline import SharedBasis, build_uniform_knots, spline_eval

__all__ = [
    "ModelSpec",
    "SharedBasis",
    "build_model",
    "build_uniform_knots",
    "count_params",
    "load_checkpoint",
    "model_backward",
    "model_forward",
    "save_checkpoint",
    "spline_eval",
]

__version__ = "0.1.0"
