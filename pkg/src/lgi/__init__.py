"""Desk-scale text-to-video temporal grounding.

A small, fully self-contained stack: an autodiff tensor core, query/video
encoders, sequential query attention, local-global video-text interaction,
an interval regression head, training losses, an evaluation harness, a
synthetic corpus generator, and a trainer with a CLI.
"""

from .config import TrainConfig
from .tensor import Tape, Tensor, backward, grad_check, primitive_forward

__version__ = "0.1.0"

__all__ = [
    "Tape",
    "Tensor",
    "TrainConfig",
    "backward",
    "grad_check",
    "primitive_forward",
    "__version__",
]
