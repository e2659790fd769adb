from src.autodiff.tensor import (
    Function,
    Tape,
    Tensor,
    as_tensor,
    backward,
    checkpoint,
    current_tape,
    no_grad,
    register,
    registered_ops,
)
from src.autodiff import ops

__all__ = [
    "Function",
    "Tape",
    "Tensor",
    "as_tensor",
    "backward",
    "checkpoint",
    "current_tape",
    "no_grad",
    "ops",
    "register",
    "registered_ops",
]
