"""Minimal reverse-mode automatic differentiation on numpy arrays."""
from mixtts.autodiff.tensor import (  # noqa: F401
    Tape,
    Tensor,
    get_default_dtype,
    precision,
    set_default_dtype,
)
from mixtts.autodiff.layers import CellKind, RecurrentState, recurrent_cell_step  # noqa: F401
from mixtts.autodiff.optim import Adam, clip_grad_norm  # noqa: F401
from mixtts.autodiff.gradcheck import GradCheckReport, check_gradients  # noqa: F401
