"""Dense tensors and tape-based reverse-mode differentiation."""

from pemi.numcore.gradcheck import check_gradients, relative_error
from pemi.numcore.ops import (
    add,
    add_n,
    as_tensor,
    cross_entropy,
    gather_rows,
    gelu,
    l1_normalize_rows,
    layer_norm,
    matmul,
    mul,
    neg,
    reshape,
    row_softmax,
    scale,
    scatter_matrix,
    scatter_rows,
    sub,
    sum_all,
    transpose,
)
from pemi.numcore.tensor import GradientTable, Tape, Tensor, backward, current_tape, precision

__all__ = [
    "GradientTable",
    "Tape",
    "Tensor",
    "add",
    "add_n",
    "as_tensor",
    "backward",
    "check_gradients",
    "cross_entropy",
    "current_tape",
    "gather_rows",
    "gelu",
    "l1_normalize_rows",
    "layer_norm",
    "matmul",
    "mul",
    "neg",
    "precision",
    "relative_error",
    "reshape",
    "row_softmax",
    "scale",
    "scatter_matrix",
    "scatter_rows",
    "sub",
    "sum_all",
    "transpose",
]
