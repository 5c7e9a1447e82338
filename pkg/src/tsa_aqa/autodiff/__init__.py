"""Reverse-mode autodiff primitives sufficient for the whole model."""

from .checkpoint import (
    BadMagicError,
    TruncatedFileError,
    load_checkpoint,
    save_checkpoint,
)
from .gradcheck import gradient_check
from .ops import (
    add,
    add_bias,
    attention_weights,
    binary_cross_entropy,
    concat_cols,
    conv1d,
    gelu,
    interp_matrix,
    layer_norm,
    matmul,
    max_pool,
    mean,
    multi_head_attention,
    relu,
    resample_linear,
    reshape,
    scale,
    sdpa,
    sigmoid,
    slice_cols,
    softmax,
    squared_error,
    transpose,
)
from .tensor import (
    NonFiniteValueError,
    NotEvaluatedError,
    ShapeMismatchError,
    Tensor,
    as_tensor,
    backward,
    default_dtype,
    grad_enabled,
    no_grad,
    set_default_dtype,
    topo_order,
    zero_grads,
)

__all__ = [
    "Tensor", "backward", "no_grad", "gradient_check",
    "save_checkpoint", "load_checkpoint",
]
