"""Minimal float64 tensor engine with reverse-mode differentiation."""
from .fourier import ComplexTensor, dft, dft_matrices, idft, idft_complex
from .functional import (
    avg_pool1d,
    batch_norm,
    conv1d,
    cross_entropy,
    layer_norm,
    linear,
    log_softmax,
    softmax,
    softmax_rows,
)
from .gradcheck import check_gradients, difference_resolution, numerical_gradient, relative_error
from .module import Module, const_param, uniform_param
from .tensor import (
    NumericalError,
    ShapeError,
    Tensor,
    as_tensor,
    atan2,
    concat,
    cos,
    exp,
    is_grad_enabled,
    kink_margin,
    log,
    matmul,
    no_grad,
    ones,
    relu,
    sigmoid,
    sin,
    sqrt,
    stack,
    tanh,
    zeros,
)

__all__ = [
    "ComplexTensor", "Module", "NumericalError", "ShapeError", "Tensor", "as_tensor", "atan2",
    "avg_pool1d", "batch_norm", "check_gradients", "difference_resolution", "concat", "const_param", "conv1d", "cos",
    "cross_entropy", "dft", "dft_matrices", "exp", "idft", "idft_complex", "is_grad_enabled",
    "layer_norm", "linear", "log", "log_softmax", "matmul", "no_grad", "numerical_gradient",
    "kink_margin", "ones", "relative_error", "relu", "sigmoid", "sin", "softmax", "softmax_rows", "sqrt",
    "stack", "tanh", "uniform_param", "zeros",
]
