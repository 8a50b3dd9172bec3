"""Tensor type, differentiable kernels and gradient tools."""
from .tensor import (
    DimensionError,
    NumericError,
    Tensor,
    as_tensor,
    backward,
    grad,
    is_debug,
    is_grad_enabled,
    no_grad,
    set_debug,
    set_grad_enabled,
)
from .ops import (
    add,
    amax,
    broadcast_to,
    concat,
    div,
    erf,
    exp,
    gelu,
    getitem,
    leaky_relu,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    power,
    reshape,
    sigmoid,
    softmax,
    softmax_axis,
    softplus,
    sqrt,
    sub,
    sum,
    sum_to,
    swapaxes,
    tanh,
    transpose,
    var,
)
from .spatial import (
    avg_pool2,
    conv2d,
    conv2d_input_grad,
    conv2d_weight_grad,
    conv_output_size,
    pixel_shuffle,
    shift2d,
    space_to_depth,
)
from .gradcheck import GradCheckError, GradCheckReport, check_gradients, grad_check, relative_error
from .rng import Rng
