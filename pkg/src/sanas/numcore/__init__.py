from .tensor import Tensor, check_finite
from .ops import (
    GRU_PARAM_NAMES,
    add,
    bernoulli_log_prob,
    conv2d,
    conv_output_size,
    flatten,
    gru_cell,
    linear,
    log_softmax,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    softmax_xent,
    tanh,
    total,
)
from .params import Gradients, ParamStore, adam_step, collect_grads
from .gradcheck import grad_check, numeric_gradient

__all__ = [
    "Tensor", "check_finite", "GRU_PARAM_NAMES", "add", "bernoulli_log_prob", "conv2d",
    "conv_output_size", "flatten", "gru_cell", "linear", "log_softmax", "relu", "reshape",
    "scale", "sigmoid", "softmax", "softmax_xent", "tanh", "total", "Gradients", "ParamStore",
    "adam_step", "collect_grads", "grad_check", "numeric_gradient",
]
