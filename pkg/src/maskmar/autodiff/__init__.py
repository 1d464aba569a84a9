from maskmar.autodiff.functional import (
    ConvSpec,
    activation,
    avg_pool2d,
    conv2d,
    conv_output_size,
    conv_transpose2d,
    leaky_relu,
    relu,
    sigmoid,
    tanh,
)
from maskmar.autodiff.gradcheck import check_gradients, numerical_grad, relative_error
from maskmar.autodiff.optim import Adam, AdamState, adam_step, init_bias, init_conv_weight
from maskmar.autodiff.tensor import Tensor, as_tensor, concat, is_grad_enabled, mean, no_grad, square, tabs, tsum

__all__ = [
    "Adam",
    "AdamState",
    "ConvSpec",
    "Tensor",
    "activation",
    "adam_step",
    "as_tensor",
    "avg_pool2d",
    "check_gradients",
    "concat",
    "conv2d",
    "conv_output_size",
    "conv_transpose2d",
    "init_bias",
    "init_conv_weight",
    "is_grad_enabled",
    "leaky_relu",
    "mean",
    "no_grad",
    "numerical_grad",
    "relative_error",
    "relu",
    "sigmoid",
    "square",
    "tabs",
    "tanh",
    "tsum",
]
