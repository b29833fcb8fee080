from .layers import (
    BatchNorm,
    ConcatInput,
    Conv3D,
    Dense,
    Flatten,
    LeakyReLU,
    ReLU,
    Reshape,
    Sigmoid,
    Tanh,
)
from .network import (
    ActivationTrace,
    Network,
    NonFiniteError,
    ShapeError,
    evaluate,
    finite_diff_gradients,
    flatten,
    from_text,
    gradients,
    max_relative_error,
    to_text,
    unflatten,
)
from .ops import conv3d_backward, conv3d_forward, round_to_bfloat16

__all__ = [
    "ActivationTrace", "BatchNorm", "ConcatInput", "Conv3D", "Dense", "Flatten", "LeakyReLU",
    "Network", "NonFiniteError", "ReLU", "Reshape", "ShapeError", "Sigmoid", "Tanh",
    "conv3d_backward", "conv3d_forward", "evaluate", "finite_diff_gradients", "flatten",
    "from_text", "gradients", "max_relative_error", "round_to_bfloat16", "to_text", "unflatten",
]
