"""Minimal dense-tensor layer library with reverse-mode gradients.

Everything runs on float64 numpy arrays at desk scale; each layer's
backward pass is checkable against central finite differences.
"""

from .specs import (
    BatchNormSpec,
    Conv2DSpec,
    DenseSpec,
    DropoutSpec,
    LstmSpec,
    ReluSpec,
    SoftmaxSpec,
    TimeReshapeSpec,
    spec_from_obj,
    spec_to_obj,
)
from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Lstm,
    Relu,
    Softmax,
    TimeReshape,
    softmax,
    softmax_cross_entropy,
)
from .network import Network
from .optim import Adam
from .gradcheck import gradient_check, max_rel_grad_error
from .checkpoint import checkpoint_to_obj, network_from_checkpoint_obj

__all__ = [
    "Adam",
    "BatchNorm",
    "BatchNormSpec",
    "Conv2D",
    "Conv2DSpec",
    "Dense",
    "DenseSpec",
    "Dropout",
    "DropoutSpec",
    "Lstm",
    "LstmSpec",
    "Network",
    "Relu",
    "ReluSpec",
    "Softmax",
    "SoftmaxSpec",
    "TimeReshape",
    "TimeReshapeSpec",
    "checkpoint_to_obj",
    "gradient_check",
    "max_rel_grad_error",
    "network_from_checkpoint_obj",
    "softmax",
    "softmax_cross_entropy",
    "spec_from_obj",
    "spec_to_obj",
]
