"""Minimal numpy neural-network core: layers, loss, RMSProp, backprop and training."""
from .layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    conv2d_forward,
    dense_forward,
    dropout_forward,
    layer_from_spec,
    maxpool2d_forward,
)
from .losses import categorical_cross_entropy, cross_entropy_grad
from .network import (
    Network,
    TrainedModel,
    backward,
    load_checkpoint,
    one_hot,
    save_checkpoint,
    train,
)
from .optim import OptimizerState, rmsprop_step

__all__ = [
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "MaxPool2D",
    "Network",
    "OptimizerState",
    "TrainedModel",
    "backward",
    "categorical_cross_entropy",
    "conv2d_forward",
    "cross_entropy_grad",
    "dense_forward",
    "dropout_forward",
    "layer_from_spec",
    "load_checkpoint",
    "maxpool2d_forward",
    "one_hot",
    "rmsprop_step",
    "save_checkpoint",
    "train",
]
