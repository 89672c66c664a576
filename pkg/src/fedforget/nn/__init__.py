"""Micro neural-network engine with channel-level masking and freezing."""

from .backend import KERNEL_BACKEND, get_kernels
from .instrument import COUNTERS
from .model import (
    ChannelId,
    Conv2d,
    Dense,
    Flatten,
    GradientSet,
    Layer,
    MaxPool2,
    Model,
    ReLU,
    cnn_descriptor,
    descriptor_json,
    init_model,
    model_descriptor,
    model_from_descriptor,
    model_from_layers,
)
from .ops import (
    add_scaled_params,
    backward,
    channel_params,
    forward,
    get_params,
    loss_per_sample,
    mask_channels,
    predict,
    prune_channel,
    rebuild_without_channels,
    restrict_trainable,
    set_channel_params,
    set_params,
    sgd_step,
    softmax_cross_entropy,
    train_step,
    unfreeze_all,
    unmask_all,
)

__all__ = [
    "KERNEL_BACKEND",
    "get_kernels",
    "COUNTERS",
    "ChannelId",
    "Conv2d",
    "Dense",
    "Flatten",
    "GradientSet",
    "Layer",
    "MaxPool2",
    "Model",
    "ReLU",
    "cnn_descriptor",
    "descriptor_json",
    "init_model",
    "model_descriptor",
    "model_from_descriptor",
    "model_from_layers",
    "add_scaled_params",
    "backward",
    "channel_params",
    "forward",
    "get_params",
    "loss_per_sample",
    "mask_channels",
    "predict",
    "prune_channel",
    "rebuild_without_channels",
    "restrict_trainable",
    "set_channel_params",
    "set_params",
    "sgd_step",
    "softmax_cross_entropy",
    "train_step",
    "unfreeze_all",
    "unmask_all",
]
