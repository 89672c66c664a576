"""Model structure: layers, channel addressing, masks.

A Model is immutable after construction; every training or masking operation
returns a new instance. Channels are the unit of explanation and unlearning:
one output feature map of a conv layer, or one output unit of a dense layer,
together with its bias. ``channel_mask`` zeroes a channel's output in the
forward pass; ``trainable_mask`` gates the optimizer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ..errors import ShapeError
from ..rng import derive_rng


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Conv2d:
    """Valid (unpadded) stride-1 convolution; weights (out_c, in_c, k, k)."""

    weights: np.ndarray
    bias: np.ndarray
    kind: str = field(default="conv2d", init=False)

    def __post_init__(self) -> None:
        if self.weights.ndim != 4:
            raise ShapeError(f"conv2d weights must be rank 4, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"conv2d bias shape {self.bias.shape} != ({self.weights.shape[0]},)")
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "bias", _frozen(self.bias))

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Dense:
    """Fully connected layer; weights (out_units, in_units)."""

    weights: np.ndarray
    bias: np.ndarray
    kind: str = field(default="dense", init=False)

    def __post_init__(self) -> None:
        if self.weights.ndim != 2:
            raise ShapeError(f"dense weights must be rank 2, got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"dense bias shape {self.bias.shape} != ({self.weights.shape[0]},)")
        object.__setattr__(self, "weights", _frozen(self.weights))
        object.__setattr__(self, "bias", _frozen(self.bias))

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class ReLU:
    kind: str = field(default="relu", init=False)
    out_channels: int = field(default=0, init=False)


@dataclass(frozen=True)
class MaxPool2:
    """2x2 max pooling with stride 2; odd trailing rows/columns are dropped."""

    kind: str = field(default="maxpool2", init=False)
    out_channels: int = field(default=0, init=False)


@dataclass(frozen=True)
class Flatten:
    kind: str = field(default="flatten", init=False)
    out_channels: int = field(default=0, init=False)


Layer = Conv2d | Dense | ReLU | MaxPool2 | Flatten

PARAM_KINDS = ("conv2d", "dense")


@dataclass(frozen=True, order=True)
class ChannelId:
    layer_index: int
    channel_index: int


@dataclass(frozen=True)
class GradientSet:
    """Per-layer (dweights, dbias) aligned with Model.layers; None for non-parameterized."""

    grads: tuple[tuple[np.ndarray, np.ndarray] | None, ...]


@dataclass(frozen=True)
class Model:
    layers: tuple[Layer, ...]
    channel_mask: tuple[np.ndarray, ...]
    trainable_mask: tuple[np.ndarray, ...]
    input_shape: tuple[int, int, int]

    def __post_init__(self) -> None:
        if len(self.channel_mask) != len(self.layers) or len(self.trainable_mask) != len(self.layers):
            raise ShapeError("mask tuples must have one entry per layer")
        for i, layer in enumerate(self.layers):
            for name, mask in (("channel_mask", self.channel_mask[i]),
                               ("trainable_mask", self.trainable_mask[i])):
                if mask.dtype != np.bool_ or mask.shape != (layer.out_channels,):
                    raise ShapeError(
                        f"{name}[{i}] must be bool of length {layer.out_channels}, "
                        f"got {mask.dtype} {mask.shape}"
                    )
        object.__setattr__(self, "channel_mask", tuple(_frozen(m) for m in self.channel_mask))
        object.__setattr__(self, "trainable_mask", tuple(_frozen(m) for m in self.trainable_mask))

    @property
    def class_count(self) -> int:
        return self.layers[-1].out_channels

    @property
    def dtype(self) -> np.dtype:
        for layer in self.layers:
            if layer.kind in PARAM_KINDS:
                return layer.weights.dtype
        raise ShapeError("model has no parameterized layers")

    def param_layer_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.kind in PARAM_KINDS]

    def channels(self) -> Iterator[ChannelId]:
        """All prunable channels in (layer, channel) order."""
        for i in self.param_layer_indices():
            for c in range(self.layers[i].out_channels):
                yield ChannelId(i, c)

    def channel_count(self) -> int:
        return sum(self.layers[i].out_channels for i in self.param_layer_indices())

    def parameter_count(self) -> int:
        return sum(
            self.layers[i].weights.size + self.layers[i].bias.size
            for i in self.param_layer_indices()
        )

    def check_channel(self, ch: ChannelId) -> None:
        if not 0 <= ch.layer_index < len(self.layers):
            raise IndexError(f"layer index {ch.layer_index} out of range")
        layer = self.layers[ch.layer_index]
        if layer.kind not in PARAM_KINDS:
            raise IndexError(f"layer {ch.layer_index} ({layer.kind}) has no channels")
        if not 0 <= ch.channel_index < layer.out_channels:
            raise IndexError(
                f"channel {ch.channel_index} out of range for layer {ch.layer_index} "
                f"({layer.out_channels} channels)"
            )

    def replace_layers(self, new_layers: dict[int, Layer]) -> "Model":
        layers = tuple(new_layers.get(i, l) for i, l in enumerate(self.layers))
        return Model(layers, self.channel_mask, self.trainable_mask, self.input_shape)

    def with_channel_mask(self, masks: dict[int, np.ndarray]) -> "Model":
        mask = tuple(masks.get(i, m) for i, m in enumerate(self.channel_mask))
        return Model(self.layers, mask, self.trainable_mask, self.input_shape)

    def with_trainable_mask(self, masks: dict[int, np.ndarray]) -> "Model":
        mask = tuple(masks.get(i, m) for i, m in enumerate(self.trainable_mask))
        return Model(self.layers, self.channel_mask, mask, self.input_shape)


def all_true_masks(layers: tuple[Layer, ...]) -> tuple[np.ndarray, ...]:
    return tuple(np.ones(l.out_channels, dtype=bool) for l in layers)


def model_from_layers(layers: list[Layer], input_shape: tuple[int, int, int]) -> Model:
    layers_t = tuple(layers)
    masks = all_true_masks(layers_t)
    return Model(layers_t, masks, all_true_masks(layers_t), tuple(input_shape))


# ---------------------------------------------------------------------------
# Architecture descriptor (the JSON block stored in checkpoints)
# ---------------------------------------------------------------------------

def model_descriptor(model: Model) -> dict:
    layers = []
    for layer in model.layers:
        if layer.kind == "conv2d":
            o, i, k, _ = layer.weights.shape
            layers.append({"kind": "conv2d", "out_channels": o, "in_channels": i, "kernel_size": k})
        elif layer.kind == "dense":
            o, i = layer.weights.shape
            layers.append({"kind": "dense", "out_features": o, "in_features": i})
        else:
            layers.append({"kind": layer.kind})
    return {"input_shape": list(model.input_shape), "layers": layers}


def model_from_descriptor(desc: dict, dtype=np.float32) -> Model:
    """Zero-parameter model matching a descriptor (checkpoint load target)."""
    layers: list[Layer] = []
    for spec in desc["layers"]:
        kind = spec["kind"]
        if kind == "conv2d":
            o, i, k = spec["out_channels"], spec["in_channels"], spec["kernel_size"]
            layers.append(Conv2d(np.zeros((o, i, k, k), dtype), np.zeros(o, dtype)))
        elif kind == "dense":
            o, i = spec["out_features"], spec["in_features"]
            layers.append(Dense(np.zeros((o, i), dtype), np.zeros(o, dtype)))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "maxpool2":
            layers.append(MaxPool2())
        elif kind == "flatten":
            layers.append(Flatten())
        else:
            raise ShapeError(f"unknown layer kind {kind!r} in descriptor")
    return model_from_layers(layers, tuple(desc["input_shape"]))


def descriptor_json(desc: dict) -> str:
    return json.dumps(desc, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Reference CNN construction
# ---------------------------------------------------------------------------

def cnn_descriptor(
    input_shape: tuple[int, int, int],
    class_count: int,
    conv_channels: tuple[int, ...] = (8, 16),
    kernel_size: int = 3,
    dense_units: tuple[int, ...] = (64,),
) -> dict:
    """conv->relu->pool stacks, then dense->relu stacks, then the class head."""
    c, h, w = input_shape
    layers: list[dict] = []
    in_c = c
    for out_c in conv_channels:
        layers.append({"kind": "conv2d", "out_channels": out_c, "in_channels": in_c,
                       "kernel_size": kernel_size})
        layers.append({"kind": "relu"})
        layers.append({"kind": "maxpool2"})
        h = (h - kernel_size + 1) // 2
        w = (w - kernel_size + 1) // 2
        in_c = out_c
    layers.append({"kind": "flatten"})
    in_units = in_c * h * w
    for units in dense_units:
        layers.append({"kind": "dense", "out_features": units, "in_features": in_units})
        layers.append({"kind": "relu"})
        in_units = units
    layers.append({"kind": "dense", "out_features": class_count, "in_features": in_units})
    return {"input_shape": list(input_shape), "layers": layers}


def init_model(desc: dict, seed: int, dtype=np.float32) -> Model:
    """He-initialized weights, zero biases, streams derived per layer."""
    zero = model_from_descriptor(desc, dtype)
    new_layers: dict[int, Layer] = {}
    for i in zero.param_layer_indices():
        layer = zero.layers[i]
        rng = derive_rng(seed, "init", i)
        fan_in = int(np.prod(layer.weights.shape[1:]))
        std = np.sqrt(2.0 / fan_in)
        w = rng.normal(0.0, std, size=layer.weights.shape).astype(dtype)
        b = np.zeros(layer.bias.shape, dtype)
        new_layers[i] = Conv2d(w, b) if layer.kind == "conv2d" else Dense(w, b)
    return zero.replace_layers(new_layers)
