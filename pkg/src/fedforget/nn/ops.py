"""Forward, backward, and update operations over Model.

Channel masking zeroes a channel's output after the layer computes it, so a
masked channel contributes nothing downstream while its parameters stay
intact. That makes masking reversible and O(1): ablation studies flip mask
bits instead of copying weights.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ShapeError
from .backend import kernels
from .instrument import COUNTERS
from .model import (
    ChannelId,
    Conv2d,
    Dense,
    GradientSet,
    Layer,
    Model,
)


def forward(model: Model, x: np.ndarray, keep_trace: bool = False):
    """Logits for a batch x of shape (B, *model.input_shape).

    With keep_trace=True also returns the per-layer activation trace needed
    by backward(). Masked channels are zeroed right after their layer.
    """
    if x.ndim != 1 + len(model.input_shape) or x.shape[1:] != model.input_shape:
        raise ShapeError(f"input shape {x.shape[1:]} != model input {model.input_shape}")
    if x.dtype != model.dtype:
        x = x.astype(model.dtype)
    COUNTERS.forward_batches += 1
    trace: list[dict] = []
    out = x
    for i, layer in enumerate(model.layers):
        entry: dict = {"input": out}
        if layer.kind == "conv2d":
            out = kernels.conv2d_forward(out, layer.weights, layer.bias)
            out = _apply_mask(out, model.channel_mask[i], spatial=True)
        elif layer.kind == "dense":
            out = out @ layer.weights.T + layer.bias
            out = _apply_mask(out, model.channel_mask[i], spatial=False)
        elif layer.kind == "relu":
            out = np.maximum(out, 0)
        elif layer.kind == "maxpool2":
            out, arg = kernels.maxpool2_forward(out)
            entry["arg"] = arg
        elif layer.kind == "flatten":
            out = out.reshape(out.shape[0], -1)
        if keep_trace:
            trace.append(entry)
    if keep_trace:
        return out, trace
    return out


def _apply_mask(out: np.ndarray, mask: np.ndarray, spatial: bool) -> np.ndarray:
    if mask.all():
        return out
    if spatial:
        out[:, ~mask, :, :] = 0
    else:
        out[:, ~mask] = 0
    return out


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and dloss/dlogits, accumulated in float64."""
    z = logits.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    expz = np.exp(z)
    probs = expz / expz.sum(axis=1, keepdims=True)
    b = logits.shape[0]
    loss = float(-np.log(probs[np.arange(b), labels] + 1e-300).mean())
    dlogits = probs
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b
    return loss, dlogits.astype(logits.dtype)


def loss_per_sample(model: Model, x: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample cross-entropy, float64, for membership-inference scoring."""
    logits = forward(model, x).astype(np.float64)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return -logp[np.arange(x.shape[0]), labels]


def predict(model: Model, x: np.ndarray) -> np.ndarray:
    return forward(model, x).argmax(axis=1)


def backward(model: Model, trace: list[dict], dlogits: np.ndarray) -> GradientSet:
    """Gradients for every parameterized layer given a forward trace."""
    grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(model.layers)
    dout = dlogits
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        entry = trace[i]
        if layer.kind == "conv2d":
            dout = _mask_grad(dout, model.channel_mask[i], spatial=True)
            dx, dw, db = kernels.conv2d_backward(entry["input"], layer.weights, dout)
            grads[i] = (dw, db)
            dout = dx
        elif layer.kind == "dense":
            dout = _mask_grad(dout, model.channel_mask[i], spatial=False)
            x = entry["input"]
            dw = (dout.astype(np.float64).T @ x.astype(np.float64)).astype(layer.weights.dtype)
            db = dout.astype(np.float64).sum(axis=0).astype(layer.bias.dtype)
            grads[i] = (dw, db)
            dout = dout @ layer.weights
        elif layer.kind == "relu":
            dout = dout * (entry["input"] > 0)
        elif layer.kind == "maxpool2":
            dout = kernels.maxpool2_backward(entry["input"].shape, entry["arg"], dout)
        elif layer.kind == "flatten":
            dout = dout.reshape(entry["input"].shape)
    return GradientSet(tuple(grads))


def _mask_grad(dout: np.ndarray, mask: np.ndarray, spatial: bool) -> np.ndarray:
    if mask.all():
        return dout
    dout = dout.copy()
    if spatial:
        dout[:, ~mask, :, :] = 0
    else:
        dout[:, ~mask] = 0
    return dout


def train_step(model: Model, x: np.ndarray, labels: np.ndarray, lr: float) -> tuple[Model, float]:
    logits, trace = forward(model, x, keep_trace=True)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    grads = backward(model, trace, dlogits)
    return sgd_step(model, grads, lr), loss


def sgd_step(model: Model, grads: GradientSet, lr: float) -> Model:
    """One SGD update; channels with trainable_mask False are left untouched."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    new_layers: dict[int, Layer] = {}
    for i in model.param_layer_indices():
        g = grads.grads[i]
        if g is None:
            continue
        layer = model.layers[i]
        dw, db = g
        tm = model.trainable_mask[i]
        w = layer.weights.copy()
        b = layer.bias.copy()
        w[tm] -= lr * dw[tm]
        b[tm] -= lr * db[tm]
        new_layers[i] = Conv2d(w, b) if layer.kind == "conv2d" else Dense(w, b)
    return model.replace_layers(new_layers)


# ---------------------------------------------------------------------------
# Channel masking and freezing
# ---------------------------------------------------------------------------

def mask_channels(model: Model, channels: list[ChannelId], value: bool = False) -> Model:
    """Set channel_mask bits; value=False hides the channels."""
    per_layer: dict[int, np.ndarray] = {}
    for ch in channels:
        model.check_channel(ch)
        if ch.layer_index not in per_layer:
            per_layer[ch.layer_index] = model.channel_mask[ch.layer_index].copy()
        per_layer[ch.layer_index][ch.channel_index] = value
    return model.with_channel_mask(per_layer)


def prune_channel(model: Model, ch: ChannelId) -> Model:
    model.check_channel(ch)
    return mask_channels(model, [ch], value=False)


def unmask_all(model: Model) -> Model:
    masks = {i: np.ones(l.out_channels, dtype=bool)
             for i, l in enumerate(model.layers) if l.kind in ("conv2d", "dense")}
    return model.with_channel_mask(masks)


def restrict_trainable(model: Model, channels: list[ChannelId]) -> Model:
    """Freeze everything except the given channels."""
    per_layer = {i: np.zeros(model.layers[i].out_channels, dtype=bool)
                 for i in model.param_layer_indices()}
    for ch in channels:
        model.check_channel(ch)
        per_layer[ch.layer_index][ch.channel_index] = True
    return model.with_trainable_mask(per_layer)


def unfreeze_all(model: Model) -> Model:
    masks = {i: np.ones(model.layers[i].out_channels, dtype=bool)
             for i in model.param_layer_indices()}
    return model.with_trainable_mask(masks)


def rebuild_without_channels(model: Model, channels: list[ChannelId]) -> Model:
    """Structurally zero the channels' parameters instead of masking them.

    For post-ReLU/pool architectures this matches mask-based ablation exactly
    and serves as its independent check.
    """
    per_layer: dict[int, list[int]] = {}
    for ch in channels:
        model.check_channel(ch)
        per_layer.setdefault(ch.layer_index, []).append(ch.channel_index)
    new_layers: dict[int, Layer] = {}
    for i, idxs in per_layer.items():
        layer = model.layers[i]
        w = layer.weights.copy()
        b = layer.bias.copy()
        w[idxs] = 0
        b[idxs] = 0
        new_layers[i] = Conv2d(w, b) if layer.kind == "conv2d" else Dense(w, b)
    return model.replace_layers(new_layers)


# ---------------------------------------------------------------------------
# Parameter access for aggregation, serialization, and deltas
# ---------------------------------------------------------------------------

def get_params(model: Model) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    return {i: (model.layers[i].weights, model.layers[i].bias)
            for i in model.param_layer_indices()}


def set_params(model: Model, params: dict[int, tuple[np.ndarray, np.ndarray]]) -> Model:
    new_layers: dict[int, Layer] = {}
    for i, (w, b) in params.items():
        layer = model.layers[i]
        if w.shape != layer.weights.shape or b.shape != layer.bias.shape:
            raise ShapeError(f"parameter shape mismatch at layer {i}")
        w = w.astype(layer.weights.dtype)
        b = b.astype(layer.bias.dtype)
        new_layers[i] = Conv2d(w, b) if layer.kind == "conv2d" else Dense(w, b)
    return model.replace_layers(new_layers)


def add_scaled_params(
    model: Model,
    delta: dict[int, tuple[np.ndarray, np.ndarray]],
    scale: float,
) -> Model:
    """model + scale * delta, accumulated in float64 then cast back."""
    params = {}
    for i, (w, b) in get_params(model).items():
        if i in delta:
            dw, db = delta[i]
            w = (w.astype(np.float64) + scale * dw.astype(np.float64)).astype(w.dtype)
            b = (b.astype(np.float64) + scale * db.astype(np.float64)).astype(b.dtype)
        params[i] = (w, b)
    return set_params(model, params)


def channel_params(model: Model, ch: ChannelId) -> tuple[np.ndarray, float]:
    """The weight row and bias scalar owned by one channel."""
    model.check_channel(ch)
    layer = model.layers[ch.layer_index]
    return layer.weights[ch.channel_index], float(layer.bias[ch.channel_index])


def set_channel_params(model: Model, ch: ChannelId, w_row: np.ndarray, b_val: float) -> Model:
    model.check_channel(ch)
    layer = model.layers[ch.layer_index]
    if w_row.shape != layer.weights.shape[1:]:
        raise ShapeError(f"channel row shape {w_row.shape} != {layer.weights.shape[1:]}")
    w = layer.weights.copy()
    b = layer.bias.copy()
    w[ch.channel_index] = w_row
    b[ch.channel_index] = b_val
    new = Conv2d(w, b) if layer.kind == "conv2d" else Dense(w, b)
    return model.replace_layers({ch.layer_index: new})
