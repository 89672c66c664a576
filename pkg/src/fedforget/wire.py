"""Wire encoding for federation messages.

Traffic in the simulator is measured on real byte strings, not estimated
counts. Two payload kinds exist:

* full-model payload: every parameterized layer's weights and bias, used by
  ordinary federated rounds (both the broadcast and the client upload);
* channel payload: only the listed channels' parameter rows, used by
  decentralized unlearning where just the influential set moves.

All integers are little-endian. Arrays are raw little-endian float32.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import WireError
from .nn.model import ChannelId, Model
from .nn.ops import set_channel_params, set_params

MODEL_MAGIC = b"FFWM"
CHANNEL_MAGIC = b"FFWC"


def _le32(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _from_le32(buf: bytes, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(buf, dtype="<f4").reshape(shape).astype(np.float32)


def encode_model_payload(model: Model) -> bytes:
    """Header: magic, layer count u32. Per layer: index u32, wbytes u64, then blobs."""
    parts = [MODEL_MAGIC, struct.pack("<I", len(model.param_layer_indices()))]
    for i in model.param_layer_indices():
        layer = model.layers[i]
        wb = _le32(layer.weights)
        bb = _le32(layer.bias)
        parts.append(struct.pack("<IQQ", i, len(wb), len(bb)))
        parts.append(wb)
        parts.append(bb)
    return b"".join(parts)


def _field(buf: bytes, fmt: str, off: int):
    end = off + struct.calcsize(fmt)
    if end > len(buf):
        raise WireError(f"payload truncated at byte offset {off}")
    return struct.unpack_from(fmt, buf, off), end


def _blob(buf: bytes, off: int, length: int) -> tuple[bytes, int]:
    end = off + length
    if end > len(buf):
        raise WireError(f"payload truncated at byte offset {off}")
    return buf[off:end], end


def decode_model_payload(buf: bytes, template: Model) -> Model:
    if buf[:4] != MODEL_MAGIC:
        raise WireError("model payload magic mismatch")
    (count,), off = _field(buf, "<I", 4)
    params = {}
    for _ in range(count):
        (i, wlen, blen), off = _field(buf, "<IQQ", off)
        if i >= len(template.layers):
            raise WireError(f"model payload names layer {i} beyond template")
        layer = template.layers[i]
        wb, off = _blob(buf, off, wlen)
        bb, off = _blob(buf, off, blen)
        params[i] = (_from_le32(wb, layer.weights.shape), _from_le32(bb, layer.bias.shape))
    if off != len(buf):
        raise WireError(f"{len(buf) - off} trailing bytes after model payload")
    return set_params(template, params)


def encode_channel_payload(model: Model, channels: list[ChannelId]) -> bytes:
    """Header: magic, channel count u32, param bytes u64. Per channel:
    layer u32, channel u32, row bytes u64, then the row blob and a floatbias.
    """
    entries = []
    total = 0
    for ch in sorted(channels):
        model.check_channel(ch)
        layer = model.layers[ch.layer_index]
        row = _le32(layer.weights[ch.channel_index])
        entries.append((ch, row, float(layer.bias[ch.channel_index])))
        total += len(row) + 4
    parts = [CHANNEL_MAGIC, struct.pack("<IQ", len(entries), total)]
    for ch, row, bias in entries:
        parts.append(struct.pack("<IIQ", ch.layer_index, ch.channel_index, len(row)))
        parts.append(row)
        parts.append(struct.pack("<f", bias))
    return b"".join(parts)


def decode_channel_payload(buf: bytes, template: Model) -> Model:
    if buf[:4] != CHANNEL_MAGIC:
        raise WireError("channel payload magic mismatch")
    (count, _total), off = _field(buf, "<IQ", 4)
    model = template
    for _ in range(count):
        (li, ci, rlen), off = _field(buf, "<IIQ", off)
        ch = ChannelId(li, ci)
        try:
            template.check_channel(ch)
        except IndexError as exc:
            raise WireError(f"channel payload names {ch} beyond template: {exc}") from exc
        row_shape = template.layers[li].weights.shape[1:]
        rb, off = _blob(buf, off, rlen)
        row = _from_le32(rb, row_shape)
        (bias,), off = _field(buf, "<f", off)
        model = set_channel_params(model, ch, row, bias)
    if off != len(buf):
        raise WireError(f"{len(buf) - off} trailing bytes after channel payload")
    return model


def channel_payload_nbytes(model: Model, channels: list[ChannelId]) -> int:
    """Exact length of encode_channel_payload without building it."""
    total = 16
    for ch in channels:
        model.check_channel(ch)
        row_size = int(np.prod(model.layers[ch.layer_index].weights.shape[1:]))
        total += 16 + row_size * 4 + 4
    return total
