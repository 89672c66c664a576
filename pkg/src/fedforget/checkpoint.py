"""Checkpoint files: architecture plus parameters plus masks, CRC-verified.

Layout, all integers little-endian:

    offset  size  field
    0       4     magic b"FFGT"
    4       4     format version u32 (currently 1)
    8       4     descriptor length u32
    12      n     architecture descriptor, canonical JSON (sorted keys), utf-8
    ...           per parameterized layer, in layer order:
                      weights as raw little-endian float32
                      bias as raw little-endian float32
    ...           per layer (all layers): channel_mask bit-packed (LSB first)
    ...           per layer (all layers): trainable_mask bit-packed (LSB first)
    end-4   4     CRC32 of everything before it, u32

The byte ranges of every field are recoverable from the descriptor alone,
which is what lets tests diff two checkpoints region by region.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nn.model import Model, descriptor_json, model_descriptor, model_from_descriptor

MAGIC = b"FFGT"
VERSION = 1


def _pack_mask(mask: np.ndarray) -> bytes:
    return np.packbits(mask.astype(np.uint8), bitorder="little").tobytes()


def _unpack_mask(buf: bytes, length: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(buf, dtype=np.uint8), bitorder="little")
    return bits[:length].astype(bool)


def _mask_nbytes(length: int) -> int:
    return (length + 7) // 8


def serialize_model(model: Model) -> bytes:
    desc = descriptor_json(model_descriptor(model)).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(desc)), desc]
    for i in model.param_layer_indices():
        layer = model.layers[i]
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f4").tobytes())
    for mask in model.channel_mask:
        parts.append(_pack_mask(mask))
    for mask in model.trainable_mask:
        parts.append(_pack_mask(mask))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def deserialize_model(buf: bytes) -> Model:
    if len(buf) < 16:
        raise CheckpointError(f"checkpoint truncated: {len(buf)} bytes")
    if buf[:4] != MAGIC:
        raise CheckpointError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    version, desc_len = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (stored_crc,) = struct.unpack_from("<I", buf, len(buf) - 4)
    actual_crc = zlib.crc32(buf[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise CheckpointError(
            f"checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"
        )
    off = 12
    try:
        desc = json.loads(buf[off:off + desc_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"descriptor unreadable: {exc}") from exc
    off += desc_len
    template = model_from_descriptor(desc)
    params = {}
    for i in template.param_layer_indices():
        layer = template.layers[i]
        wn = layer.weights.size * 4
        bn = layer.bias.size * 4
        if off + wn + bn > len(buf) - 4:
            raise CheckpointError(f"checkpoint truncated inside layer {i} parameters")
        w = np.frombuffer(buf[off:off + wn], dtype="<f4").reshape(layer.weights.shape)
        off += wn
        b = np.frombuffer(buf[off:off + bn], dtype="<f4").reshape(layer.bias.shape)
        off += bn
        params[i] = (w.astype(np.float32), b.astype(np.float32))
    channel_mask = []
    trainable_mask = []
    for target in (channel_mask, trainable_mask):
        for layer in template.layers:
            n = _mask_nbytes(layer.out_channels)
            if off + n > len(buf) - 4:
                raise CheckpointError("checkpoint truncated inside mask block")
            target.append(_unpack_mask(buf[off:off + n], layer.out_channels))
            off += n
    if off != len(buf) - 4:
        raise CheckpointError(f"trailing bytes: body ends at {off}, crc at {len(buf) - 4}")
    from .nn.ops import set_params

    model = set_params(template, params)
    return Model(model.layers, tuple(channel_mask), tuple(trainable_mask), model.input_shape)


def save_model(model: Model, path: str | Path) -> int:
    data = serialize_model(model)
    Path(path).write_bytes(data)
    return len(data)


def load_model(path: str | Path) -> Model:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    return deserialize_model(path.read_bytes())


def param_byte_ranges(model: Model) -> dict[str, tuple[int, int]]:
    """Half-open byte range of each field in serialize_model output.

    Keys: "header", "layer{i}.weights", "layer{i}.bias", "channel_mask",
    "trainable_mask", "crc".
    """
    desc = descriptor_json(model_descriptor(model)).encode("utf-8")
    ranges = {"header": (0, 12 + len(desc))}
    off = 12 + len(desc)
    for i in model.param_layer_indices():
        layer = model.layers[i]
        wn = layer.weights.size * 4
        ranges[f"layer{i}.weights"] = (off, off + wn)
        off += wn
        bn = layer.bias.size * 4
        ranges[f"layer{i}.bias"] = (off, off + bn)
        off += bn
    mask_total = sum(_mask_nbytes(l.out_channels) for l in model.layers)
    ranges["channel_mask"] = (off, off + mask_total)
    off += mask_total
    ranges["trainable_mask"] = (off, off + mask_total)
    off += mask_total
    ranges["crc"] = (off, off + 4)
    return ranges


def channel_byte_ranges(model: Model) -> dict[tuple[int, int], list[tuple[int, int]]]:
    """Byte ranges owned by each (layer, channel): its weight row and bias."""
    ranges = param_byte_ranges(model)
    out: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for i in model.param_layer_indices():
        layer = model.layers[i]
        w_start, _ = ranges[f"layer{i}.weights"]
        b_start, _ = ranges[f"layer{i}.bias"]
        row = int(np.prod(layer.weights.shape[1:])) * 4
        for c in range(layer.out_channels):
            out[(i, c)] = [
                (w_start + c * row, w_start + (c + 1) * row),
                (b_start + c * 4, b_start + (c + 1) * 4),
            ]
    return out
