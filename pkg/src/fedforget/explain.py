"""Explanation by channel ablation.

The effect of a channel on a probe set is the accuracy the model loses when
the channel's output is zeroed:

    effect(S) = acc(model, probe) - acc(model with S masked, probe)

with accuracies as fractions, so effects live in [-1, 1]. Channels whose
removal hurts the probe class most are its influential channels. Selection
is per layer: each parameterized layer contributes its top share of channels
so the influential set spans the network instead of collapsing into one
layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import LabeledDataset
from .errors import ConfigError, PlanError
from .nn.model import ChannelId, Model
from .nn.ops import forward, mask_channels
from .rng import derive_rng


@dataclass(frozen=True)
class ChannelEffect:
    channel: ChannelId
    effect: float


@dataclass(frozen=True)
class InfluentialSet:
    delta: float
    channels: tuple[ChannelId, ...]

    def __post_init__(self) -> None:
        if not 0 < self.delta <= 1:
            raise ConfigError(f"delta must be in (0, 1], got {self.delta}")

    def by_layer(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for ch in sorted(self.channels):
            out.setdefault(ch.layer_index, []).append(ch.channel_index)
        return out

    def to_json(self) -> str:
        layers = [
            {"layer_index": li, "channels": chans}
            for li, chans in sorted(self.by_layer().items())
        ]
        return json.dumps({"delta": self.delta, "layers": layers}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "InfluentialSet":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise PlanError(f"influential set is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "delta" not in obj or "layers" not in obj:
            raise PlanError("influential set must have 'delta' and 'layers' keys")
        channels = []
        for entry in obj["layers"]:
            if "layer_index" not in entry or "channels" not in entry:
                raise PlanError("each layer entry needs 'layer_index' and 'channels'")
            for c in entry["channels"]:
                channels.append(ChannelId(int(entry["layer_index"]), int(c)))
        if len(set(channels)) != len(channels):
            raise PlanError("influential set contains duplicate channels")
        return cls(delta=float(obj["delta"]), channels=tuple(sorted(channels)))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "InfluentialSet":
        path = Path(path)
        if not path.exists():
            raise PlanError(f"influential set file not found: {path}")
        return cls.from_json(path.read_text(encoding="utf-8"))


def make_probe_set(dataset: LabeledDataset, class_index: int, limit: int | None = None,
                   seed: int = 0) -> LabeledDataset:
    """Samples of one class, optionally capped at ``limit`` drawn without
    replacement."""
    probe = dataset.of_class(class_index)
    if probe.size == 0:
        raise ConfigError(f"no samples of class {class_index} to probe with")
    if limit is not None and probe.size > limit:
        rng = derive_rng(seed, "probe", class_index)
        idx = rng.choice(probe.size, size=limit, replace=False)
        probe = probe.subset(np.sort(idx))
    return probe


def _accuracy(model: Model, probe: LabeledDataset, batch_size: int) -> float:
    correct = 0
    for start in range(0, probe.size, batch_size):
        x = probe.images[start:start + batch_size]
        y = probe.labels[start:start + batch_size]
        correct += int((forward(model, x).argmax(axis=1) == y).sum())
    return correct / probe.size


def channel_effect(model: Model, channel: ChannelId, probe: LabeledDataset,
                   baseline: float | None = None, batch_size: int = 256) -> float:
    if baseline is None:
        baseline = _accuracy(model, probe, batch_size)
    masked = mask_channels(model, [channel])
    return baseline - _accuracy(masked, probe, batch_size)


def effect_sweep(model: Model, probe: LabeledDataset,
                 batch_size: int = 256) -> list[ChannelEffect]:
    """Effect of every channel, one ablation per channel plus one baseline."""
    baseline = _accuracy(model, probe, batch_size)
    effects = []
    for ch in model.channels():
        masked = mask_channels(model, [ch])
        effects.append(ChannelEffect(ch, baseline - _accuracy(masked, probe, batch_size)))
    return effects


def selection_count(channel_count: int, delta: float) -> int:
    """Channels taken from a layer: the delta share rounded half up, min 1."""
    return max(1, int(np.floor(delta * channel_count + 0.5)))


def select_influential(model: Model, effects: list[ChannelEffect], delta: float) -> InfluentialSet:
    """Per layer, the selection-count channels with the largest effect.

    Ties break toward the lower channel index so selection is deterministic.
    """
    if not 0 < delta <= 1:
        raise ConfigError(f"delta must be in (0, 1], got {delta}")
    by_layer: dict[int, list[ChannelEffect]] = {}
    for e in effects:
        by_layer.setdefault(e.channel.layer_index, []).append(e)
    chosen: list[ChannelId] = []
    for li in sorted(by_layer):
        layer_effects = by_layer[li]
        count = selection_count(len(layer_effects), delta)
        ranked = sorted(layer_effects, key=lambda e: (-e.effect, e.channel.channel_index))
        chosen.extend(e.channel for e in ranked[:count])
    return InfluentialSet(delta=delta, channels=tuple(sorted(chosen)))


def select_nonimportant(model: Model, effects: list[ChannelEffect], delta: float) -> InfluentialSet:
    """The same per-layer counts, but the smallest-effect channels."""
    if not 0 < delta <= 1:
        raise ConfigError(f"delta must be in (0, 1], got {delta}")
    by_layer: dict[int, list[ChannelEffect]] = {}
    for e in effects:
        by_layer.setdefault(e.channel.layer_index, []).append(e)
    chosen: list[ChannelId] = []
    for li in sorted(by_layer):
        layer_effects = by_layer[li]
        count = selection_count(len(layer_effects), delta)
        ranked = sorted(layer_effects, key=lambda e: (e.effect, e.channel.channel_index))
        chosen.extend(e.channel for e in ranked[:count])
    return InfluentialSet(delta=delta, channels=tuple(sorted(chosen)))


def select_random(model: Model, delta: float, seed: int) -> InfluentialSet:
    """Per-layer counts as select_influential, channels drawn uniformly."""
    if not 0 < delta <= 1:
        raise ConfigError(f"delta must be in (0, 1], got {delta}")
    chosen: list[ChannelId] = []
    for li in model.param_layer_indices():
        n = model.layers[li].out_channels
        count = selection_count(n, delta)
        rng = derive_rng(seed, "select-random", li)
        picked = rng.choice(n, size=count, replace=False)
        chosen.extend(ChannelId(li, int(c)) for c in picked)
    return InfluentialSet(delta=delta, channels=tuple(sorted(chosen)))


def explain_class(model: Model, dataset: LabeledDataset, class_index: int, delta: float,
                  probe_limit: int | None = 256, seed: int = 0,
                  batch_size: int = 256) -> tuple[InfluentialSet, list[ChannelEffect]]:
    """Full pipeline: probe set, effect sweep, top-delta selection."""
    probe = make_probe_set(dataset, class_index, probe_limit, seed)
    effects = effect_sweep(model, probe, batch_size)
    return select_influential(model, effects, delta), effects
