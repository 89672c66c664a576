"""Experiment configuration: JSON schema, validation, defaults.

A config file fully determines a run. Validation happens before any work
starts and reports the offending key path, so a bad config never produces a
partial output directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .fedsim import TrainConfig
from .unlearn import SCHEMES, SELECTIONS, CentralizedConfig, UnlearningRequest

DATASET_KINDS = ("synthetic", "idx", "csv")
PARTITIONS = ("iid", "per_class")


@dataclass(frozen=True)
class DatasetConfig:
    kind: str = "synthetic"
    path: str | None = None
    labels_path: str | None = None
    train_size: int = 10000
    test_size: int = 2000
    class_count: int = 10
    image_size: int = 28
    noise: float = 0.3
    test_fraction: float = 0.2


@dataclass(frozen=True)
class ModelConfig:
    conv_channels: tuple[int, ...] = (8, 16)
    kernel_size: int = 3
    dense_units: tuple[int, ...] = (64,)


@dataclass(frozen=True)
class FederationConfig:
    clients: int = 10
    partition: str = "iid"


@dataclass(frozen=True)
class UnlearnConfig:
    enabled: bool = True
    class_index: int = 0
    delta: float = 0.2
    scheme: str = "de"
    selection: str = "important"
    epochs: int = 4
    local_epochs: int = 1
    learning_rate: float = 0.1
    batch_size: int = 128
    probe_limit: int = 256
    ce: CentralizedConfig = field(default_factory=CentralizedConfig)

    def request(self, seed: int) -> UnlearningRequest:
        return UnlearningRequest(
            class_index=self.class_index,
            delta=self.delta,
            scheme=self.scheme,
            selection=self.selection,
            epochs=self.epochs,
            seed=seed,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            global_rounds=self.epochs,
            local_epochs=self.local_epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
        )


@dataclass(frozen=True)
class AttackConfigSpec:
    enabled: bool = True
    calibration_fraction: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    output_dir: str = "runs/default"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    unlearn: UnlearnConfig = field(default_factory=UnlearnConfig)
    attack: AttackConfigSpec = field(default_factory=AttackConfigSpec)


def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _get_section(obj: dict, key: str) -> dict:
    section = obj.get(key, {})
    _expect(isinstance(section, dict), key, f"must be an object, got {type(section).__name__}")
    return section


def _int(section, path, key, default, minimum=None, maximum=None):
    value = section.get(key, default)
    _expect(isinstance(value, int) and not isinstance(value, bool),
            f"{path}.{key}", f"must be an integer, got {value!r}")
    if minimum is not None:
        _expect(value >= minimum, f"{path}.{key}", f"must be >= {minimum}, got {value}")
    if maximum is not None:
        _expect(value <= maximum, f"{path}.{key}", f"must be <= {maximum}, got {value}")
    return value


def _num(section, path, key, default, low=None, high=None, low_open=False):
    value = section.get(key, default)
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool),
            f"{path}.{key}", f"must be a number, got {value!r}")
    value = float(value)
    if low is not None:
        ok = value > low if low_open else value >= low
        _expect(ok, f"{path}.{key}", f"must be {'>' if low_open else '>='} {low}, got {value}")
    if high is not None:
        _expect(value <= high, f"{path}.{key}", f"must be <= {high}, got {value}")
    return value


def _str(section, path, key, default, choices=None):
    value = section.get(key, default)
    _expect(isinstance(value, str), f"{path}.{key}", f"must be a string, got {value!r}")
    if choices is not None:
        _expect(value in choices, f"{path}.{key}", f"must be one of {choices}, got {value!r}")
    return value


def _bool(section, path, key, default):
    value = section.get(key, default)
    _expect(isinstance(value, bool), f"{path}.{key}", f"must be true or false, got {value!r}")
    return value


_KNOWN_TOP = {"seed", "output_dir", "dataset", "model", "federation", "train",
              "unlearn", "attack"}


def parse_config(obj: dict) -> ExperimentConfig:
    _expect(isinstance(obj, dict), "config", "top level must be a JSON object")
    unknown = set(obj) - _KNOWN_TOP
    _expect(not unknown, "config", f"unknown keys {sorted(unknown)}")

    seed = _int(obj, "config", "seed", 0, minimum=0)
    output_dir = _str(obj, "config", "output_dir", "runs/default")

    ds = _get_section(obj, "dataset")
    kind = _str(ds, "dataset", "kind", "synthetic", DATASET_KINDS)
    if kind != "synthetic":
        _expect("path" in ds, "dataset.path", f"required for kind {kind!r}")
    if kind == "idx":
        _expect("labels_path" in ds, "dataset.labels_path", "required for kind 'idx'")
    dataset = DatasetConfig(
        kind=kind,
        path=ds.get("path"),
        labels_path=ds.get("labels_path"),
        train_size=_int(ds, "dataset", "train_size", 10000, minimum=10),
        test_size=_int(ds, "dataset", "test_size", 2000, minimum=10),
        class_count=_int(ds, "dataset", "class_count", 10, minimum=2),
        image_size=_int(ds, "dataset", "image_size", 28, minimum=8),
        noise=_num(ds, "dataset", "noise", 0.3, low=0.0),
        test_fraction=_num(ds, "dataset", "test_fraction", 0.2, low=0.0, high=0.9, low_open=True),
    )

    md = _get_section(obj, "model")
    conv = md.get("conv_channels", [8, 16])
    _expect(isinstance(conv, list) and conv and all(isinstance(c, int) and c >= 1 for c in conv),
            "model.conv_channels", f"must be a nonempty list of positive integers, got {conv!r}")
    dense = md.get("dense_units", [64])
    _expect(isinstance(dense, list) and all(isinstance(u, int) and u >= 1 for u in dense),
            "model.dense_units", f"must be a list of positive integers, got {dense!r}")
    model = ModelConfig(
        conv_channels=tuple(conv),
        kernel_size=_int(md, "model", "kernel_size", 3, minimum=1),
        dense_units=tuple(dense),
    )

    fed = _get_section(obj, "federation")
    federation = FederationConfig(
        clients=_int(fed, "federation", "clients", 10, minimum=1),
        partition=_str(fed, "federation", "partition", "iid", PARTITIONS),
    )

    tr = _get_section(obj, "train")
    train = TrainConfig(
        global_rounds=_int(tr, "train", "global_rounds", 50, minimum=1),
        local_epochs=_int(tr, "train", "local_epochs", 5, minimum=1),
        batch_size=_int(tr, "train", "batch_size", 128, minimum=1),
        learning_rate=_num(tr, "train", "learning_rate", 0.1, low=0.0, low_open=True),
        participation=_num(tr, "train", "participation", 1.0, low=0.0, high=1.0, low_open=True),
        lr_decay=_num(tr, "train", "lr_decay", 1.0, low=0.0, high=1.0, low_open=True),
    )

    un = _get_section(obj, "unlearn")
    ce_section = _get_section(un, "ce")
    ce = CentralizedConfig(
        cache_size=_int(ce_section, "unlearn.ce", "cache_size", 1600, minimum=2),
        learning_rate=_num(ce_section, "unlearn.ce", "learning_rate", 0.01,
                           low=0.0, low_open=True),
        batch_size=_int(ce_section, "unlearn.ce", "batch_size", 64, minimum=1),
    )
    unlearn = UnlearnConfig(
        enabled=_bool(un, "unlearn", "enabled", True),
        class_index=_int(un, "unlearn", "class_index", 0, minimum=0,
                         maximum=dataset.class_count - 1),
        delta=_num(un, "unlearn", "delta", 0.2, low=0.0, high=1.0, low_open=True),
        scheme=_str(un, "unlearn", "scheme", "de", SCHEMES),
        selection=_str(un, "unlearn", "selection", "important", SELECTIONS),
        epochs=_int(un, "unlearn", "epochs", 4, minimum=1),
        local_epochs=_int(un, "unlearn", "local_epochs", 1, minimum=1),
        learning_rate=_num(un, "unlearn", "learning_rate", 0.1, low=0.0, low_open=True),
        batch_size=_int(un, "unlearn", "batch_size", 128, minimum=1),
        probe_limit=_int(un, "unlearn", "probe_limit", 256, minimum=1),
        ce=ce,
    )

    at = _get_section(obj, "attack")
    attack = AttackConfigSpec(
        enabled=_bool(at, "attack", "enabled", True),
        calibration_fraction=_num(at, "attack", "calibration_fraction", 0.5,
                                  low=0.0, high=0.9, low_open=True),
    )

    if federation.partition == "per_class":
        _expect(federation.clients == dataset.class_count, "federation.clients",
                f"per_class partition needs exactly {dataset.class_count} clients "
                f"(one per class), got {federation.clients}")

    return ExperimentConfig(
        seed=seed, output_dir=output_dir, dataset=dataset, model=model,
        federation=federation, train=train, unlearn=unlearn, attack=attack,
    )


def load_config(path: str | Path) -> tuple[ExperimentConfig, bytes]:
    """Parse a config file; also returns the raw bytes for hashing."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(obj), raw


def config_hash(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def default_config_json() -> str:
    """A complete config with every key at its default, as a starting point."""
    obj = {
        "seed": 0,
        "output_dir": "runs/default",
        "dataset": {"kind": "synthetic", "train_size": 10000, "test_size": 2000,
                    "class_count": 10, "image_size": 28, "noise": 0.3},
        "model": {"conv_channels": [8, 16], "kernel_size": 3, "dense_units": [64]},
        "federation": {"clients": 10, "partition": "iid"},
        "train": {"global_rounds": 50, "local_epochs": 5, "batch_size": 128,
                  "learning_rate": 0.1, "participation": 1.0},
        "unlearn": {"enabled": True, "class_index": 0, "delta": 0.2, "scheme": "de",
                    "selection": "important", "epochs": 4, "local_epochs": 1,
                    "learning_rate": 0.1, "batch_size": 128, "probe_limit": 256,
                    "ce": {"cache_size": 1600, "learning_rate": 0.01, "batch_size": 64}},
        "attack": {"enabled": True, "calibration_fraction": 0.5},
    }
    return json.dumps(obj, indent=2)
