"""End-to-end orchestration: train, explain, unlearn, evaluate, attack.

Each stage reads and writes documented artifact files in the run's output
directory, so the CLI can re-run any stage alone. ``run_pipeline`` chains
them and records a manifest of everything written.

Artifact names:

    config.json        copy of the config the run used
    baseline.ckpt      the trained global model
    influential.json   the selected channel set
    unlearned.ckpt     the model after unlearning
    metrics.csv        per-round and per-epoch metrics (deterministic)
    attack.csv         membership-inference recalls
    costs.txt          analytic cost table at the run's scale
    timings.csv        wall-clock per stage (excluded from determinism checks)
    manifest.json      hashes and paths of all of the above
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_model, save_model
from .config import ExperimentConfig
from .data import LabeledDataset, ingest_dataset, make_synthetic
from .errors import ConfigError, DataError
from .explain import InfluentialSet, explain_class, select_random
from .fedsim import Client, FederationState, partition_iid, partition_per_class, train_global
from .metrics import (
    AttackConfig,
    CostModelParams,
    MetricsRecord,
    calibrate_threshold,
    class_accuracy,
    format_cost_table,
    measured_traffic,
    mia_recall,
    record_from_report,
    write_metrics_csv,
    write_timings_csv,
)
from .nn.model import Model, cnn_descriptor, init_model
from .rng import derive_rng
from .unlearn import (
    UnlearnOutcome,
    UnlearningRequest,
    build_server_cache,
    centralized_unlearn,
    decentralized_unlearn,
    delete_class,
)


@dataclass
class RunManifest:
    config_hash: str
    version: str
    created_at: str
    artifacts: dict[str, str] = field(default_factory=dict)
    completed_stages: list[str] = field(default_factory=list)

    def add(self, name: str, path: Path) -> None:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.artifacts[name] = f"{path.name}:{digest}"

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")


def load_run_dataset(cfg: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """(train, test) per the dataset config; file datasets are split by a
    seeded shuffle using test_fraction."""
    ds = cfg.dataset
    if ds.kind == "synthetic":
        return make_synthetic(
            train_size=ds.train_size,
            test_size=ds.test_size,
            class_count=ds.class_count,
            image_size=ds.image_size,
            noise=ds.noise,
            seed=cfg.seed,
        )
    full = ingest_dataset(ds.path, ds.kind, ds.labels_path)
    if full.class_count != ds.class_count:
        full = LabeledDataset(full.images, full.labels, ds.class_count)
    rng = derive_rng(cfg.seed, "train-test-split")
    order = rng.permutation(full.size)
    test_count = max(1, int(round(full.size * ds.test_fraction)))
    test_idx = np.sort(order[:test_count])
    train_idx = np.sort(order[test_count:])
    return full.subset(train_idx), full.subset(test_idx)


def build_clients(cfg: ExperimentConfig, train: LabeledDataset) -> list[Client]:
    if cfg.federation.partition == "iid":
        return partition_iid(train, cfg.federation.clients, cfg.seed)
    return partition_per_class(train, cfg.seed)


def build_model(cfg: ExperimentConfig, train: LabeledDataset) -> Model:
    desc = cnn_descriptor(
        input_shape=train.sample_shape,
        class_count=train.class_count,
        conv_channels=cfg.model.conv_channels,
        kernel_size=cfg.model.kernel_size,
        dense_units=cfg.model.dense_units,
    )
    return init_model(desc, cfg.seed)


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def stage_train(cfg: ExperimentConfig, out: Path,
                data: tuple[LabeledDataset, LabeledDataset] | None = None,
                ) -> tuple[FederationState, list[MetricsRecord]]:
    train, test = data if data is not None else load_run_dataset(cfg)
    clients = build_clients(cfg, train)
    model = build_model(cfg, train)
    records: list[MetricsRecord] = []
    started = time.perf_counter()

    def on_round(state: FederationState) -> None:
        nonlocal started
        report = class_accuracy(state.model, test)
        last = state.history[-1]
        now = time.perf_counter()
        records.append(record_from_report(
            round_index=last.round_index,
            phase="train",
            report=report,
            unlearning_class=cfg.unlearn.class_index,
            bytes_up=last.traffic.uplink_bytes,
            bytes_down=last.traffic.downlink_bytes,
            wall_clock_seconds=now - started,
        ))
        started = now

    state = train_global(model, clients, cfg.train, cfg.seed, progress=on_round)
    save_model(state.model, out / "baseline.ckpt")
    return state, records


def stage_explain(cfg: ExperimentConfig, out: Path, model: Model,
                  train: LabeledDataset) -> InfluentialSet:
    request = cfg.unlearn
    if request.selection == "random":
        influential = select_random(model, request.delta, cfg.seed)
    else:
        selected, effects = explain_class(
            model, train, request.class_index, request.delta,
            probe_limit=request.probe_limit, seed=cfg.seed,
        )
        if request.selection == "important":
            influential = selected
        else:
            from .explain import select_nonimportant

            influential = select_nonimportant(model, effects, request.delta)
    influential.save(out / "influential.json")
    return influential


def stage_unlearn(cfg: ExperimentConfig, out: Path, model: Model,
                  clients: list[Client], train: LabeledDataset,
                  test: LabeledDataset, influential: InfluentialSet,
                  ) -> tuple[UnlearnOutcome, list[MetricsRecord]]:
    request = cfg.unlearn.request(cfg.seed)
    if request.scheme == "de":
        outcome = decentralized_unlearn(
            model, clients, influential, request, cfg.unlearn.train_config()
        )
    else:
        cache = build_server_cache(train, request, cfg.unlearn.ce)
        outcome = centralized_unlearn(model, cache, influential, request, cfg.unlearn.ce)
    records: list[MetricsRecord] = []
    started = time.perf_counter()
    for epoch_model, rec in zip(outcome.epoch_models, outcome.epoch_records):
        report = class_accuracy(epoch_model, test)
        now = time.perf_counter()
        records.append(record_from_report(
            round_index=rec.epoch,
            phase=f"unlearn-{request.scheme}",
            report=report,
            unlearning_class=request.class_index,
            bytes_up=rec.traffic.uplink_bytes,
            bytes_down=rec.traffic.downlink_bytes,
            wall_clock_seconds=now - started,
        ))
        started = now
    save_model(outcome.model, out / "unlearned.ckpt")
    return outcome, records


def split_members_for_attack(cfg: ExperimentConfig, train: LabeledDataset,
                             test: LabeledDataset) -> tuple[LabeledDataset, ...]:
    """(calibration members, calibration nonmembers, target members) for the
    unlearning class. Calibration uses remaining-class data so the threshold
    is independent of the class under attack."""
    frac = cfg.attack.calibration_fraction
    cal_members = delete_class(train, cfg.unlearn.class_index)
    cal_nonmembers = delete_class(test, cfg.unlearn.class_index)
    rng = derive_rng(cfg.seed, "attack-calibration")
    m_count = max(1, int(round(cal_members.size * frac)))
    n_count = max(1, int(round(cal_nonmembers.size * frac)))
    m_idx = np.sort(rng.choice(cal_members.size, size=m_count, replace=False))
    n_idx = np.sort(rng.choice(cal_nonmembers.size, size=n_count, replace=False))
    targets = train.of_class(cfg.unlearn.class_index)
    if targets.size == 0:
        raise DataError(f"no training samples of class {cfg.unlearn.class_index} to attack")
    return cal_members.subset(m_idx), cal_nonmembers.subset(n_idx), targets


def stage_attack(cfg: ExperimentConfig, out: Path, baseline: Model,
                 unlearned: Model | None, train: LabeledDataset,
                 test: LabeledDataset) -> dict[str, float]:
    cal_m, cal_n, targets = split_members_for_attack(cfg, train, test)
    attack_cfg = calibrate_threshold(baseline, cal_m, cal_n)
    results = {
        "tau": attack_cfg.loss_threshold,
        "recall_baseline": mia_recall(baseline, targets, attack_cfg),
    }
    if unlearned is not None:
        results["recall_unlearned"] = mia_recall(unlearned, targets, attack_cfg)
    lines = ["model,recall,tau"]
    lines.append(f"baseline,{results['recall_baseline']:.10g},{attack_cfg.loss_threshold:.10g}")
    if unlearned is not None:
        lines.append(
            f"unlearned,{results['recall_unlearned']:.10g},{attack_cfg.loss_threshold:.10g}"
        )
    (out / "attack.csv").write_text("\n".join(lines) + "\n")
    return results


def stage_costs(cfg: ExperimentConfig, out: Path) -> str:
    params = CostModelParams(
        n=cfg.federation.clients,
        delta=cfg.unlearn.delta,
        class_count=cfg.dataset.class_count,
    )
    text = format_cost_table(params)
    (out / "costs.txt").write_text(text + "\n")
    return text


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def run_pipeline(cfg: ExperimentConfig, config_raw: bytes,
                 out_dir: str | Path | None = None) -> RunManifest:
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_bytes(config_raw)
    from .config import config_hash

    manifest = RunManifest(
        config_hash=config_hash(config_raw),
        version=__version__,
        created_at=time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
    )
    manifest.add("config", out / "config.json")

    data = load_run_dataset(cfg)
    train, test = data

    state, records = stage_train(cfg, out, data)
    manifest.add("baseline_checkpoint", out / "baseline.ckpt")
    manifest.completed_stages.append("train")

    if cfg.unlearn.enabled:
        influential = stage_explain(cfg, out, state.model, train)
        manifest.add("influential_set", out / "influential.json")
        manifest.completed_stages.append("explain")

        outcome, unlearn_records = stage_unlearn(
            cfg, out, state.model, list(state.clients), train, test, influential
        )
        records.extend(unlearn_records)
        manifest.add("unlearned_checkpoint", out / "unlearned.ckpt")
        manifest.completed_stages.append("unlearn")
        unlearned_model = outcome.model
    else:
        unlearned_model = None

    write_metrics_csv(records, cfg.dataset.class_count, out / "metrics.csv")
    write_timings_csv(records, out / "timings.csv")
    manifest.add("metrics", out / "metrics.csv")
    manifest.add("timings", out / "timings.csv")
    manifest.completed_stages.append("eval")

    if cfg.attack.enabled and cfg.unlearn.enabled:
        stage_attack(cfg, out, state.model, unlearned_model, train, test)
        manifest.add("attack", out / "attack.csv")
        manifest.completed_stages.append("attack")

    stage_costs(cfg, out)
    manifest.add("costs", out / "costs.txt")
    manifest.completed_stages.append("costs")

    manifest.save(out / "manifest.json")
    return manifest
