"""Effectiveness and efficiency measurement.

Three families of numbers:

* accuracy metrics on real models (per class, unlearning class, remaining);
* a loss-threshold membership-inference attack scored by recall;
* the analytic cost model in abstract f/c/s units, with compressed
  (scale parameter n) and uncompressed (explicit epoch/client/batch counts)
  forms, plus byte totals measured from actual run records.

Unit semantics: f = one full-model forward on one batch; g = one server
aggregation; c = one serialized full-model transfer; s = one training sample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import LabeledDataset
from .errors import ConfigError, MetricError
from .nn.model import Model
from .nn.ops import forward, loss_per_sample

SCHEME_NAMES = ("retrain", "de", "ce")


# ---------------------------------------------------------------------------
# Accuracy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AccuracyReport:
    """Per-class accuracy; classes absent from the dataset come out as NaN."""

    per_class: np.ndarray
    overall: float

    def remaining_accuracy(self, excluded_class: int) -> float:
        """Unweighted mean of per-class accuracies over all other classes."""
        others = np.delete(self.per_class, excluded_class)
        others = others[~np.isnan(others)]
        if others.size == 0:
            raise MetricError("no remaining classes with samples to average")
        return float(others.mean())


def class_accuracy(model: Model, dataset: LabeledDataset, batch_size: int = 256) -> AccuracyReport:
    if dataset.size == 0:
        raise MetricError("cannot score accuracy on an empty dataset")
    correct = np.zeros(dataset.class_count, dtype=np.int64)
    for start in range(0, dataset.size, batch_size):
        x = dataset.images[start:start + batch_size]
        y = dataset.labels[start:start + batch_size]
        pred = forward(model, x).argmax(axis=1)
        np.add.at(correct, y[pred == y], 1)
    counts = dataset.histogram()
    per_class = np.full(dataset.class_count, np.nan)
    present = counts > 0
    per_class[present] = correct[present] / counts[present]
    return AccuracyReport(per_class=per_class, overall=float(correct.sum() / dataset.size))


# ---------------------------------------------------------------------------
# Membership inference
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackConfig:
    """Loss-threshold attack: flag a sample as member iff its loss < tau."""

    loss_threshold: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.loss_threshold):
            raise ConfigError(f"loss threshold must be finite, got {self.loss_threshold}")


def mia_recall(model: Model, member_samples: LabeledDataset, cfg: AttackConfig) -> float:
    """Fraction of true members the attack still flags: TP / (TP + FN)."""
    if member_samples.size == 0:
        raise MetricError("membership inference needs a nonempty member set")
    losses = loss_per_sample(model, member_samples.images, member_samples.labels)
    flagged = int((losses < cfg.loss_threshold).sum())
    return flagged / member_samples.size


def calibrate_threshold(
    model: Model, members: LabeledDataset, nonmembers: LabeledDataset
) -> AttackConfig:
    """Pick tau maximizing balanced accuracy on a held-out member/non-member
    split; ties resolve to the smallest candidate so the choice is stable."""
    if members.size == 0 or nonmembers.size == 0:
        raise MetricError("calibration needs both member and non-member samples")
    m_loss = loss_per_sample(model, members.images, members.labels)
    n_loss = loss_per_sample(model, nonmembers.images, nonmembers.labels)
    pooled = np.unique(np.concatenate([m_loss, n_loss]))
    mids = (pooled[:-1] + pooled[1:]) / 2 if pooled.size > 1 else np.array([])
    candidates = np.concatenate([[pooled[0] - 1.0], mids, [pooled[-1] + 1.0]])
    best_tau, best_score = None, -1.0
    for tau in candidates:
        tpr = float((m_loss < tau).mean())
        tnr = float((n_loss >= tau).mean())
        score = (tpr + tnr) / 2
        if score > best_score:
            best_tau, best_score = float(tau), score
    return AttackConfig(loss_threshold=best_tau)


# ---------------------------------------------------------------------------
# Analytic cost model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostModelParams:
    """Scale parameter n stands in for epoch, client, and batch counts alike
    in the compressed formulas; the _full variants take them separately."""

    n: float
    delta: float
    f_units: float = 1.0
    g_units: float = 1.0
    c_units: float = 1.0
    s_units: float = 1.0
    class_count: int = 10
    ce_storage_fraction: float = 0.05

    def __post_init__(self) -> None:
        for name in ("n", "f_units", "g_units", "c_units", "s_units"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not 0 < self.delta <= 1:
            raise ConfigError(f"delta must be in (0, 1], got {self.delta}")
        if self.class_count < 2:
            raise ConfigError(f"class_count must be >= 2, got {self.class_count}")
        if not 0 < self.ce_storage_fraction <= 1:
            raise ConfigError(
                f"ce_storage_fraction must be in (0, 1], got {self.ce_storage_fraction}"
            )


def _check_scheme(scheme: str) -> str:
    s = scheme.lower()
    if s not in SCHEME_NAMES:
        raise ConfigError(f"scheme must be one of {SCHEME_NAMES}, got {scheme!r}")
    return s


def cost_computation(p: CostModelParams, scheme: str) -> float:
    """Compressed computation cost in f-units.

    retrain: n * (n^3 * 6f + g)
    de:      n * (n^3 * f * (1 + 5 delta) + g)
    ce:      n^2 * f * (1 + 5 delta)
    """
    s = _check_scheme(scheme)
    n, f, g, d = p.n, p.f_units, p.g_units, p.delta
    if s == "retrain":
        return n * (n**3 * 6 * f + g)
    if s == "de":
        return n * (n**3 * f * (1 + 5 * d) + g)
    return n**2 * f * (1 + 5 * d)


def cost_computation_full(
    scheme: str,
    e_global: float,
    n_user: float,
    e_local: float,
    n_batch: float,
    delta: float,
    f_units: float = 1.0,
    g_units: float = 1.0,
) -> float:
    """Uncompressed computation cost with the four scale factors separate.

    retrain: E_global * (N_user * E_local * N_batch * 6f + g)
    de:      E_global * (N_user * E_local * N_batch * f * (1 + 5 delta) + g)
    ce:      E_global * N_batch * f * (1 + 5 delta)   (server-side, no clients)
    """
    s = _check_scheme(scheme)
    if s == "retrain":
        return e_global * (n_user * e_local * n_batch * 6 * f_units + g_units)
    if s == "de":
        return e_global * (n_user * e_local * n_batch * f_units * (1 + 5 * delta) + g_units)
    return e_global * n_batch * f_units * (1 + 5 * delta)


def cost_communication(p: CostModelParams, scheme: str) -> float:
    """retrain: 2 n^2 c; de: 2 n^2 c delta; ce: 0."""
    s = _check_scheme(scheme)
    if s == "retrain":
        return 2 * p.n**2 * p.c_units
    if s == "de":
        return 2 * p.n**2 * p.c_units * p.delta
    return 0.0


def cost_communication_full(
    scheme: str, e_unlearn: float, n_clients: float, delta: float, c_units: float = 1.0
) -> float:
    """Uncompressed form: E * N * 2c, scaled by delta for the de scheme."""
    s = _check_scheme(scheme)
    if s == "retrain":
        return e_unlearn * n_clients * 2 * c_units
    if s == "de":
        return e_unlearn * n_clients * 2 * c_units * delta
    return 0.0


def cost_storage(p: CostModelParams, scheme: str) -> float:
    """retrain/de: (|Y|-1)/|Y| * s; ce: the configured server fraction of s."""
    s = _check_scheme(scheme)
    if s in ("retrain", "de"):
        return (p.class_count - 1) / p.class_count * p.s_units
    return p.ce_storage_fraction * p.s_units


def speedup_vs_retrain(p: CostModelParams, scheme: str) -> float:
    """Computation ratio retrain/scheme; with g = 0 and parallel clients the
    de ratio is 6 / (1 + 5 delta) and ce reaches 6 n^2 / (1 + 5 delta)."""
    s = _check_scheme(scheme)
    if s == "retrain":
        return 1.0
    return cost_computation(p, "retrain") / cost_computation(p, s)


def parallel_speedup(p: CostModelParams, scheme: str) -> float:
    """The g = 0 closed forms quoted above, evaluated directly."""
    s = _check_scheme(scheme)
    if s == "retrain":
        return 1.0
    if s == "de":
        return 6 / (1 + 5 * p.delta)
    return 6 * p.n**2 / (1 + 5 * p.delta)


def communication_savings(p: CostModelParams) -> float:
    """retrain/de communication ratio, which is exactly 1/delta."""
    return cost_communication(p, "retrain") / cost_communication(p, "de")


# ---------------------------------------------------------------------------
# Run records and CSV artifacts
# ---------------------------------------------------------------------------

@dataclass
class MetricsRecord:
    round_index: int
    phase: str
    per_class_accuracy: np.ndarray
    unlearning_class_accuracy: float
    remaining_accuracy: float
    bytes_up: int
    bytes_down: int
    wall_clock_seconds: float = 0.0
    mia_recall: float = float("nan")

    def __post_init__(self) -> None:
        if self.bytes_up < 0 or self.bytes_down < 0:
            raise MetricError("byte counters cannot be negative")
        for value in (self.unlearning_class_accuracy, self.remaining_accuracy):
            if not math.isnan(value) and not 0 <= value <= 1:
                raise MetricError(f"accuracy {value} outside [0, 1]")


def record_from_report(
    round_index: int,
    phase: str,
    report: AccuracyReport,
    unlearning_class: int,
    bytes_up: int = 0,
    bytes_down: int = 0,
    wall_clock_seconds: float = 0.0,
    recall: float = float("nan"),
) -> MetricsRecord:
    return MetricsRecord(
        round_index=round_index,
        phase=phase,
        per_class_accuracy=report.per_class,
        unlearning_class_accuracy=float(report.per_class[unlearning_class]),
        remaining_accuracy=report.remaining_accuracy(unlearning_class),
        bytes_up=bytes_up,
        bytes_down=bytes_down,
        wall_clock_seconds=wall_clock_seconds,
        mia_recall=recall,
    )


def metrics_header(class_count: int) -> list[str]:
    return (
        ["round", "phase", "unlearning_class_accuracy", "remaining_accuracy"]
        + [f"acc_class_{c}" for c in range(class_count)]
        + ["bytes_up", "bytes_down", "mia_recall"]
    )


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else format(value, ".10g")


def write_metrics_csv(records: list[MetricsRecord], class_count: int, path: str | Path) -> None:
    """The deterministic artifact: no timestamps or wall-clock columns, so the
    same run produces the same bytes. Timings go in the sidecar file."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(metrics_header(class_count))
        for r in records:
            writer.writerow(
                [r.round_index, r.phase, _fmt(r.unlearning_class_accuracy),
                 _fmt(r.remaining_accuracy)]
                + [_fmt(float(a)) for a in r.per_class_accuracy]
                + [r.bytes_up, r.bytes_down, _fmt(r.mia_recall)]
            )


def write_timings_csv(records: list[MetricsRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["round", "phase", "wall_clock_seconds"])
        for r in records:
            writer.writerow([r.round_index, r.phase, format(r.wall_clock_seconds, ".6f")])


def measured_traffic(records: list) -> tuple[int, int]:
    """(bytes_up_total, bytes_down_total) from per-round traffic records.

    Accepts anything with a .traffic attribute carrying uplink/downlink bytes.
    """
    up = sum(r.traffic.uplink_bytes for r in records)
    down = sum(r.traffic.downlink_bytes for r in records)
    return up, down


@dataclass(frozen=True)
class CostReport:
    scheme: str
    computation: float
    communication: float
    storage: float
    parallel_speedup: float


def cost_table(p: CostModelParams) -> list[CostReport]:
    return [
        CostReport(
            scheme=s,
            computation=cost_computation(p, s),
            communication=cost_communication(p, s),
            storage=cost_storage(p, s),
            parallel_speedup=parallel_speedup(p, s),
        )
        for s in SCHEME_NAMES
    ]


def format_cost_table(p: CostModelParams) -> str:
    rows = cost_table(p)
    lines = [
        f"cost model: n={p.n:g} delta={p.delta:g} f={p.f_units:g} "
        f"g={p.g_units:g} c={p.c_units:g} s={p.s_units:g} |Y|={p.class_count}",
        f"{'scheme':<10}{'computation':>16}{'communication':>16}{'storage':>12}{'speedup':>10}",
    ]
    for r in rows:
        lines.append(
            f"{r.scheme:<10}{r.computation:>16.6g}{r.communication:>16.6g}"
            f"{r.storage:>12.6g}{r.parallel_speedup:>10.4g}"
        )
    return "\n".join(lines)
