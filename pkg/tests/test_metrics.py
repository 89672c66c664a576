"""Accuracy/MIA metric oracles and the analytic cost model checked against
an independent symbolic evaluation."""

import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from fedforget.data import LabeledDataset
from fedforget.errors import ConfigError, MetricError
from fedforget.metrics import (
    AttackConfig,
    CostModelParams,
    MetricsRecord,
    calibrate_threshold,
    class_accuracy,
    communication_savings,
    cost_communication,
    cost_communication_full,
    cost_computation,
    cost_computation_full,
    cost_storage,
    cost_table,
    format_cost_table,
    measured_traffic,
    metrics_header,
    mia_recall,
    parallel_speedup,
    record_from_report,
    speedup_vs_retrain,
    write_metrics_csv,
    write_timings_csv,
)
from fedforget.nn import forward, init_model, loss_per_sample

from conftest import tiny_descriptor


@pytest.fixture
def model():
    return init_model(tiny_descriptor(), seed=5)


def toy_dataset(n=90, seed=0, class_count=3):
    rng = np.random.default_rng(seed)
    images = rng.uniform(0, 1, size=(n, 1, 8, 8)).astype(np.float32)
    labels = rng.integers(0, class_count, size=n).astype(np.int64)
    return LabeledDataset(images, labels, class_count)


# -- accuracy -----------------------------------------------------------------

def test_class_accuracy_matches_confusion_oracle(model):
    ds = toy_dataset(97)
    report = class_accuracy(model, ds, batch_size=16)
    pred = forward(model, ds.images).argmax(axis=1)
    for c in range(3):
        sel = ds.labels == c
        want = (pred[sel] == c).mean()
        assert report.per_class[c] == pytest.approx(want, abs=1e-12)
    assert report.overall == pytest.approx((pred == ds.labels).mean(), abs=1e-12)


def test_class_accuracy_absent_class_is_nan(model):
    ds = toy_dataset(60)
    only01 = ds.subset(np.flatnonzero(ds.labels != 2))
    report = class_accuracy(model, only01)
    assert math.isnan(report.per_class[2])
    assert not math.isnan(report.per_class[0])


def test_remaining_accuracy_excludes_target(model):
    ds = toy_dataset(90)
    report = class_accuracy(model, ds)
    want = np.delete(report.per_class, 1).mean()
    assert report.remaining_accuracy(1) == pytest.approx(want, abs=1e-12)


def test_remaining_accuracy_requires_other_classes(model):
    ds = toy_dataset(90).of_class(1)
    report = class_accuracy(model, ds)
    with pytest.raises(MetricError):
        report.remaining_accuracy(1)


def test_class_accuracy_empty_dataset(model):
    empty = LabeledDataset(np.zeros((0, 1, 8, 8), np.float32), np.zeros(0, np.int64), 3)
    with pytest.raises(MetricError):
        class_accuracy(model, empty)


# -- membership inference ------------------------------------------------------

def test_mia_recall_extreme_thresholds(model):
    ds = toy_dataset(50)
    assert mia_recall(model, ds, AttackConfig(loss_threshold=1e9)) == 1.0
    assert mia_recall(model, ds, AttackConfig(loss_threshold=-1.0)) == 0.0


def test_mia_recall_counts_below_threshold(model):
    ds = toy_dataset(50)
    losses = loss_per_sample(model, ds.images, ds.labels)
    tau = float(np.median(losses))
    want = (losses < tau).mean()
    assert mia_recall(model, ds, AttackConfig(loss_threshold=tau)) == pytest.approx(want)


@settings(max_examples=20, deadline=None)
@given(t1=st.floats(-1, 10), t2=st.floats(-1, 10))
def test_mia_recall_monotone_in_threshold(t1, t2):
    model = init_model(tiny_descriptor(), seed=5)
    ds = toy_dataset(40)
    lo, hi = min(t1, t2), max(t1, t2)
    r_lo = mia_recall(model, ds, AttackConfig(loss_threshold=lo))
    r_hi = mia_recall(model, ds, AttackConfig(loss_threshold=hi))
    assert r_lo <= r_hi


def test_mia_recall_empty_members(model):
    empty = LabeledDataset(np.zeros((0, 1, 8, 8), np.float32), np.zeros(0, np.int64), 3)
    with pytest.raises(MetricError):
        mia_recall(model, empty, AttackConfig(loss_threshold=1.0))


def test_attack_config_rejects_nonfinite():
    with pytest.raises(ConfigError):
        AttackConfig(loss_threshold=float("nan"))
    with pytest.raises(ConfigError):
        AttackConfig(loss_threshold=float("inf"))


def test_calibrate_threshold_separable(model):
    """When member losses all sit below non-member losses the calibrated
    threshold separates them perfectly; otherwise it still beats guessing."""
    members = toy_dataset(40, seed=1)
    nonmembers = toy_dataset(40, seed=2)
    # members labeled by the model's own argmax have the lowest possible loss
    pred = forward(model, members.images).argmax(axis=1)
    members = LabeledDataset(members.images, pred.astype(np.int64), 3)
    m_loss = loss_per_sample(model, members.images, members.labels)
    n_loss = loss_per_sample(model, nonmembers.images, nonmembers.labels)
    cfg = calibrate_threshold(model, members, nonmembers)
    if m_loss.max() < n_loss.min():
        assert mia_recall(model, members, cfg) == 1.0
        assert mia_recall(model, nonmembers, cfg) == 0.0
    else:
        balanced = (
            mia_recall(model, members, cfg)
            + 1.0
            - mia_recall(model, nonmembers, cfg)
        ) / 2
        assert balanced >= 0.5


def test_calibrate_threshold_deterministic(model):
    members = toy_dataset(30, seed=3)
    nonmembers = toy_dataset(30, seed=4)
    a = calibrate_threshold(model, members, nonmembers)
    b = calibrate_threshold(model, members, nonmembers)
    assert a.loss_threshold == b.loss_threshold


def test_calibrate_threshold_needs_samples(model):
    ds = toy_dataset(10)
    empty = LabeledDataset(np.zeros((0, 1, 8, 8), np.float32), np.zeros(0, np.int64), 3)
    with pytest.raises(MetricError):
        calibrate_threshold(model, empty, ds)
    with pytest.raises(MetricError):
        calibrate_threshold(model, ds, empty)


# -- cost model vs symbolic second evaluator ------------------------------------

N, D, F, G, C, S, Y = sympy.symbols("n delta f g c s y", positive=True)

SYM_COMP = {
    "retrain": N * (N**3 * 6 * F + G),
    "de": N * (N**3 * F * (1 + 5 * D) + G),
    "ce": N**2 * F * (1 + 5 * D),
}
SYM_COMM = {
    "retrain": 2 * N**2 * C,
    "de": 2 * N**2 * C * D,
    "ce": sympy.Integer(0),
}
SYM_STORE = {
    "retrain": (Y - 1) / Y * S,
    "de": (Y - 1) / Y * S,
}

GRID = [
    dict(n=10, delta=0.05, f=1.0, g=1.0, c=1.0, s=1.0, y=10),
    dict(n=10, delta=0.2, f=2.0, g=3.0, c=0.5, s=4.0, y=10),
    dict(n=4, delta=0.5, f=1.0, g=0.0, c=1.0, s=1.0, y=5),
    dict(n=7, delta=1.0, f=1.5, g=2.5, c=2.0, s=3.0, y=3),
]


def params_of(row):
    return CostModelParams(
        n=row["n"], delta=row["delta"], f_units=row["f"], g_units=row["g"],
        c_units=row["c"], s_units=row["s"], class_count=row["y"],
    )


@pytest.mark.parametrize("row", GRID)
def test_cost_formulas_match_sympy(row):
    subs = {N: row["n"], D: row["delta"], F: row["f"], G: row["g"],
            C: row["c"], S: row["s"], Y: row["y"]}
    p = params_of(row)
    for scheme in ("retrain", "de", "ce"):
        want = float(SYM_COMP[scheme].subs(subs))
        assert cost_computation(p, scheme) == pytest.approx(want, rel=1e-12)
        want = float(SYM_COMM[scheme].subs(subs))
        assert cost_communication(p, scheme) == pytest.approx(want, rel=1e-12, abs=1e-12)
    for scheme in ("retrain", "de"):
        want = float(SYM_STORE[scheme].subs(subs))
        assert cost_storage(p, scheme) == pytest.approx(want, rel=1e-12)
    assert cost_storage(p, "ce") == pytest.approx(0.05 * row["s"], rel=1e-12)


def test_full_forms_reduce_to_compressed():
    """Setting every scale factor to n must reproduce the compressed forms."""
    n, delta = 6.0, 0.2
    p = CostModelParams(n=n, delta=delta, f_units=1.3, g_units=0.7)
    for scheme in ("retrain", "de"):
        full = cost_computation_full(scheme, e_global=n, n_user=n, e_local=n,
                                     n_batch=n, delta=delta, f_units=1.3, g_units=0.7)
        assert full == pytest.approx(cost_computation(p, scheme), rel=1e-12)
    full_ce = cost_computation_full("ce", e_global=n, n_user=n, e_local=n,
                                    n_batch=n, delta=delta, f_units=1.3, g_units=0.7)
    assert full_ce == pytest.approx(cost_computation(p, "ce"), rel=1e-12)
    comm = cost_communication_full("de", e_unlearn=n, n_clients=n, delta=delta, c_units=2.0)
    p2 = CostModelParams(n=n, delta=delta, c_units=2.0)
    assert comm == pytest.approx(cost_communication(p2, "de"), rel=1e-12)


def test_de_computation_at_delta_one_equals_sixth_coefficient():
    """1 + 5 delta hits 6 at delta = 1: moving every channel costs as much
    per pass as retraining."""
    p = CostModelParams(n=9, delta=1.0, g_units=0.0)
    assert cost_computation(p, "de") == pytest.approx(cost_computation(p, "retrain"))


def test_communication_savings_is_inverse_delta():
    for delta in (0.05, 0.2, 0.5, 1.0):
        p = CostModelParams(n=10, delta=delta)
        assert communication_savings(p) == pytest.approx(1.0 / delta, rel=1e-12)


def test_parallel_speedup_closed_forms():
    p = CostModelParams(n=10, delta=0.05)
    assert parallel_speedup(p, "de") == pytest.approx(6 / 1.25, rel=1e-12)
    assert parallel_speedup(p, "ce") == pytest.approx(6 * 100 / 1.25, rel=1e-12)
    assert parallel_speedup(p, "retrain") == 1.0


def test_speedup_vs_retrain_sequential():
    p = CostModelParams(n=10, delta=0.05, f_units=1.0, g_units=1.0)
    want = (10 * (1000 * 6 + 1)) / (10 * (1000 * 1.25 + 1))
    assert speedup_vs_retrain(p, "de") == pytest.approx(want, rel=1e-12)
    assert speedup_vs_retrain(p, "retrain") == 1.0


def test_cost_params_validation():
    with pytest.raises(ConfigError):
        CostModelParams(n=-1, delta=0.2)
    with pytest.raises(ConfigError):
        CostModelParams(n=10, delta=0.0)
    with pytest.raises(ConfigError):
        CostModelParams(n=10, delta=0.2, class_count=1)
    with pytest.raises(ConfigError):
        cost_computation(CostModelParams(n=10, delta=0.2), "sgd")


def test_cost_table_covers_all_schemes():
    p = CostModelParams(n=10, delta=0.2)
    rows = cost_table(p)
    assert [r.scheme for r in rows] == ["retrain", "de", "ce"]
    text = format_cost_table(p)
    assert "retrain" in text and "ce" in text


# -- records and CSV artifacts ---------------------------------------------------

def make_records(model):
    ds = toy_dataset(60)
    report = class_accuracy(model, ds)
    return [
        record_from_report(0, "train", report, unlearning_class=0,
                           bytes_up=100, bytes_down=200, wall_clock_seconds=1.5),
        record_from_report(1, "unlearn-de", report, unlearning_class=0,
                           bytes_up=10, bytes_down=20, wall_clock_seconds=0.5,
                           recall=0.25),
    ]


def test_metrics_csv_deterministic_and_no_wall_clock(model, tmp_path):
    records = make_records(model)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_metrics_csv(records, 3, p1)
    records[0].wall_clock_seconds = 99.0  # timing must not leak into metrics
    write_metrics_csv(records, 3, p2)
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()[0].split(",")
    assert header == metrics_header(3)
    assert "wall" not in ",".join(header)


def test_timings_sidecar(model, tmp_path):
    records = make_records(model)
    path = tmp_path / "timings.csv"
    write_timings_csv(records, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "round,phase,wall_clock_seconds"
    assert lines[1].startswith("0,train,1.5")


def test_record_validation(model):
    ds = toy_dataset(60)
    report = class_accuracy(model, ds)
    with pytest.raises(MetricError):
        record_from_report(0, "train", report, unlearning_class=0, bytes_up=-1)
    with pytest.raises(MetricError):
        MetricsRecord(0, "train", report.per_class, 2.0, 0.5, 0, 0)


def test_measured_traffic_sums():
    from fedforget.fedsim import RoundTraffic

    class Rec:
        def __init__(self, up, down):
            self.traffic = RoundTraffic(downlink_bytes=down, uplink_bytes=up)

    up, down = measured_traffic([Rec(10, 20), Rec(1, 2)])
    assert (up, down) == (11, 22)
