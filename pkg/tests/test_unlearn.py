"""Unlearning mechanics: deletion, perturbation labels, freeze conservation,
traffic, the centralized cache."""

import numpy as np
import pytest

from fedforget.data import LabeledDataset
from fedforget.errors import ConfigError, PlanError
from fedforget.explain import InfluentialSet, select_random
from fedforget.fedsim import Client, TrainConfig, partition_per_class
from fedforget.nn import ChannelId, init_model
from fedforget.unlearn import (
    CentralizedConfig,
    UnlearningRequest,
    build_server_cache,
    centralized_unlearn,
    client_unlearning_data,
    decentralized_unlearn,
    delete_class,
    derive_seed_for,
    make_perturbation_set,
)
from fedforget.wire import channel_payload_nbytes

from conftest import tiny_descriptor


def toy_dataset(n=120, seed=0, class_count=3):
    rng = np.random.default_rng(seed)
    images = rng.uniform(0, 1, size=(n, 1, 8, 8)).astype(np.float32)
    labels = rng.integers(0, class_count, size=n).astype(np.int64)
    return LabeledDataset(images, labels, class_count)


def test_delete_class_histogram_oracle():
    ds = toy_dataset(90)
    before = ds.histogram()
    after = delete_class(ds, 1)
    got = after.histogram()
    assert got[1] == 0
    assert got[0] == before[0] and got[2] == before[2]
    assert len(after) == len(ds) - before[1]


def test_delete_class_idempotent():
    ds = toy_dataset(90)
    once = delete_class(ds, 1)
    twice = delete_class(once, 1)
    assert once.images.tobytes() == twice.images.tobytes()


def test_perturbation_labels_never_the_class():
    ds = toy_dataset(200)
    pert = make_perturbation_set(ds, 1, seed=0)
    assert pert.size == int(ds.histogram()[1])
    assert not (pert.labels == 1).any()
    src = ds.of_class(1)
    assert pert.images.tobytes() == src.images.tobytes()


def test_perturbation_labels_roughly_uniform():
    """With ten classes and many samples each wrong class gets a share."""
    ds = toy_dataset(4000, class_count=10)
    pert = make_perturbation_set(ds, 3, seed=0)
    hist = pert.histogram()
    assert hist[3] == 0
    others = np.delete(hist, 3)
    expected = pert.size / 9
    assert others.min() > 0.6 * expected
    assert others.max() < 1.4 * expected


def test_perturbation_fixed_per_seed():
    ds = toy_dataset(200)
    a = make_perturbation_set(ds, 1, seed=5)
    b = make_perturbation_set(ds, 1, seed=5)
    c = make_perturbation_set(ds, 1, seed=6)
    assert np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.labels, c.labels)


def test_perturbation_size_cap():
    ds = toy_dataset(200)
    pert = make_perturbation_set(ds, 1, seed=0, size=10)
    assert pert.size == 10


def test_perturbation_needs_two_classes():
    ds = LabeledDataset(np.zeros((4, 1, 2, 2), np.float32), np.zeros(4, np.int64), 1)
    with pytest.raises(PlanError):
        make_perturbation_set(ds, 0, seed=0)


def test_request_validation():
    with pytest.raises(ConfigError):
        UnlearningRequest(0, delta=0.2, scheme="nope")
    with pytest.raises(ConfigError):
        UnlearningRequest(0, delta=0.2, selection="top")
    with pytest.raises(ConfigError):
        UnlearningRequest(0, delta=0.0)
    with pytest.raises(ConfigError):
        UnlearningRequest(0, delta=0.2, epochs=0)


def test_client_unlearning_data_cases():
    req = UnlearningRequest(0, delta=0.2)
    mixed = Client(0, toy_dataset(60))
    remaining, pert = client_unlearning_data(mixed, req)
    assert remaining is not None and pert is not None
    assert not (remaining.labels == 0).any()
    assert not (pert.labels == 0).any()

    only_class = Client(1, toy_dataset(60).of_class(0))
    remaining, pert = client_unlearning_data(only_class, req)
    assert remaining is None and pert is not None

    no_class = Client(2, delete_class(toy_dataset(60), 0))
    remaining, pert = client_unlearning_data(no_class, req)
    assert remaining is not None and pert is None


def test_perturbation_seed_differs_per_client():
    req = UnlearningRequest(0, delta=0.2, seed=3)
    assert derive_seed_for(req, 0) != derive_seed_for(req, 1)


def de_setup(delta=0.5, epochs=2, seed=0):
    model = init_model(tiny_descriptor(), seed=0)
    ds = toy_dataset(150, seed=1)
    clients = [Client(i, ds.subset(np.arange(i * 50, (i + 1) * 50))) for i in range(3)]
    influential = select_random(model, delta=delta, seed=0)
    request = UnlearningRequest(0, delta=delta, epochs=epochs, seed=seed)
    config = TrainConfig(global_rounds=1, local_epochs=1, batch_size=32, learning_rate=0.05)
    return model, clients, influential, request, config


def test_de_freezes_everything_outside_influential_set():
    """After DE unlearning, bytes outside the influential channels are
    identical to the starting model."""
    model, clients, influential, request, config = de_setup()
    outcome = decentralized_unlearn(model, clients, influential, request, config)
    chosen = set(influential.channels)
    changed = 0
    for i in model.param_layer_indices():
        w0 = model.layers[i].weights
        w1 = outcome.model.layers[i].weights
        for c in range(model.layers[i].out_channels):
            same = (
                w0[c].tobytes() == w1[c].tobytes()
                and model.layers[i].bias[c] == outcome.model.layers[i].bias[c]
            )
            if ChannelId(i, c) in chosen:
                changed += 0 if same else 1
            else:
                assert same, f"frozen channel ({i},{c}) moved"
    assert changed > 0


def test_de_traffic_is_channel_payload_times_messages():
    model, clients, influential, request, config = de_setup(epochs=3)
    outcome = decentralized_unlearn(model, clients, influential, request, config)
    payload = channel_payload_nbytes(model, list(influential.channels))
    assert len(outcome.epoch_records) == 3
    for record in outcome.epoch_records:
        assert record.traffic.downlink_bytes == payload * 3
        assert record.traffic.uplink_bytes == payload * 3
    assert outcome.total_traffic_bytes == payload * 18


def test_de_deterministic():
    a = decentralized_unlearn(*de_setup())
    b = decentralized_unlearn(*de_setup())
    for i in a.model.param_layer_indices():
        assert a.model.layers[i].weights.tobytes() == b.model.layers[i].weights.tobytes()


def test_de_per_class_partition_includes_perturbation_only_client():
    """Under the one-class-per-client split, the unlearning class's owner
    participates with perturbation data only."""
    ds = toy_dataset(150, seed=2)
    clients = partition_per_class(ds, seed=0)
    model = init_model(tiny_descriptor(), seed=0)
    influential = select_random(model, delta=0.5, seed=0)
    request = UnlearningRequest(0, delta=0.5, epochs=1, seed=0)
    config = TrainConfig(global_rounds=1, local_epochs=1, batch_size=32, learning_rate=0.05)
    outcome = decentralized_unlearn(model, clients, influential, request, config)
    payload = channel_payload_nbytes(model, list(influential.channels))
    # all three clients participate: two remaining-class, one perturbation-only
    assert outcome.epoch_records[0].traffic.downlink_bytes == payload * 3


def test_de_requires_relevant_clients():
    model = init_model(tiny_descriptor(), seed=0)
    empty = LabeledDataset(np.zeros((0, 1, 8, 8), np.float32), np.zeros(0, np.int64), 3)
    clients = [Client(0, empty)]
    influential = select_random(model, delta=0.5, seed=0)
    request = UnlearningRequest(0, delta=0.5, epochs=1)
    config = TrainConfig(global_rounds=1, local_epochs=1, batch_size=8, learning_rate=0.05)
    with pytest.raises(PlanError):
        decentralized_unlearn(model, clients, influential, request, config)


def test_build_server_cache_composition():
    ds = toy_dataset(900, class_count=3)
    request = UnlearningRequest(1, delta=0.2, scheme="ce", seed=0)
    config = CentralizedConfig(cache_size=90, learning_rate=0.01, batch_size=16)
    cache = build_server_cache(ds, request, config)
    assert cache.size == 90
    share = ds.histogram()[1] / len(ds)
    pert_count = int((cache.labels[: int(round(90 * share))] >= 0).sum())
    assert pert_count == max(1, int(round(90 * share)))
    assert (cache.labels != 1).all() or (cache.labels == 1).sum() < cache.size


def test_ce_zero_traffic_and_freeze():
    model = init_model(tiny_descriptor(), seed=0)
    ds = toy_dataset(300)
    request = UnlearningRequest(0, delta=0.5, scheme="ce", epochs=2, seed=0)
    influential = select_random(model, delta=0.5, seed=0)
    config = CentralizedConfig(cache_size=60, learning_rate=0.05, batch_size=16)
    cache = build_server_cache(ds, request, config)
    outcome = centralized_unlearn(model, cache, influential, request, config)
    assert outcome.total_traffic_bytes == 0
    chosen = set(influential.channels)
    for i in model.param_layer_indices():
        for c in range(model.layers[i].out_channels):
            same = (
                model.layers[i].weights[c].tobytes()
                == outcome.model.layers[i].weights[c].tobytes()
            )
            if ChannelId(i, c) not in chosen:
                assert same


def test_ce_deterministic():
    model = init_model(tiny_descriptor(), seed=0)
    ds = toy_dataset(300)
    request = UnlearningRequest(0, delta=0.5, scheme="ce", epochs=2, seed=0)
    influential = select_random(model, delta=0.5, seed=0)
    config = CentralizedConfig(cache_size=60, learning_rate=0.05, batch_size=16)
    cache = build_server_cache(ds, request, config)
    a = centralized_unlearn(model, cache, influential, request, config)
    b = centralized_unlearn(model, cache, influential, request, config)
    for i in a.model.param_layer_indices():
        assert a.model.layers[i].weights.tobytes() == b.model.layers[i].weights.tobytes()


def test_ce_preserves_model_masks():
    model = init_model(tiny_descriptor(), seed=0)
    ds = toy_dataset(300)
    request = UnlearningRequest(0, delta=0.5, scheme="ce", epochs=1, seed=0)
    influential = select_random(model, delta=0.5, seed=0)
    config = CentralizedConfig(cache_size=30, learning_rate=0.05, batch_size=16)
    cache = build_server_cache(ds, request, config)
    outcome = centralized_unlearn(model, cache, influential, request, config)
    for got, want in zip(outcome.model.trainable_mask, model.trainable_mask):
        assert np.array_equal(got, want)
