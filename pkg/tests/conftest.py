"""Shared fixtures: tiny toy nets and datasets for fast unit tests."""

import numpy as np
import pytest

from fedforget.data import LabeledDataset, make_synthetic
from fedforget.nn import Conv2d, Dense, Flatten, MaxPool2, Model, ReLU, init_model, model_from_layers


def tiny_descriptor(input_shape=(1, 8, 8), class_count=3, conv_channels=(4,), dense_units=(6,)):
    from fedforget.nn import cnn_descriptor

    return cnn_descriptor(input_shape, class_count, conv_channels=conv_channels,
                          kernel_size=3, dense_units=dense_units)


@pytest.fixture
def tiny_model():
    """conv(4)->relu->pool->flatten->dense(6)->relu->dense(3) on 8x8 inputs."""
    return init_model(tiny_descriptor(), seed=0)


@pytest.fixture
def tiny_model_f64():
    return init_model(tiny_descriptor(), seed=0, dtype=np.float64)


@pytest.fixture
def tiny_data():
    rng = np.random.default_rng(0)
    images = rng.uniform(0, 1, size=(24, 1, 8, 8)).astype(np.float32)
    labels = rng.integers(0, 3, size=24).astype(np.int64)
    return LabeledDataset(images, labels, 3)


@pytest.fixture(scope="session")
def small_synthetic():
    """A 300/100 sample synthetic split shared by read-only tests."""
    return make_synthetic(train_size=300, test_size=100, seed=0)
