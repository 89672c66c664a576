"""Model container invariants: immutability, validation, descriptors."""

import json

import numpy as np
import pytest

from fedforget.errors import ConfigError, ShapeError
from fedforget.nn import (
    ChannelId,
    Conv2d,
    Dense,
    MaxPool2,
    ReLU,
    cnn_descriptor,
    descriptor_json,
    init_model,
    model_descriptor,
    model_from_descriptor,
    model_from_layers,
)

from conftest import tiny_descriptor


def test_parameters_are_immutable(tiny_model):
    with pytest.raises(ValueError):
        tiny_model.layers[0].weights[0, 0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        tiny_model.channel_mask[0][0] = False


def test_conv_shape_validation():
    with pytest.raises(ShapeError):
        Conv2d(np.zeros((4, 1, 3, 3), np.float32), np.zeros(5, np.float32))
    with pytest.raises(ShapeError):
        Conv2d(np.zeros((4, 1, 3), np.float32), np.zeros(4, np.float32))


def test_dense_shape_validation():
    with pytest.raises(ShapeError):
        Dense(np.zeros((4, 9), np.float32), np.zeros(3, np.float32))


def test_channel_identity_ordering_and_bounds(tiny_model):
    assert ChannelId(0, 1) < ChannelId(0, 2) < ChannelId(4, 0)
    tiny_model.check_channel(ChannelId(0, 3))
    with pytest.raises(IndexError):
        tiny_model.check_channel(ChannelId(0, 4))
    with pytest.raises(IndexError):
        tiny_model.check_channel(ChannelId(1, 0))  # relu has no channels
    with pytest.raises(IndexError):
        tiny_model.check_channel(ChannelId(99, 0))


def test_channels_enumeration(tiny_model):
    chans = list(tiny_model.channels())
    assert chans == sorted(chans)
    assert len(chans) == tiny_model.channel_count()
    assert len(chans) == 4 + 6 + 3  # conv(4) + dense(6) + head(3)


def test_parameter_count(tiny_model):
    want = 0
    for i in tiny_model.param_layer_indices():
        layer = tiny_model.layers[i]
        want += layer.weights.size + layer.bias.size
    assert tiny_model.parameter_count() == want


def test_descriptor_roundtrip(tiny_model):
    desc = model_descriptor(tiny_model)
    clone = model_from_descriptor(desc)
    assert len(clone.layers) == len(tiny_model.layers)
    for a, b in zip(clone.layers, tiny_model.layers):
        assert a.kind == b.kind
        if a.kind in ("conv2d", "dense"):
            assert a.weights.shape == b.weights.shape
    assert clone.input_shape == tiny_model.input_shape


def test_descriptor_json_is_canonical(tiny_model):
    desc = model_descriptor(tiny_model)
    text = descriptor_json(desc)
    assert text == descriptor_json(json.loads(text))
    assert "\n" not in text


def test_cnn_descriptor_shapes():
    desc = cnn_descriptor((1, 28, 28), 10, conv_channels=(8, 16), kernel_size=5,
                          dense_units=(32,))
    model = model_from_descriptor(desc)
    x = np.zeros((1, 1, 28, 28), np.float32)
    from fedforget.nn import forward

    assert forward(model, x).shape == (1, 10)


def test_init_model_deterministic_and_seed_sensitive():
    a = init_model(tiny_descriptor(), seed=5)
    b = init_model(tiny_descriptor(), seed=5)
    c = init_model(tiny_descriptor(), seed=6)
    for i in a.param_layer_indices():
        assert a.layers[i].weights.tobytes() == b.layers[i].weights.tobytes()
        assert np.all(a.layers[i].bias == 0)
    assert any(
        a.layers[i].weights.tobytes() != c.layers[i].weights.tobytes()
        for i in a.param_layer_indices()
    )


def test_init_model_he_scale():
    """Weight std should approximate sqrt(2 / fan_in)."""
    desc = cnn_descriptor((1, 28, 28), 10, conv_channels=(32,), kernel_size=5,
                          dense_units=(128,))
    model = init_model(desc, seed=0)
    for i in model.param_layer_indices():
        w = model.layers[i].weights
        fan_in = int(np.prod(w.shape[1:]))
        assert np.std(w) == pytest.approx(np.sqrt(2.0 / fan_in), rel=0.15)


def test_model_rejects_bad_masks():
    from fedforget.nn import Model

    layer = Dense(np.zeros((3, 2), np.float32), np.zeros(3, np.float32))
    good = (np.ones(3, dtype=bool),)
    bad_len = (np.ones(2, dtype=bool),)
    bad_dtype = (np.ones(3, dtype=np.uint8),)
    with pytest.raises((ShapeError, ConfigError)):
        Model((layer,), bad_len, good, (2,))
    with pytest.raises((ShapeError, ConfigError)):
        Model((layer,), good, bad_dtype, (2,))


def test_class_count_and_dtype(tiny_model):
    assert tiny_model.class_count == 3
    assert tiny_model.dtype == np.float32


def test_pool_and_relu_have_no_channels():
    assert ReLU().out_channels == 0
    assert MaxPool2().out_channels == 0
