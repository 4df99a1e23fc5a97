#!/usr/bin/env python3
"""Tests for the sigmoid network: forward pass, gradients, training and decoders."""

import math
import os
import sys

import numpy as np
import pytest

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.ann import (
    DEFAULT_LAYER_SIZES,
    MlpNetwork,
    classify,
    decode_argmax,
    decode_expectation,
    forward,
    gradient,
    grid_from_dataset,
    init_network,
    mse_loss,
    sigmoid,
    train,
    zero_network,
)
from core.dataset import TRAIN_GRID, clean_dataset
from interfaces import (
    ClassCode,
    DegenerateOutputError,
    DimensionError,
    FeatureVector,
    TrainConfig,
    ValidationError,
)


def reference_forward(net: MlpNetwork, x) -> list:
    """Plain nested loops with math.exp."""
    activation = list(x)
    for w, b in zip(net.weights, net.biases):
        activation = [
            1.0 / (1.0 + math.exp(-(sum(w[j][i] * activation[i] for i in range(len(activation))) + b[j])))
            for j in range(len(b))
        ]
    return activation


def loss_at(net: MlpNetwork, x, target) -> float:
    return mse_loss(forward(net, x), target)


def test_sigmoid_examples():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(2.0) == pytest.approx(0.8807970779778823, abs=1e-15)
    assert sigmoid(-800.0) == 0.0
    assert sigmoid(800.0) == 1.0
    np.testing.assert_allclose(sigmoid(np.array([-1.0, 1.0])), [1 - sigmoid(1.0), sigmoid(1.0)])


def test_init_network_bounds_and_determinism():
    net = init_network(DEFAULT_LAYER_SIZES, seed=7)
    assert net.layer_sizes == (40, 64, 64, 20)
    for (n_in, _), w, b in zip(zip(net.layer_sizes[:-1], net.layer_sizes[1:]), net.weights, net.biases):
        limit = math.sqrt(1.0 / n_in)
        assert np.abs(w).max() <= limit and np.abs(b).max() <= limit
    again = init_network(DEFAULT_LAYER_SIZES, seed=7)
    other = init_network(DEFAULT_LAYER_SIZES, seed=8)
    for a, b in zip(net.parameters(), again.parameters()):
        np.testing.assert_array_equal(a, b)
    assert not np.array_equal(net.weights[0], other.weights[0])


def test_network_rejects_mismatched_shapes():
    net = zero_network((3, 2))
    with pytest.raises(DimensionError):
        MlpNetwork((3, 2), [np.zeros((3, 2))], [np.zeros(2)])
    with pytest.raises(DimensionError):
        MlpNetwork((3, 2), net.weights, [])
    with pytest.raises(ValidationError):
        MlpNetwork((3, 2), [np.full((2, 3), np.nan)], [np.zeros(2)])


def test_zero_network_outputs_one_half():
    outputs = forward(zero_network(), np.random.default_rng(0).uniform(size=40))
    np.testing.assert_array_equal(outputs, np.full(20, 0.5))


def test_forward_matches_reference_loops():
    net = init_network(DEFAULT_LAYER_SIZES, seed=3)
    x = np.random.default_rng(1).uniform(size=40)
    np.testing.assert_allclose(forward(net, x), reference_forward(net, x), rtol=0, atol=1e-12)
    np.testing.assert_array_equal(forward(net, FeatureVector(x)), forward(net, x))


def test_forward_rejects_wrong_input_length():
    with pytest.raises(DimensionError):
        forward(init_network(), np.zeros(39))


def test_mse_loss_examples():
    assert mse_loss(np.full(20, 0.5), np.eye(20)[0]) == pytest.approx(0.25)
    assert mse_loss(np.eye(20)[4], ClassCode.for_index(4, TRAIN_GRID)) == 0.0
    assert mse_loss(np.array([1.0, 0.0]), np.array([0.0, 0.0])) == pytest.approx(0.5)
    with pytest.raises(DimensionError):
        mse_loss(np.zeros(20), np.zeros(19))


def test_gradient_vanishes_at_the_target():
    net = init_network(seed=5)
    x = np.random.default_rng(2).uniform(size=40)
    grads = gradient(net, x, forward(net, x))
    for g in grads.parameters():
        assert np.all(g == 0.0)


def test_gradient_of_zero_input_leaves_first_layer_weights_alone():
    net = init_network(seed=5)
    grads = gradient(net, np.zeros(40), ClassCode.for_index(0, TRAIN_GRID))
    assert np.all(grads.weights[0] == 0.0)
    assert np.any(grads.biases[0] != 0.0)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(11)
    epsilon = 1e-5
    for _ in range(10):
        net = init_network(seed=int(rng.integers(1_000_000)))
        x = rng.uniform(size=40)
        target = ClassCode.for_index(int(rng.integers(20)), TRAIN_GRID)
        analytic = gradient(net, x, target).parameters()
        scale = max(float(np.abs(g).max()) for g in analytic)
        for param, grad in zip(net.parameters(), analytic):
            for flat_index in rng.choice(param.size, size=min(8, param.size), replace=False):
                index = np.unravel_index(flat_index, param.shape)
                original = param[index]
                param[index] = original + epsilon
                plus = loss_at(net, x, target)
                param[index] = original - epsilon
                minus = loss_at(net, x, target)
                param[index] = original
                numeric = (plus - minus) / (2 * epsilon)
                assert abs(numeric - grad[index]) <= 1e-5 * scale + 1e-10


def test_training_stops_once_target_is_met(train_set):
    net = init_network(seed=7)
    trained, history = train(net, train_set, TrainConfig(target_mse=1.0), grid=TRAIN_GRID)
    assert len(history) == 1
    # input network untouched
    np.testing.assert_array_equal(net.weights[0], init_network(seed=7).weights[0])
    assert not np.array_equal(trained.weights[0], net.weights[0])


def test_training_is_deterministic(train_set):
    cfg = TrainConfig(max_epochs=5)
    a, history_a = train(init_network(seed=7), train_set, cfg)
    b, history_b = train(init_network(seed=7), train_set, cfg)
    assert history_a == history_b and len(history_a) == 5
    for p, q in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p, q)


def test_training_without_shuffle_differs_from_shuffled(train_set):
    shuffled, _ = train(init_network(seed=7), train_set, TrainConfig(max_epochs=3))
    ordered, _ = train(init_network(seed=7), train_set, TrainConfig(max_epochs=3, shuffle=False))
    assert not np.array_equal(shuffled.weights[0], ordered.weights[0])


def test_training_rejects_test_sets_and_mismatched_grids(optical_setup, train_set):
    with pytest.raises(ValidationError):
        train(init_network(), clean_dataset(optical_setup, TRAIN_GRID), TrainConfig(max_epochs=1))
    with pytest.raises(DimensionError):
        train(init_network((40, 8, 19)), train_set, TrainConfig(max_epochs=1))


def test_grid_recovered_from_training_set(train_set):
    assert grid_from_dataset(train_set) == TRAIN_GRID


def test_default_training_converges(timed_training):
    net, history, seconds = timed_training
    assert history[-1] <= TrainConfig().target_mse <= 1e-3
    assert len(history) < 50_000
    assert seconds < 60.0
    assert all(math.isfinite(v) for v in history)


def test_trained_network_recovers_every_training_class(trained, train_set):
    net, _ = trained
    for record in train_set.records:
        argmax_nm, expect_nm = classify(net, record.features, TRAIN_GRID)
        assert argmax_nm == record.thickness_nm
        assert 10.0 <= expect_nm <= 200.0


def test_decode_argmax_examples():
    outputs = np.zeros(20)
    outputs[4] = 0.9
    assert decode_argmax(outputs, TRAIN_GRID) == 50.0
    assert decode_argmax(np.eye(20)[19], TRAIN_GRID) == 200.0


def test_decode_argmax_ties_go_to_lower_index():
    outputs = np.zeros(20)
    outputs[[3, 7]] = 0.8
    assert decode_argmax(outputs, TRAIN_GRID) == 40.0
    assert decode_argmax(np.full(20, 0.5), TRAIN_GRID) == 10.0


def test_decode_expectation_examples():
    assert decode_expectation(np.eye(20)[0], TRAIN_GRID) == 10.0
    assert decode_expectation(np.full(20, 0.3), TRAIN_GRID) == pytest.approx(105.0)
    outputs = np.zeros(20)
    outputs[[0, 1]] = 1.0
    assert decode_expectation(outputs, TRAIN_GRID) == pytest.approx(15.0)


def test_decoders_agree_on_every_one_hot_code():
    for code in np.eye(20):
        assert decode_expectation(code, TRAIN_GRID) == decode_argmax(code, TRAIN_GRID)


def test_decode_expectation_stays_within_class_range():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        estimate = decode_expectation(rng.uniform(size=20), TRAIN_GRID)
        assert 10.0 <= estimate <= 200.0


def test_decoders_are_permutation_equivariant():
    rng = np.random.default_rng(9)
    outputs = rng.uniform(size=20)
    values = TRAIN_GRID.values
    permutation = rng.permutation(20)
    assert decode_argmax(outputs[permutation], values[permutation]) == decode_argmax(outputs, values)
    assert decode_expectation(outputs[permutation], values[permutation]) == pytest.approx(
        decode_expectation(outputs, values), rel=1e-12
    )


def test_decoders_reject_degenerate_outputs():
    with pytest.raises(DegenerateOutputError):
        decode_expectation(np.zeros(20), TRAIN_GRID)
    with pytest.raises(ValidationError):
        decode_expectation(np.full(20, -0.1), TRAIN_GRID)
    with pytest.raises(DimensionError):
        decode_argmax(np.zeros(19), TRAIN_GRID)
    with pytest.raises(DimensionError):
        decode_expectation(np.ones(21), TRAIN_GRID)
