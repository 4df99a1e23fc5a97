"""Shared fixtures: the default optical setup and a network trained once per session."""
import os
import sys
import time

import pytest

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.ann import DEFAULT_LAYER_SIZES, init_network, train
from core.dataset import TEST_GRID, TRAIN_GRID, build_training_set
from interfaces import OpticalSetup, TrainConfig


@pytest.fixture(scope="session")
def optical_setup():
    return OpticalSetup.reference_bench()


@pytest.fixture(scope="session")
def train_set(optical_setup):
    return build_training_set(optical_setup, TRAIN_GRID)


@pytest.fixture(scope="session")
def timed_training(train_set):
    """(network, epoch-loss history, wall seconds) from the default training configuration."""
    net = init_network(DEFAULT_LAYER_SIZES, seed=7)
    started = time.perf_counter()
    trained_net, history = train(net, train_set, TrainConfig(), grid=TRAIN_GRID)
    return trained_net, history, time.perf_counter() - started


@pytest.fixture(scope="session")
def trained(timed_training):
    net, history, _ = timed_training
    return net, history


@pytest.fixture(scope="session")
def grids():
    return TRAIN_GRID, TEST_GRID
