"""Feedforward sigmoid network (40-64-64-20) trained by per-sample backpropagation."""
import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from interfaces import (
    FEATURE_COUNT,
    ClassCode,
    Dataset,
    DatasetKind,
    DegenerateOutputError,
    DimensionError,
    FeatureVector,
    ThicknessGrid,
    TrainConfig,
    ValidationError,
)

logger = logging.getLogger(__name__)

DEFAULT_HIDDEN = (64, 64)
DEFAULT_LAYER_SIZES = (FEATURE_COUNT, *DEFAULT_HIDDEN, 20)

GridLike = Union[ThicknessGrid, Sequence[float], np.ndarray]


@dataclass
class MlpNetwork:
    """Layer sizes plus one (out x in) weight matrix and one bias vector per layer."""

    layer_sizes: Tuple[int, ...]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise DimensionError(f"invalid layer sizes {self.layer_sizes}")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("need exactly one weight matrix and one bias vector per layer")
        for index, (n_in, n_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            self.weights[index] = np.asarray(self.weights[index], dtype=np.float64)
            self.biases[index] = np.asarray(self.biases[index], dtype=np.float64)
            if self.weights[index].shape != (n_out, n_in):
                raise DimensionError(
                    f"layer {index} weights have shape {self.weights[index].shape}, expected {(n_out, n_in)}"
                )
            if self.biases[index].shape != (n_out,):
                raise DimensionError(f"layer {index} biases have shape {self.biases[index].shape}, expected {(n_out,)}")
            if not (np.all(np.isfinite(self.weights[index])) and np.all(np.isfinite(self.biases[index]))):
                raise ValidationError(f"layer {index} has non-finite parameters")

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(self.layer_sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def parameters(self) -> List[np.ndarray]:
        """Weights and biases interleaved per layer (views, not copies)."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params


@dataclass
class NetworkGradient:
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def parameters(self) -> List[np.ndarray]:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend((w, b))
        return params


def init_network(layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES, seed: int = 7) -> MlpNetwork:
    """Weights and biases uniform in +-sqrt(1/fan_in), drawn from the init seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    weights, biases = [], []
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(1.0 / n_in)
        weights.append(rng.uniform(-limit, limit, size=(n_out, n_in)))
        biases.append(rng.uniform(-limit, limit, size=n_out))
    return MlpNetwork(tuple(layer_sizes), weights, biases)


def zero_network(layer_sizes: Sequence[int] = DEFAULT_LAYER_SIZES) -> MlpNetwork:
    weights = [np.zeros((n_out, n_in)) for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:])]
    biases = [np.zeros(n_out) for n_out in layer_sizes[1:]]
    return MlpNetwork(tuple(layer_sizes), weights, biases)


def sigmoid(z):
    """1 / (1 + exp(-z)), evaluated without overflow."""
    result = expit(np.asarray(z, dtype=np.float64))
    return float(result) if np.ndim(result) == 0 else result


def _input_vector(net: MlpNetwork, x: Union[FeatureVector, np.ndarray]) -> np.ndarray:
    values = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
    if values.shape != (net.input_size,):
        raise DimensionError(f"input has shape {values.shape}, network expects ({net.input_size},)")
    return values


def _activations(net: MlpNetwork, x: np.ndarray) -> List[np.ndarray]:
    activations = [x]
    for w, b in zip(net.weights, net.biases):
        activations.append(expit(w @ activations[-1] + b))
    return activations


def forward(net: MlpNetwork, x: Union[FeatureVector, np.ndarray]) -> np.ndarray:
    """Affine map then sigmoid at every layer, output layer included."""
    return _activations(net, _input_vector(net, x))[-1]


def _target_vector(target: Union[ClassCode, np.ndarray], size: int) -> np.ndarray:
    values = target.one_hot if isinstance(target, ClassCode) else np.asarray(target, dtype=np.float64)
    if values.shape != (size,):
        raise DimensionError(f"target has shape {values.shape}, expected ({size},)")
    return values


def mse_loss(outputs: np.ndarray, target: Union[ClassCode, np.ndarray]) -> float:
    """Mean over output nodes of the squared difference to the target code."""
    outputs = np.asarray(outputs, dtype=np.float64)
    if outputs.ndim != 1:
        raise DimensionError(f"outputs must be a vector, got shape {outputs.shape}")
    diff = outputs - _target_vector(target, outputs.size)
    return float(np.dot(diff, diff) / outputs.size)


def _backward(net: MlpNetwork, activations: List[np.ndarray], target: np.ndarray) -> NetworkGradient:
    outputs = activations[-1]
    delta = (2.0 / outputs.size) * (outputs - target) * outputs * (1.0 - outputs)
    weight_grads: List[np.ndarray] = [None] * len(net.weights)
    bias_grads: List[np.ndarray] = [None] * len(net.biases)
    for layer in range(len(net.weights) - 1, -1, -1):
        weight_grads[layer] = np.outer(delta, activations[layer])
        bias_grads[layer] = delta
        if layer:
            a = activations[layer]
            delta = (net.weights[layer].T @ delta) * a * (1.0 - a)
    return NetworkGradient(weight_grads, bias_grads)


def gradient(net: MlpNetwork, x: Union[FeatureVector, np.ndarray], target: Union[ClassCode, np.ndarray]) -> NetworkGradient:
    """Backpropagated gradient of mse_loss with respect to every weight and bias."""
    activations = _activations(net, _input_vector(net, x))
    return _backward(net, activations, _target_vector(target, net.output_size))


def grid_from_dataset(dataset: Dataset) -> ThicknessGrid:
    """Recover the class grid from the distinct thicknesses of a training set."""
    values = np.unique(dataset.thicknesses())
    if values.size == 0:
        raise ValidationError("training set is empty")
    if values.size == 1:
        return ThicknessGrid(start=float(values[0]), step=1.0, count=1)
    steps = np.diff(values)
    if not np.allclose(steps, steps[0], atol=1e-6):
        raise ValidationError("training thicknesses are not evenly spaced")
    return ThicknessGrid(start=float(values[0]), step=float(steps[0]), count=int(values.size))


def train(
    net: MlpNetwork, train_set: Dataset, cfg: TrainConfig, grid: Optional[ThicknessGrid] = None
) -> Tuple[MlpNetwork, List[float]]:
    """Per-sample SGD until the mean epoch MSE reaches cfg.target_mse or cfg.max_epochs run out.

    Returns a trained copy and the mean loss of every epoch; not converging is not an error.
    """
    if train_set.kind is not DatasetKind.TRAIN:
        raise ValidationError(f"train() needs a training set, got a {train_set.kind.value} set")
    if train_set.provenance.noisy:
        logger.warning("Training on noisy profiles (%s)", train_set.provenance.label())
    grid = grid or grid_from_dataset(train_set)
    if grid.count != net.output_size:
        raise DimensionError(f"network has {net.output_size} outputs but the grid has {grid.count} classes")

    inputs = train_set.feature_matrix()
    if inputs.shape[1] != net.input_size:
        raise DimensionError(f"features have {inputs.shape[1]} values, network expects {net.input_size}")
    targets = np.stack([ClassCode.for_thickness(r.thickness_nm, grid).one_hot for r in train_set.records])

    trained = net.copy()
    order_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(cfg.seed))))
    history: List[float] = []
    lr = cfg.learning_rate
    started = time.perf_counter()

    for epoch in range(1, cfg.max_epochs + 1):
        order = order_rng.permutation(len(inputs)) if cfg.shuffle else np.arange(len(inputs))
        epoch_loss = 0.0
        for index in order:
            activations = _activations(trained, inputs[index])
            diff = activations[-1] - targets[index]
            epoch_loss += float(np.dot(diff, diff)) / diff.size
            grads = _backward(trained, activations, targets[index])
            for layer in range(len(trained.weights)):
                trained.weights[layer] -= lr * grads.weights[layer]
                trained.biases[layer] -= lr * grads.biases[layer]
        history.append(epoch_loss / len(inputs))
        if epoch % 1000 == 0:
            logger.debug("Epoch %d: mean MSE %.6g", epoch, history[-1])
        if history[-1] <= cfg.target_mse:
            break

    elapsed = time.perf_counter() - started
    if history[-1] <= cfg.target_mse:
        logger.info("Training reached MSE %.6g after %d epochs (%.1fs)", history[-1], len(history), elapsed)
    else:
        logger.warning(
            "Training stopped at max_epochs=%d with MSE %.6g above target %.6g",
            cfg.max_epochs,
            history[-1],
            cfg.target_mse,
        )
    return trained, history


def _class_values(grid: GridLike) -> np.ndarray:
    return grid.values if isinstance(grid, ThicknessGrid) else np.asarray(grid, dtype=np.float64)


def decode_argmax(outputs: np.ndarray, grid: GridLike) -> float:
    """Thickness of the strongest output node; ties go to the lower class index."""
    outputs = np.asarray(outputs, dtype=np.float64)
    values = _class_values(grid)
    if outputs.shape != values.shape:
        raise DimensionError(f"outputs have shape {outputs.shape}, grid has {values.size} classes")
    return float(values[int(np.argmax(outputs))])


def decode_expectation(outputs: np.ndarray, grid: GridLike) -> float:
    """Output-weighted mean of the class thicknesses."""
    outputs = np.asarray(outputs, dtype=np.float64)
    values = _class_values(grid)
    if outputs.shape != values.shape:
        raise DimensionError(f"outputs have shape {outputs.shape}, grid has {values.size} classes")
    if np.any(outputs < 0):
        raise ValidationError("expectation decoding needs non-negative outputs")
    total = float(outputs.sum())
    if total <= 0:
        raise DegenerateOutputError("all outputs are zero; no thickness can be decoded")
    estimate = float(np.dot(outputs, values) / total)
    # keep inside the class range despite round-off
    return min(max(estimate, float(values.min())), float(values.max()))


def classify(net: MlpNetwork, x: Union[FeatureVector, np.ndarray], grid: GridLike) -> Tuple[float, float]:
    """(argmax thickness, expectation thickness) for one feature vector."""
    outputs = forward(net, x)
    return decode_argmax(outputs, grid), decode_expectation(outputs, grid)
