"""Dense layers, losses, exact backprop, finite-difference checking and SGD.

Arrays are batch-major: inputs of shape (n, in) produce outputs (n, out).
A 1-D input is treated as a single row and returned 1-D.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

RHO_HAT_CLIP = 1e-8


class TrainingDiverged(RuntimeError):
    """Loss or parameters became NaN/Inf during training."""


class Activation(enum.Enum):
    SIGMOID = "sigmoid"
    LINEAR = "linear"
    SOFTMAX = "softmax"


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: Activation

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.biases = np.asarray(self.biases, dtype=float)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias length must equal weight rows: W{self.weights.shape}, b{self.biases.shape}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValueError("layer parameters must be finite")
        self.activation = Activation(self.activation)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.biases.copy(), self.activation)

    def to_dict(self) -> dict:
        return {
            "shape": [self.n_out, self.n_in],
            "activation": self.activation.value,
            "weights": self.weights.ravel().tolist(),
            "biases": self.biases.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DenseLayer":
        n_out, n_in = doc["shape"]
        w = np.asarray(doc["weights"], dtype=float).reshape(n_out, n_in)
        return cls(w, np.asarray(doc["biases"], dtype=float), Activation(doc["activation"]))


def init_layer(n_in: int, n_out: int, activation: Activation, rng: np.random.Generator) -> DenseLayer:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    limit = np.sqrt(6.0 / (n_in + n_out))
    w = rng.uniform(-limit, limit, size=(n_out, n_in))
    return DenseLayer(w, np.zeros(n_out), activation)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 32
    l2_weight: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.l2_weight < 0:
            raise ValueError("l2_weight must be >= 0")


# Loss specifications ---------------------------------------------------------

@dataclass(frozen=True)
class SquaredError:
    """Batch mean of the per-row summed squared error."""


@dataclass(frozen=True)
class CrossEntropy:
    """Batch mean of -sum(t * log y); requires a softmax output layer."""


@dataclass(frozen=True)
class SparseAE:
    """Squared error plus beta * KL(rho || batch-mean activation) on one hidden layer."""

    beta: float = 3.0
    rho: float = 0.1
    sparse_layer: int = 0

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")


LossSpec = Union[SquaredError, CrossEntropy, SparseAE]


# Forward ---------------------------------------------------------------------

def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.SIGMOID:
        return sigmoid(z)
    if activation is Activation.SOFTMAX:
        return softmax(z)
    return z


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != layer.n_in:
        raise ValueError(f"input has {x.shape[-1]} features, layer expects {layer.n_in}")
    return _activate(x @ layer.weights.T + layer.biases, layer.activation)


def forward(net: Sequence[DenseLayer], x: np.ndarray) -> List[np.ndarray]:
    """All activations, starting with the input itself."""
    acts = [np.atleast_2d(np.asarray(x, dtype=float))]
    for layer in net:
        acts.append(dense_forward(layer, acts[-1]))
    return acts


def predict(net: Sequence[DenseLayer], x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = forward(net, x)[-1]
    return out[0] if x.ndim == 1 else out


def kl_divergence(rho: float, rho_hat: np.ndarray) -> float:
    return float(_kl(rho, np.asarray(rho_hat, dtype=float)))


def _kl(rho, rho_hat):
    rho_hat = np.clip(rho_hat, RHO_HAT_CLIP, 1.0 - RHO_HAT_CLIP)
    return np.sum(
        rho * np.log(rho / rho_hat) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_hat))
    )


def l2_penalty(net: Sequence[DenseLayer], l2_weight: float) -> float:
    return 0.5 * l2_weight * sum(float(np.sum(layer.weights ** 2)) for layer in net)


def loss_value(
    net: Sequence[DenseLayer], x: np.ndarray, target: np.ndarray, loss: LossSpec, l2_weight: float = 0.0
) -> float:
    return float(_loss_from_acts(forward(net, x), np.atleast_2d(target), loss)) + l2_penalty(net, l2_weight)


def _loss_from_acts(acts, target, loss):
    y = acts[-1]
    n = y.shape[0]
    if isinstance(loss, CrossEntropy):
        return -np.sum(target * np.log(np.clip(y, 1e-300, None))) / n
    if isinstance(loss, (SquaredError, SparseAE)):
        value = np.sum((y - target) ** 2) / n
        if isinstance(loss, SparseAE):
            value = value + loss.beta * _kl(loss.rho, acts[loss.sparse_layer + 1].mean(axis=0))
        return value
    raise TypeError(f"unknown loss specification: {loss!r}")


# Backward --------------------------------------------------------------------

Gradients = List[Tuple[np.ndarray, np.ndarray]]


def _activation_backward(dy: np.ndarray, y: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.SIGMOID:
        return dy * y * (1.0 - y)
    if activation is Activation.SOFTMAX:
        return y * (dy - np.sum(dy * y, axis=1, keepdims=True))
    return dy


def backprop(
    net: Sequence[DenseLayer],
    x: np.ndarray,
    target: np.ndarray,
    loss: LossSpec,
    l2_weight: float = 0.0,
) -> Tuple[float, Gradients]:
    """Loss value and exact (dW, db) for every layer."""
    if not isinstance(loss, (SquaredError, CrossEntropy, SparseAE)):
        raise TypeError(f"unknown loss specification: {loss!r}")
    acts = forward(net, x)
    target = np.atleast_2d(np.asarray(target, dtype=float))
    y = acts[-1]
    n = y.shape[0]
    if target.shape != y.shape:
        raise ValueError(f"target shape {target.shape} != output shape {y.shape}")
    value = float(_loss_from_acts(acts, target, loss)) + l2_penalty(net, l2_weight)

    if isinstance(loss, CrossEntropy):
        if net[-1].activation is not Activation.SOFTMAX:
            raise ValueError("cross-entropy loss requires a softmax output layer")
        dz = (y - target) / n
    else:
        dz = _activation_backward(2.0 * (y - target) / n, y, net[-1].activation)

    grads: Gradients = [None] * len(net)  # type: ignore[list-item]
    for i in range(len(net) - 1, -1, -1):
        layer = net[i]
        grads[i] = (dz.T @ acts[i] + l2_weight * layer.weights, dz.sum(axis=0))
        if i == 0:
            break
        da = dz @ layer.weights
        if isinstance(loss, SparseAE) and loss.sparse_layer == i - 1:
            rho_hat = np.clip(acts[i].mean(axis=0), RHO_HAT_CLIP, 1.0 - RHO_HAT_CLIP)
            da = da + loss.beta * (-loss.rho / rho_hat + (1.0 - loss.rho) / (1.0 - rho_hat)) / n
        dz = _activation_backward(da, acts[i], net[i - 1].activation)
    return value, grads


def gradient_check(
    net: Sequence[DenseLayer],
    sample: Tuple[np.ndarray, np.ndarray],
    eps: float = 1e-5,
    loss: LossSpec = SquaredError(),
    l2_weight: float = 0.0,
    grad_fn: Callable[..., Tuple[float, Gradients]] = backprop,
) -> float:
    """Max relative error between ``grad_fn`` and central differences over every parameter.

    The finite differences run in extended precision so that gradients near
    1e-8 are not swamped by float64 cancellation in the loss.
    """
    if not 0.0 < eps < 1e-2:
        raise ValueError("eps must lie in (0, 1e-2)")
    x, target = sample
    _, grads = grad_fn([layer.copy() for layer in net], x, target, loss, l2_weight)

    ext = np.longdouble
    params = [(layer.weights.astype(ext), layer.biases.astype(ext)) for layer in net]
    kinds = [layer.activation for layer in net]
    x_ext = np.atleast_2d(np.asarray(x, dtype=ext))
    t_ext = np.atleast_2d(np.asarray(target, dtype=ext))
    h = ext(eps)

    def objective():
        acts = [x_ext]
        for (w, b), kind in zip(params, kinds):
            acts.append(_activate(acts[-1] @ w.T + b, kind))
        reg = ext(0.5) * ext(l2_weight) * sum(np.sum(w * w) for w, _ in params)
        return _loss_from_acts(acts, t_ext, loss) + reg

    worst = 0.0
    for (w, b), (dw, db) in zip(params, grads):
        for param, analytic in ((w, dw), (b, db)):
            flat = param.reshape(-1)
            flat_grad = np.asarray(analytic).reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + h
                up = objective()
                flat[k] = orig - h
                down = objective()
                flat[k] = orig
                numeric = float((up - down) / (2 * h))
                a = float(flat_grad[k])
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
                worst = max(worst, err)
    return worst


# Training --------------------------------------------------------------------

InputNoise = Callable[[np.ndarray, np.random.Generator], np.ndarray]


def sgd_epoch(
    net: Sequence[DenseLayer],
    x: np.ndarray,
    target: np.ndarray,
    config: TrainConfig,
    loss: LossSpec,
    epoch: int = 0,
    input_noise: Optional[InputNoise] = None,
    trainable: Optional[Sequence[bool]] = None,
) -> Tuple[List[DenseLayer], float]:
    """One shuffled mini-batch pass; returns updated copies and the mean batch loss.

    ``input_noise`` corrupts each batch's inputs only; targets stay clean.
    The shuffle and the noise draw from a generator seeded by (seed, epoch).
    """
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise ValueError("sgd_epoch needs at least one row")
    if trainable is None:
        trainable = [True] * len(net)
    net = [layer.copy() for layer in net]
    rng = np.random.default_rng([config.seed, epoch])
    order = rng.permutation(n)
    losses = []
    for start in range(0, n, config.batch_size):
        idx = order[start:start + config.batch_size]
        xb = x[idx]
        if input_noise is not None:
            xb = input_noise(xb, rng)
        value, grads = backprop(net, xb, target[idx], loss, config.l2_weight)
        if not np.isfinite(value):
            raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, batch {start // config.batch_size}")
        for layer, (dw, db), train in zip(net, grads, trainable):
            if train:
                layer.weights -= config.learning_rate * dw
                layer.biases -= config.learning_rate * db
        losses.append(value)
    for layer in net:
        if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases))):
            raise TrainingDiverged(f"non-finite parameters after epoch {epoch}")
    return net, float(np.mean(losses))


def train(
    net: Sequence[DenseLayer],
    x: np.ndarray,
    target: np.ndarray,
    config: TrainConfig,
    loss: LossSpec,
    input_noise: Optional[InputNoise] = None,
    trainable: Optional[Sequence[bool]] = None,
) -> Tuple[List[DenseLayer], List[float]]:
    history = []
    net = list(net)
    for epoch in range(config.epochs):
        net, value = sgd_epoch(net, x, target, config, loss, epoch, input_noise, trainable)
        history.append(value)
    return net, history


def config_to_dict(config: TrainConfig) -> dict:
    return {
        "learning_rate": config.learning_rate,
        "epochs": config.epochs,
        "batch_size": config.batch_size,
        "l2_weight": config.l2_weight,
        "seed": config.seed,
    }


def config_from_dict(doc: dict) -> TrainConfig:
    return TrainConfig(**doc)
