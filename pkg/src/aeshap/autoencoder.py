"""Fully-connected autoencoder in numpy, trained with Adam on reconstruction MSE.

Weights are stored as ``(fan_in, fan_out)`` matrices so a batch ``X`` of shape
``(n, d)`` flows through as ``X @ W + b``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import CleanDataset, ScalerParams

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class NumericalError(ArithmeticError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AEConfig:
    hidden_layers: tuple[int, ...] = (50, 20, 8, 20, 50)
    epochs: int = 100
    learning_rate: float = 0.001
    batch_size: int = 8192
    hidden_activation: str = "relu"
    output_activation: str = "linear"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if not self.hidden_layers or min(self.hidden_layers) < 1:
            raise ValueError("hidden_layers must be a non-empty list of positive sizes")
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValueError("epochs, batch_size and learning_rate must be positive")
        if self.hidden_activation != "relu":
            raise ValueError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_activation != "linear":
            raise ValueError(f"unsupported output activation {self.output_activation!r}")

    @property
    def bottleneck(self) -> int:
        return min(self.hidden_layers)

    @classmethod
    def from_dict(cls, d: dict) -> "AEConfig":
        return cls(**d)


@dataclass
class AEModel:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: AEConfig
    input_dim: int
    feature_names: tuple[str, ...] | None = None
    scaler: ScalerParams | None = None

    def __post_init__(self):
        dims = [self.input_dim, *self.config.hidden_layers, self.input_dim]
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count does not match config")
        for w, b, a, c in zip(self.weights, self.biases, dims[:-1], dims[1:]):
            if w.shape != (a, c) or b.shape != (c,):
                raise ValueError(f"layer shape {w.shape}/{b.shape}, expected {(a, c)}/{(c,)}")

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    def copy(self) -> "AEModel":
        return AEModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                       self.config, self.input_dim, self.feature_names, self.scaler)


def init_model(config: AEConfig, input_dim: int,
               feature_names: Sequence[str] | None = None) -> AEModel:
    """Glorot-uniform weights seeded by ``config.seed``; zero biases."""
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    rng = np.random.default_rng(config.seed)
    dims = [input_dim, *config.hidden_layers, input_dim]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    names = None if feature_names is None else tuple(feature_names)
    return AEModel(weights, biases, config, input_dim, names)


def _layers(model: AEModel, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    # returns pre-activations and activations; activations[0] is the input
    acts = [x]
    pre = []
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        with np.errstate(over="ignore", invalid="ignore"):
            z = acts[-1] @ w + b
        if not np.all(np.isfinite(z)):
            raise NumericalError(f"non-finite activation in layer {i}")
        pre.append(z)
        acts.append(z if i == last else np.maximum(z, 0.0))
    return pre, acts


def forward(model: AEModel, x: np.ndarray) -> np.ndarray:
    """Reconstruct one instance ``(d,)`` or a batch ``(n, d)``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"input width {x.shape[-1]} != model input_dim {model.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return _layers(model, x)[1][-1]


def reconstruction_errors(model: AEModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    r = forward(model, x) - x
    return np.mean(r * r, axis=1)


def reconstruction_error(model: AEModel, x: np.ndarray) -> float:
    """Mean squared difference between `x` and its reconstruction."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a single instance vector")
    return float(reconstruction_errors(model, x)[0])


def score_batch(model: AEModel, ds: CleanDataset | np.ndarray) -> np.ndarray:
    x = ds.features if isinstance(ds, CleanDataset) else np.asarray(ds, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"dataset has {x.shape[-1]} features, model expects {model.input_dim}")
    return reconstruction_errors(model, x)


def loss_and_grads(model: AEModel, x: np.ndarray
                   ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """Batch MSE (mean over rows and columns) and its parameter gradients."""
    x = np.asarray(x, dtype=np.float64)
    pre, acts = _layers(model, x)
    resid = acts[-1] - x
    with np.errstate(over="ignore", invalid="ignore"):
        loss = float(np.mean(resid * resid))
    delta = 2.0 * resid / resid.size
    gw = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    return loss, gw, gb


@dataclass
class TrainReport:
    loss_history: list[float] = field(default_factory=list)
    final_validation_mse: float = float("nan")


def train(model: AEModel, train_ds: CleanDataset, val_ds: CleanDataset | None = None,
          config: AEConfig | None = None) -> tuple[AEModel, TrainReport]:
    """Mini-batch Adam on reconstruction MSE. Labels are ignored.

    Returns a new model; the input model is left untouched. The last partial
    batch of each epoch is used.
    """
    config = config or model.config
    x = train_ds.features if isinstance(train_ds, CleanDataset) else np.asarray(train_ds, float)
    if x.shape[1] != model.input_dim:
        raise ValueError(f"training data has {x.shape[1]} features, model expects {model.input_dim}")
    model = model.copy()
    model.config = config
    params = model.weights + model.biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng([config.seed, 1])
    n = x.shape[0]
    lr = config.learning_rate
    step = 0
    report = TrainReport()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, config.batch_size)):
            batch = x[order[start:start + config.batch_size]]
            try:
                loss, gw, gb = loss_and_grads(model, batch)
            except NumericalError as e:
                raise TrainingError(f"epoch {epoch}, batch {b}: {e}") from e
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            total += loss * batch.shape[0]
            step += 1
            c1 = 1.0 - ADAM_BETA1 ** step
            c2 = 1.0 - ADAM_BETA2 ** step
            for p, g, mi, vi in zip(params, gw + gb, m, v):
                mi *= ADAM_BETA1
                mi += (1.0 - ADAM_BETA1) * g
                vi *= ADAM_BETA2
                vi += (1.0 - ADAM_BETA2) * g * g
                p -= lr * (mi / c1) / (np.sqrt(vi / c2) + ADAM_EPS)
        report.loss_history.append(total / n)
        log.debug("epoch %d loss %.6g", epoch, report.loss_history[-1])
    if val_ds is not None:
        report.final_validation_mse = float(np.mean(score_batch(model, val_ds)))
    return model, report


def save_model(model: AEModel, path: str | Path) -> None:
    """Write an ``.npz`` checkpoint holding parameters plus JSON metadata."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "input_dim": model.input_dim,
        "feature_names": None if model.feature_names is None else list(model.feature_names),
        "scaler": None if model.scaler is None else model.scaler.to_dict(),
    }
    arrays = {f"w{i}": w for i, w in enumerate(model.weights)}
    arrays.update({f"b{i}": b for i, b in enumerate(model.biases)})
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def load_model(path: str | Path) -> AEModel:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
        config = AEConfig.from_dict(meta["config"])
        n_layers = len(config.hidden_layers) + 1
        weights = [z[f"w{i}"].copy() for i in range(n_layers)]
        biases = [z[f"b{i}"].copy() for i in range(n_layers)]
    names = meta["feature_names"]
    scaler = meta["scaler"]
    return AEModel(weights, biases, config, meta["input_dim"],
                   None if names is None else tuple(names),
                   None if scaler is None else ScalerParams.from_dict(scaler))
