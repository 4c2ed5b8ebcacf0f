"""Adam, mini-batch training with early stopping, and checkpoint files."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, SchemaError
from .model import Batch, TgConfig, gradients, init_params, param_shapes, predict

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "vistat-checkpoint/1"


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kwargs) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **kwargs,
        )


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update. Returns new params; ``state`` is advanced in place."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    updated = {}
    for name, p in params.items():
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        updated[name] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return updated, state


@dataclass
class TrainingLog:
    rows: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def initial_train_loss(self) -> float:
        return self.rows[0][1]

    @property
    def final_train_loss(self) -> float:
        return self.rows[-1][1]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss"])
            for epoch, tr, va in self.rows:
                writer.writerow([epoch, repr(tr), repr(va)])


def mse(params, config: TgConfig, batch: Batch) -> float:
    return float(np.mean(np.square(predict(params, config, batch) - batch.y)))


def train(train_batch: Batch, val_batch: Batch, config: TgConfig, params=None):
    """Fit ``config``'s model; returns the best-validation parameters and the log.

    Row 0 of the log holds the losses of the initial parameters. Training
    stops after ``max_epochs`` or once validation MSE has not improved for
    ``patience`` consecutive epochs.
    """
    if len(train_batch) == 0 or len(val_batch) == 0:
        raise InputError("training and validation partitions must be non-empty")
    if config.geometric and (train_batch.A_hat is None or val_batch.A_hat is None):
        raise InputError("the Time-Geometric model needs adjacency matrices")

    params = init_params(config) if params is None else dict(params)
    state = AdamState.zeros_like(params)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])

    history = TrainingLog()
    history.rows.append((0, mse(params, config, train_batch), mse(params, config, val_batch)))
    best_val = np.inf
    best_params = params
    wait = 0
    n = len(train_batch)
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            mb = train_batch.take(order[start : start + config.batch_size])
            _, grads = gradients(mb, params, config, rng=dropout_rng)
            params, state = adam_step(params, grads, state, config.learning_rate)
        tr = mse(params, config, train_batch)
        va = mse(params, config, val_batch)
        history.rows.append((epoch, tr, va))
        log.debug("epoch %d train %.6g val %.6g", epoch, tr, va)
        if va < best_val:
            best_val, best_params, wait = va, params, 0
            history.best_epoch = epoch
        else:
            wait += 1
            if wait >= config.patience:
                history.stopped_early = True
                break
    return best_params, history


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(path, params, config: TgConfig, metadata: dict | None = None) -> None:
    """Write a JSON checkpoint: config echo, metadata and row-major parameter values."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "config": config.to_dict(),
        "seed": config.seed,
        "metadata": metadata or {},
        "params": [
            {"name": name, "shape": list(value.shape), "values": value.ravel().tolist()}
            for name, value in params.items()
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path):
    """Returns ``(params, config, metadata)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a JSON checkpoint ({exc})") from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise SchemaError(f"{path}: unsupported checkpoint format {doc.get('format')!r}")
    config = TgConfig.from_dict(doc["config"])
    expected = param_shapes(config)
    params = {}
    for entry in doc["params"]:
        shape = tuple(entry["shape"])
        if expected.get(entry["name"]) != shape:
            raise SchemaError(f"{path}: parameter {entry['name']} has unexpected shape {shape}")
        params[entry["name"]] = np.array(entry["values"], dtype=float).reshape(shape)
    missing = set(expected) - set(params)
    if missing:
        raise SchemaError(f"{path}: missing parameters {sorted(missing)}")
    return params, config, doc.get("metadata", {})
