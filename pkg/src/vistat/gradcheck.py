"""Central finite differences of the training loss, for checking gradients.

Perturbed copies of one parameter array are evaluated together: the sample
is repeated along the batch axis and each row gets its own perturbed weight
matrix, so a full sweep over ~10^4 parameters costs a few dozen forwards.
"""

from __future__ import annotations

import numpy as np

from .model import Batch, TgConfig, forward, is_bias


def _row_losses(params, config, X, A_hat, y, l2, perturbed, base_penalty):
    y_hat = forward(params, config, X, A_hat)
    mse = np.mean(np.square(y_hat - y), axis=-1)
    if not l2:
        return mse
    value = params[perturbed]
    own = 0.0
    if not is_bias(perturbed):
        own = np.sum(np.square(value).reshape(value.shape[0], -1), axis=1)
    return mse + l2 * (base_penalty + own)


def finite_difference_gradients(
    batch: Batch,
    params: dict[str, np.ndarray],
    config: TgConfig,
    l2: float | None = None,
    h: float = 1e-5,
    chunk: int = 256,
    names=None,
) -> dict[str, np.ndarray]:
    """``(L(p + h) - L(p - h)) / 2h`` for every entry of every parameter.

    ``batch`` must hold a single sample.
    """
    if len(batch) != 1:
        raise ValueError("finite differences are taken on a single sample")
    l2 = config.l2 if l2 is None else l2
    names = list(params) if names is None else list(names)
    out = {}
    for name in names:
        base = params[name]
        others = {k: v for k, v in params.items() if k != name}
        penalty = sum(np.sum(np.square(v)) for k, v in others.items() if not is_bias(k))
        flat_size = base.size
        grad = np.empty(flat_size)
        for start in range(0, flat_size, chunk):
            idx = np.arange(start, min(start + chunk, flat_size))
            rows = 2 * idx.size
            stacked = np.repeat(base.reshape(1, -1), rows, axis=0)
            stacked[np.arange(idx.size), idx] += h
            stacked[idx.size + np.arange(idx.size), idx] -= h
            trial = dict(others)
            trial[name] = stacked.reshape((rows,) + base.shape)
            X = np.repeat(batch.X, rows, axis=0)
            A_hat = None if batch.A_hat is None else np.repeat(batch.A_hat, rows, axis=0)
            y = np.repeat(batch.y, rows, axis=0)
            losses = _row_losses(trial, config, X, A_hat, y, l2, name, penalty)
            grad[idx] = (losses[: idx.size] - losses[idx.size :]) / (2.0 * h)
        out[name] = grad.reshape(base.shape)
    return out


def relative_errors(analytic, numeric, floor: float = 1e-6) -> dict[str, np.ndarray]:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)`` per parameter."""
    errs = {}
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        errs[name] = np.abs(a - n) / denom
    return errs
