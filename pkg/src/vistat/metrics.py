"""Point-forecast accuracy metrics: RMSE, MAE, MAPE and MASE.

MAPE is returned as a fraction, not a percentage. MASE scales MAE by the
mean absolute one-step change of the evaluated series itself.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numpy as np

from .errors import DegenerateError, DimensionError

REPORT_HEADER = ("dataset", "algorithm", "horizon", "rmse", "mae", "mape", "mase", "M")


def _pair(y, y_hat, min_len=1):
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape:
        raise DimensionError(f"length mismatch: {y.size} targets vs {y_hat.size} forecasts")
    if y.size < min_len:
        raise DimensionError(f"need at least {min_len} values, got {y.size}")
    return y, y_hat


def rmse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    err = np.abs(y - y_hat)
    # scale by the largest error so tiny or huge errors neither underflow nor overflow
    top = err.max()
    if top == 0 or not np.isfinite(top):
        return float(top)
    return float(top * np.sqrt(np.mean((err / top) ** 2)))


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def mape(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    zeros = np.flatnonzero(y == 0)
    if zeros.size:
        raise DegenerateError(f"MAPE undefined: target is zero at index {int(zeros[0])}")
    return float(np.mean(np.abs((y - y_hat) / y)))


def naive_scale(y) -> float:
    """Mean absolute one-step change, the in-sample naive forecast's MAE."""
    y = np.asarray(y, dtype=float).ravel()
    return float(np.mean(np.abs(np.diff(y))))


def mase(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat, min_len=2)
    scale = naive_scale(y)
    if scale == 0:
        raise DegenerateError("MASE undefined: target series is constant")
    return mae(y, y_hat) / scale


@dataclass(frozen=True)
class MetricReport:
    rmse: float
    mae: float
    mape: float
    mase: float
    M: int

    def csv_row(self, dataset: str, algorithm: str, horizon: int) -> list[str]:
        return [dataset, algorithm, str(horizon)] + [repr(v) for v in astuple(self)[:4]] + [str(self.M)]


def evaluate(y, y_hat) -> MetricReport:
    """Metrics for forecasts of shape ``(M,)`` or ``(M, q)``.

    With ``q > 1`` each column (one horizon step, anchors in time order) is
    scored as its own series and the four metrics are averaged over steps.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise DimensionError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    if y.ndim == 1:
        y, y_hat = y[:, None], y_hat[:, None]
    per_step = [
        (rmse(y[:, h], y_hat[:, h]), mae(y[:, h], y_hat[:, h]),
         mape(y[:, h], y_hat[:, h]), mase(y[:, h], y_hat[:, h]))
        for h in range(y.shape[1])
    ]
    means = np.mean(np.array(per_step), axis=0)
    return MetricReport(*(float(v) for v in means), M=int(y.shape[0]))

