"""OHLCV ingestion, trailing-window standardization, chronological splits and
supervised windows."""

from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    DegenerateWindowError,
    DuplicateDateError,
    InputError,
    InvalidStateError,
    RowError,
    SchemaError,
    SplitError,
)

OHLCV_COLUMNS = ("open", "high", "low", "close", "volume")
# column order used for feature matrices: Close first, it is the forecast target
FEATURE_ORDER = ("close", "open", "high", "low", "volume")
DEFAULT_WINDOW = 30


class WindowWarning(UserWarning):
    """Raised (as a warning) when a partition is too short to hold any window."""


@dataclass(frozen=True)
class SeriesTable:
    instrument_id: str
    timestamps: tuple[dt.date, ...]
    columns: dict[str, np.ndarray]

    def __post_init__(self):
        lengths = {len(v) for v in self.columns.values()}
        if lengths and lengths != {len(self.timestamps)}:
            raise SchemaError("all columns must share the timestamp length")
        if len(self.timestamps) < 1:
            raise SchemaError("series table has no rows")

    @property
    def T(self) -> int:
        return len(self.timestamps)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}") from None

    def matrix(self, names=FEATURE_ORDER) -> np.ndarray:
        return np.column_stack([self.column(n) for n in names])


@dataclass(frozen=True)
class NormalizationState:
    """Rolling statistics; entry k belongs to original index ``k + w - 1``."""

    w: int
    mean: np.ndarray
    std: np.ndarray

    @property
    def offset(self) -> int:
        return self.w - 1


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(not 0.0 < f < 1.0 for f in fracs):
            raise SplitError(f"split fractions must lie in (0, 1), got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise SplitError(f"split fractions must sum to 1, got {sum(fracs)}")


@dataclass(frozen=True)
class WindowSample:
    X: np.ndarray
    raw_target_window: np.ndarray
    y: np.ndarray
    t_index: int
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @property
    def q(self) -> int:
        return self.y.shape[0]


def load_ohlcv(path, instrument_id: str | None = None) -> SeriesTable:
    """Read a ``date,open,high,low,close,volume`` CSV into a sorted table.

    Rows may appear in any order; they are sorted ascending by date. Extra
    columns are ignored.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip().lower() for h in (reader.fieldnames or [])]
        if not header:
            raise SchemaError(f"{path}: empty file or missing header")
        missing = [c for c in ("date",) + OHLCV_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s): {', '.join(missing)}")
        reader.fieldnames = header

        rows = []
        seen = {}
        for record in reader:
            line = reader.line_num
            try:
                day = dt.date.fromisoformat(record["date"].strip())
            except (AttributeError, ValueError):
                raise RowError(line, f"unparseable date {record.get('date')!r}") from None
            values = []
            for name in OHLCV_COLUMNS:
                raw = record[name]
                try:
                    value = float(raw)
                except (TypeError, ValueError):
                    raise RowError(line, f"unparseable {name} value {raw!r}") from None
                if not math.isfinite(value):
                    raise RowError(line, f"non-finite {name} value {raw!r}")
                values.append(value)
            if day in seen:
                raise DuplicateDateError(
                    f"{path}: date {day} appears on lines {seen[day]} and {line}"
                )
            seen[day] = line
            rows.append((day, values))

    if not rows:
        raise SchemaError(f"{path}: no data rows")
    rows.sort(key=lambda r: r[0])
    data = np.array([r[1] for r in rows], dtype=float)
    columns = {name: data[:, i].copy() for i, name in enumerate(OHLCV_COLUMNS)}
    return SeriesTable(
        instrument_id=instrument_id or path.stem,
        timestamps=tuple(r[0] for r in rows),
        columns=columns,
    )


def rolling_normalize(series, w: int = DEFAULT_WINDOW):
    """Standardize each point by the mean/population std of its trailing window.

    The window for index ``t`` is ``series[t-w+1 : t+1]``; the first ``w-1``
    points have no full window and are dropped.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise InputError("rolling_normalize expects a 1-D series")
    if w < 2 or len(x) < w:
        raise InputError(f"need len(series) >= w >= 2, got len={len(x)}, w={w}")
    windows = sliding_window_view(x, w)
    mean = windows.mean(axis=1)
    std = windows.std(axis=1)
    bad = np.flatnonzero(std == 0.0)
    if bad.size:
        raise DegenerateWindowError(int(bad[0]) + w - 1)
    normalized = (x[w - 1:] - mean) / std
    return normalized, NormalizationState(w=w, mean=mean, std=std)


def denormalize(value, mean, std):
    std_arr = np.asarray(std, dtype=float)
    if np.any(std_arr <= 0):
        raise InvalidStateError("standard deviation must be positive")
    out = std_arr * np.asarray(value, dtype=float) + np.asarray(mean, dtype=float)
    return float(out) if out.ndim == 0 else out


def split(T: int, spec: SplitSpec | None = None) -> tuple[range, range, range]:
    spec = spec or SplitSpec()
    if T < 5:
        raise SplitError(f"need at least 5 observations to split, got {T}")
    # tiny slack so that e.g. 0.6 * 10 is not floored to 5
    n_train = math.floor(spec.train_frac * T + 1e-9)
    n_val = math.floor(spec.val_frac * T + 1e-9)
    n_test = T - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise SplitError(f"split of T={T} leaves an empty partition")
    return (
        range(0, n_train),
        range(n_train, n_train + n_val),
        range(n_train + n_val, T),
    )


def make_windows(features, raw_target, m: int, q: int, partition: range) -> list[WindowSample]:
    """One sample per anchor ``t`` whose past ``m`` rows and next ``q`` targets
    all lie inside ``partition``. Targets are taken from ``raw_target``."""
    feats = np.asarray(features, dtype=float)
    if feats.ndim == 1:
        feats = feats[:, None]
    target = np.asarray(raw_target, dtype=float)
    if m < 2 or q < 1:
        raise InputError(f"need m >= 2 and q >= 1, got m={m}, q={q}")
    if len(target) != len(feats):
        raise InputError("features and raw_target must have the same length")
    start, stop = partition.start, partition.stop
    if m + q > stop - start:
        warnings.warn(
            f"partition of length {stop - start} cannot hold m={m} + q={q}",
            WindowWarning,
            stacklevel=2,
        )
        return []
    samples = []
    for t in range(start + m - 1, stop - q):
        samples.append(
            WindowSample(
                X=feats[t - m + 1 : t + 1].copy(),
                raw_target_window=target[t - m + 1 : t + 1].copy(),
                y=target[t + 1 : t + q + 1].copy(),
                t_index=t,
            )
        )
    return samples


def write_windows_csv(samples, path) -> None:
    """One row per sample: anchor index, the anchor row of ``X`` and the targets."""
    path = Path(path)
    if not samples:
        path.write_text("t_index\n")
        return
    F = samples[0].X.shape[1]
    q = samples[0].q
    header = ["t_index"] + [f"feature_{i}" for i in range(F)] + [f"y_{i}" for i in range(q)]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for s in samples:
            writer.writerow([s.t_index, *map(repr, s.X[-1].tolist()), *map(repr, s.y.tolist())])
