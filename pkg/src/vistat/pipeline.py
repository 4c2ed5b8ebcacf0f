"""End-to-end glue: table -> normalized windows -> batches -> metrics."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InputError
from .metrics import MetricReport, evaluate
from .model import Batch, TgConfig, batch_from_samples, predict
from .series import (
    DEFAULT_WINDOW,
    FEATURE_ORDER,
    SeriesTable,
    SplitSpec,
    denormalize,
    make_windows,
    rolling_normalize,
    split,
)

# Named model presets. "desk" is sized for CPU runs; the others carry tuned
# full-scale hyperparameters for the recurrent (rnn) and LSTM time
# components at 1/5/20-day horizons.
_BASELINE = {
    ("lstm", 1): dict(learning_rate=0.000176, time_hidden=190, time_layers=2, batch_size=40, dropout=0.08, activation="selu"),
    ("rnn", 1): dict(learning_rate=0.000985, time_hidden=110, time_layers=2, batch_size=160, dropout=0.06, activation="selu"),
    ("lstm", 5): dict(learning_rate=0.000731, time_hidden=190, time_layers=4, batch_size=160, dropout=0.29, activation="selu"),
    ("rnn", 5): dict(learning_rate=0.000168, time_hidden=140, time_layers=2, batch_size=160, dropout=0.32, activation="selu"),
    ("lstm", 20): dict(learning_rate=0.000899, time_hidden=180, time_layers=6, batch_size=80, dropout=0.25, activation="selu"),
    ("rnn", 20): dict(learning_rate=0.000818, time_hidden=70, time_layers=3, batch_size=80, dropout=0.28, activation="elu"),
}
_GEOMETRIC = {
    ("lstm", 1): dict(geo_dropout=0.37, gcn_hidden=40, gcn_layers=9, lstm_hidden=40, use_dropout=True, skip_layer=True, directed=True),
    ("rnn", 1): dict(geo_dropout=0.22, gcn_hidden=110, gcn_layers=7, lstm_hidden=100, use_dropout=True, skip_layer=False, directed=True),
    ("lstm", 5): dict(geo_dropout=0.25, gcn_hidden=140, gcn_layers=5, lstm_hidden=160, use_dropout=False, skip_layer=True, directed=True),
    ("rnn", 5): dict(geo_dropout=0.13, gcn_hidden=160, gcn_layers=10, lstm_hidden=20, use_dropout=True, skip_layer=True, directed=True),
    ("lstm", 20): dict(geo_dropout=0.21, gcn_hidden=130, gcn_layers=5, lstm_hidden=50, use_dropout=False, skip_layer=False, directed=False),
    ("rnn", 20): dict(geo_dropout=0.11, gcn_hidden=110, gcn_layers=6, lstm_hidden=190, use_dropout=True, skip_layer=False, directed=False),
}


def _build_presets():
    presets = {
        "desk": dict(m=16, time_hidden=32, gcn_hidden=16, lstm_hidden=16, learning_rate=1e-3,
                     batch_size=32, max_epochs=300, patience=20),
    }
    for (cell, horizon), base in _BASELINE.items():
        common = dict(time_cell=cell, q=horizon, m=100, gcn_activation=base["activation"], **base)
        presets[f"baseline-{cell}-{horizon}d"] = dict(model="baseline", **common)
        presets[f"tg-{cell}-{horizon}d"] = dict(model="tg", **common, **_GEOMETRIC[(cell, horizon)])
    return presets


PRESETS = _build_presets()


@dataclass
class Prepared:
    """Train/validation/test batches plus the bookkeeping needed to undo scaling.

    ``batch.y`` holds targets standardized with the target column's rolling
    statistics at each window's anchor; ``extra`` carries ``y_raw``,
    ``mean``, ``std`` and ``t_index``.
    """

    train: Batch
    val: Batch
    test: Batch
    features: tuple[str, ...]
    n_rows: int

    def partition(self, name: str) -> Batch:
        try:
            return {"train": self.train, "val": self.val, "test": self.test}[name]
        except KeyError:
            raise InputError(f"unknown partition {name!r}") from None


def _empty_batch(m, F, q, with_graph):
    return Batch(
        X=np.zeros((0, m, F)),
        y=np.zeros((0, q)),
        A_hat=np.zeros((0, m, m)) if with_graph else None,
        extra={k: np.zeros((0, q)) if k == "y_raw" else np.zeros(0)
               for k in ("y_raw", "mean", "std", "t_index")},
    )


def prepare(
    table: SeriesTable,
    m: int,
    q: int,
    w: int = DEFAULT_WINDOW,
    features=FEATURE_ORDER,
    target: str = "close",
    split_spec: SplitSpec | None = None,
    directed: bool = False,
    with_graph: bool = True,
) -> Prepared:
    features = tuple(features)
    normalized, states = [], {}
    for name in features:
        values, state = rolling_normalize(table.column(name), w)
        normalized.append(values)
        states[name] = state
    feats = np.column_stack(normalized)
    if target in states:
        t_state = states[target]
    else:
        _, t_state = rolling_normalize(table.column(target), w)
    raw_target = table.column(target)[w - 1 :]
    n_rows = len(raw_target)

    batches = []
    for part in split(n_rows, split_spec):
        samples = make_windows(feats, raw_target, m, q, part)
        if not samples:
            batches.append(_empty_batch(m, len(features), q, with_graph))
            continue
        batch = batch_from_samples(samples, directed=directed, with_graph=with_graph)
        anchors = np.array([s.t_index for s in samples])
        mean = t_state.mean[anchors]
        std = t_state.std[anchors]
        batch.extra = {"y_raw": batch.y, "mean": mean, "std": std, "t_index": anchors}
        batch.y = (batch.y - mean[:, None]) / std[:, None]
        batches.append(batch)
    return Prepared(*batches, features=features, n_rows=n_rows)


def predict_raw(params, config: TgConfig, batch: Batch) -> np.ndarray:
    """Model predictions mapped back to the target's price scale."""
    scaled = predict(params, config, batch)
    return denormalize(scaled, batch.extra["mean"][:, None], batch.extra["std"][:, None])


def evaluate_model(params, config: TgConfig, batch: Batch) -> MetricReport:
    if len(batch) == 0:
        raise InputError("evaluation partition holds no windows")
    return evaluate(batch.extra["y_raw"], predict_raw(params, config, batch))


def synthetic_sinusoid(T: int = 600, period: float = 50.0, amplitude: float = 10.0,
                       level: float = 100.0, noise: float = 1.0, seed: int = 0,
                       instrument_id: str = "SINE") -> SeriesTable:
    """A noisy sine wave dressed up as an OHLCV table."""
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    close = level + amplitude * np.sin(2 * np.pi * t / period) + noise * rng.standard_normal(T)
    open_ = close + 0.5 * noise * rng.standard_normal(T)
    spread = np.abs(rng.standard_normal(T)) * noise
    high = np.maximum(open_, close) + spread
    low = np.minimum(open_, close) - spread
    volume = 1e6 * np.exp(0.1 * rng.standard_normal(T))
    start = dt.date(2015, 1, 5)
    dates = tuple(start + dt.timedelta(days=int(i)) for i in t)
    return SeriesTable(
        instrument_id,
        dates,
        {"open": open_, "high": high, "low": low, "close": close, "volume": volume},
    )


def write_table_csv(table: SeriesTable, path) -> None:
    cols = ("open", "high", "low", "close", "volume")
    lines = ["date," + ",".join(cols)]
    for i, day in enumerate(table.timestamps):
        lines.append(day.isoformat() + "," + ",".join(repr(float(table.columns[c][i])) for c in cols))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


@dataclass
class RunConfig:
    """Everything one train/evaluate run needs; loaded from JSON, overridable by flags."""

    input: str = ""
    horizon: int = 1
    m: int | None = None
    window: int = DEFAULT_WINDOW
    preset: str = "desk"
    model: dict = field(default_factory=dict)
    seed: int | None = None
    output_dir: str = "."
    features: list[str] = field(default_factory=lambda: list(FEATURE_ORDER))
    target: str = "close"
    split: list[float] = field(default_factory=lambda: [0.6, 0.2, 0.2])

    def __post_init__(self):
        if self.horizon < 1:
            raise InputError(f"horizon must be >= 1, got {self.horizon}")
        if self.preset not in PRESETS:
            raise InputError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown run-config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def model_config(self) -> TgConfig:
        settings = dict(PRESETS[self.preset])
        settings.update(self.model)
        settings["q"] = self.horizon
        if self.m is not None:
            settings["m"] = self.m
        settings["n_features"] = len(self.features)
        if self.seed is not None:
            settings["seed"] = self.seed
        return TgConfig.from_dict(settings)

    def data_settings(self) -> dict:
        return {
            "window": self.window,
            "features": list(self.features),
            "target": self.target,
            "split": list(self.split),
        }


def content_hash(payload: dict) -> str:
    """Git-style blob hash of the canonical JSON encoding of ``payload``."""
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def run_metadata(run: RunConfig, config: TgConfig) -> dict:
    data = run.data_settings()
    return {
        "preset": run.preset,
        "seed": config.seed,
        "data": data,
        "config_hash": content_hash({"model": asdict(config), "data": data}),
    }
