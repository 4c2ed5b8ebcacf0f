"""Time-Geometric forecaster and its recurrent baseline.

Three blocks, all operating on a batch of windows ``X`` of shape ``(B, m, F)``:

* time component: stacked Elman/LSTM layers, then a per-step dense
  projection back to ``F`` features with activation ``phi``;
* geometric component: GCN layers over the normalized visibility adjacency
  ``A_hat`` of shape ``(B, m, m)``, an LSTM over the node sequence, then a
  per-step linear projection to ``F`` features;
* fully connected component: sum of both patterns (optionally concatenated
  with ``X``), flattened row-major, a 128/64/32/16 dense stack with ``phi``
  and a linear head with ``q`` outputs.

The baseline is the same network without the geometric component.

Parameters live in a flat ``dict[str, ndarray]``. Every forward function
accepts either plain arrays or :class:`~vistat.autodiff.Tensor` leaves, so the
same code serves inference, reverse-mode gradients and finite differences.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, InputError, NumericalError
from .visgraph import build_vg

FC_SIZES = (128, 64, 32, 16)
TIME_CELLS = ("rnn", "lstm")
MODEL_KINDS = ("tg", "baseline")


@dataclass(frozen=True)
class TgConfig:
    m: int = 16
    q: int = 1
    n_features: int = 5
    model: str = "tg"
    time_cell: str = "rnn"
    time_layers: int = 1
    time_hidden: int = 32
    gcn_layers: int = 1
    gcn_hidden: int = 16
    lstm_hidden: int = 16
    activation: str = "elu"
    gcn_activation: str = "elu"
    skip_layer: bool = True
    use_dropout: bool = False
    dropout: float = 0.0
    geo_dropout: float = 0.0
    directed: bool = False
    learning_rate: float = 1e-3
    l2: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 1000
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        dims = ("m", "q", "n_features", "time_layers", "time_hidden", "gcn_layers",
                "gcn_hidden", "lstm_hidden", "batch_size", "max_epochs", "patience")
        for name in dims:
            if int(getattr(self, name)) < 1:
                raise InputError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.m < 2:
            raise InputError("m must be at least 2")
        if self.model not in MODEL_KINDS:
            raise InputError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.time_cell not in TIME_CELLS:
            raise InputError(f"time_cell must be one of {TIME_CELLS}, got {self.time_cell!r}")
        for name in ("activation", "gcn_activation"):
            if getattr(self, name) not in ad.ACTIVATIONS:
                raise InputError(f"unknown {name} {getattr(self, name)!r}")
        for name in ("dropout", "geo_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise InputError(f"{name} must lie in [0, 1)")
        if self.l2 < 0:
            raise InputError("l2 coefficient must be non-negative")
        if self.learning_rate < 0:
            raise InputError("learning rate must be non-negative")

    @property
    def geometric(self) -> bool:
        return self.model == "tg"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TgConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def with_(self, **changes) -> "TgConfig":
        return replace(self, **changes)


# -- parameters -------------------------------------------------------------

def param_shapes(config: TgConfig) -> dict[str, tuple[int, ...]]:
    """Ordered parameter layout. Names ending in ``.b`` are biases."""
    F = config.n_features
    shapes: dict[str, tuple[int, ...]] = {}
    gates = 4 if config.time_cell == "lstm" else 1
    d_in = F
    for layer in range(config.time_layers):
        H = config.time_hidden
        shapes[f"time.{layer}.W_x"] = (d_in, gates * H)
        shapes[f"time.{layer}.W_h"] = (H, gates * H)
        shapes[f"time.{layer}.b"] = (gates * H,)
        d_in = H
    shapes["time.out.W"] = (config.time_hidden, F)
    shapes["time.out.b"] = (F,)

    if config.geometric:
        d_in = F
        for layer in range(config.gcn_layers):
            shapes[f"geo.gcn.{layer}.theta"] = (d_in, config.gcn_hidden)
            d_in = config.gcn_hidden
        Hg = config.lstm_hidden
        shapes["geo.lstm.W_x"] = (d_in, 4 * Hg)
        shapes["geo.lstm.W_h"] = (Hg, 4 * Hg)
        shapes["geo.lstm.b"] = (4 * Hg,)
        shapes["geo.out.W"] = (Hg, F)
        shapes["geo.out.b"] = (F,)

    width = config.m * F * (2 if config.skip_layer else 1)
    for i, size in enumerate(FC_SIZES):
        shapes[f"fc.{i}.W"] = (width, size)
        shapes[f"fc.{i}.b"] = (size,)
        width = size
    shapes["fc.head.W"] = (width, config.q)
    shapes["fc.head.b"] = (config.q,)
    return shapes


def is_bias(name: str) -> bool:
    return name.endswith(".b")


def init_params(config: TgConfig, seed: int | None = None) -> dict[str, np.ndarray]:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    params = {}
    for name, shape in param_shapes(config).items():
        if is_bias(name):
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


# -- building blocks --------------------------------------------------------

def _dense(x, W, b=None):
    """``x @ W + b`` over the last axis.

    A 3-D ``W`` (or 2-D ``b``) carries one weight matrix per leading batch
    row; finite-difference sweeps use this to evaluate many perturbed
    parameter sets in one pass.
    """
    if W.ndim == 3:
        Wb = W.reshape(W.shape[:1] + (1,) * (x.ndim - 2) + W.shape[1:])
        y = (x[..., None, :] @ Wb)[..., 0, :]
    else:
        y = x @ W
    if b is not None:
        if b.ndim == 2:
            b = b.reshape(b.shape[:1] + (1,) * (x.ndim - 2) + b.shape[1:])
        y = y + b
    return y


def _dropout(x, rate, rng):
    if rate <= 0.0 or rng is None:
        return x
    mask = (rng.random(ad.value_of(x).shape) >= rate) / (1.0 - rate)
    return x * mask


def recurrent_layer(x_seq, W_x, W_h, b, cell: str, return_cells: bool = False):
    """Run one recurrent layer over axis ``-2`` of ``x_seq`` from a zero state.

    ``cell`` is ``"rnn"`` (``h = tanh(x W_x + h W_h + b)``) or ``"lstm"``
    (gate blocks ordered input, forget, candidate, output).
    """
    H = W_h.shape[-2]
    shape = tuple(x_seq.shape[:-2]) + (H,)
    h = np.zeros(shape)
    c = np.zeros(shape)
    hs, cs = [], []
    for t in range(x_seq.shape[-2]):
        z = _dense(x_seq[..., t, :], W_x) + _dense(h, W_h, b)
        if cell == "rnn":
            h = ad.tanh(z)
        else:
            i = ad.sigmoid(z[..., :H])
            f = ad.sigmoid(z[..., H : 2 * H])
            g = ad.tanh(z[..., 2 * H : 3 * H])
            o = ad.sigmoid(z[..., 3 * H :])
            c = f * c + i * g
            h = o * ad.tanh(c)
            cs.append(c)
        hs.append(h)
    out = ad.stack(hs, axis=-2)
    if return_cells:
        return out, (ad.stack(cs, axis=-2) if cs else None)
    return out


def normalize_adjacency(A) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree matrix of ``A + I``.

    Works on a single ``(m, m)`` matrix or a ``(B, m, m)`` stack.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionError(f"adjacency must be square, got shape {A.shape}")
    if not np.array_equal(A, np.swapaxes(A, -1, -2)):
        raise InputError("adjacency must be symmetric; symmetrize directed graphs first")
    if np.any(np.diagonal(A, axis1=-2, axis2=-1) != 0):
        raise InputError("adjacency must have a zero diagonal")
    A_tilde = A + np.eye(A.shape[-1])
    d = 1.0 / np.sqrt(A_tilde.sum(axis=-1))
    return A_tilde * d[..., :, None] * d[..., None, :]


def gcn_layer(A_hat, H, theta, rho="identity"):
    if A_hat.shape[-1] != H.shape[-2]:
        raise DimensionError(f"adjacency of size {A_hat.shape[-1]} vs {H.shape[-2]} nodes")
    if theta.shape[-2] != H.shape[-1]:
        raise DimensionError(f"theta expects {theta.shape[-2]} features, got {H.shape[-1]}")
    act = ad.ACTIVATIONS[rho] if isinstance(rho, str) else rho
    return act(_dense(A_hat @ H, theta))


# -- components ---------------------------------------------------------------

def _check_X(X, config):
    if X.shape[-2:] != (config.m, config.n_features):
        raise DimensionError(
            f"feature windows must be ({config.m}, {config.n_features}), got {X.shape[-2:]}"
        )


def time_component_forward(X, params, config: TgConfig, rng=None):
    _check_X(X, config)
    R = X
    for layer in range(config.time_layers):
        if layer > 0:
            R = _dropout(R, config.dropout, rng)
        R = recurrent_layer(
            R,
            params[f"time.{layer}.W_x"],
            params[f"time.{layer}.W_h"],
            params[f"time.{layer}.b"],
            config.time_cell,
        )
    phi = ad.ACTIVATIONS[config.activation]
    return phi(_dense(R, params["time.out.W"], params["time.out.b"]))


def geometric_component_forward(A_hat, X, params, config: TgConfig, rng=None):
    _check_X(X, config)
    if A_hat.shape[-2:] != (config.m, config.m):
        raise DimensionError(f"adjacency must be ({config.m}, {config.m}), got {A_hat.shape[-2:]}")
    H = X
    for layer in range(config.gcn_layers):
        H = gcn_layer(A_hat, H, params[f"geo.gcn.{layer}.theta"], config.gcn_activation)
        if config.use_dropout:
            H = _dropout(H, config.geo_dropout, rng)
    seq = recurrent_layer(
        H, params["geo.lstm.W_x"], params["geo.lstm.W_h"], params["geo.lstm.b"], "lstm"
    )
    return _dense(seq, params["geo.out.W"], params["geo.out.b"])


def fc_component_forward(x_time, x_graph, X, params, config: TgConfig, rng=None):
    total = x_time if x_graph is None else x_time + x_graph
    if config.skip_layer:
        total = ad.concat([total, X], axis=-1)
    z = total.reshape(tuple(total.shape[:-2]) + (-1,))
    phi = ad.ACTIVATIONS[config.activation]
    for i in range(len(FC_SIZES)):
        z = _dropout(phi(_dense(z, params[f"fc.{i}.W"], params[f"fc.{i}.b"])), config.dropout, rng)
    return _dense(z, params["fc.head.W"], params["fc.head.b"])


def forward(params, config: TgConfig, X, A_hat=None, rng=None):
    """Batched prediction, shape ``(B, q)``.

    Passing ``rng`` selects training mode: inverted dropout at rate
    ``dropout`` between recurrent layers and after each hidden dense layer,
    and at ``geo_dropout`` after each GCN layer when ``use_dropout`` is set.
    Leave it ``None`` for evaluation.
    """
    x_time = time_component_forward(X, params, config, rng)
    x_graph = None
    if config.geometric:
        if A_hat is None:
            raise InputError("the Time-Geometric model needs a normalized adjacency")
        x_graph = geometric_component_forward(A_hat, X, params, config, rng)
    return fc_component_forward(x_time, x_graph, X, params, config, rng)


def sample_adjacency(raw_target_window, directed: bool = False) -> np.ndarray:
    """Normalized adjacency of the visibility graph of one target window."""
    g = build_vg(raw_target_window, directed=directed).symmetrized()
    return normalize_adjacency(g.adjacency)


def tg_forward(sample, params, config: TgConfig):
    """Single-sample prediction of the Time-Geometric model (length ``q``)."""
    cfg = config if config.geometric else config.with_(model="tg")
    A_hat = sample_adjacency(sample.raw_target_window, cfg.directed)
    return forward(params, cfg, sample.X[None], A_hat[None])[0]


def baseline_forward(sample, params, config: TgConfig):
    cfg = config if not config.geometric else config.with_(model="baseline")
    return forward(params, cfg, sample.X[None])[0]


# -- objective ----------------------------------------------------------------

def loss(y_hat, y, params, l2: float):
    """Mean squared error plus ``l2`` times the sum of squared weights (biases excluded)."""
    if ad.value_of(y_hat).shape != np.shape(y):
        raise DimensionError(f"prediction shape {ad.value_of(y_hat).shape} vs target {np.shape(y)}")
    err = y_hat - y
    total = ad.square(err).mean() if isinstance(err, ad.Tensor) else np.mean(np.square(err))
    if l2:
        for name, value in params.items():
            if not is_bias(name):
                total = total + l2 * ad.square(value).sum()
    return total


@dataclass
class Batch:
    X: np.ndarray
    y: np.ndarray
    A_hat: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self):
        return self.X.shape[0]

    def take(self, idx) -> "Batch":
        return Batch(
            X=self.X[idx],
            y=self.y[idx],
            A_hat=None if self.A_hat is None else self.A_hat[idx],
            extra={k: v[idx] for k, v in self.extra.items()},
        )


def batch_from_samples(samples, directed: bool = False, with_graph: bool = True) -> Batch:
    X = np.stack([s.X for s in samples])
    y = np.stack([s.y for s in samples])
    A_hat = None
    if with_graph:
        A_hat = np.stack([sample_adjacency(s.raw_target_window, directed) for s in samples])
    return Batch(X=X, y=y, A_hat=A_hat)


def gradients(batch: Batch, params, config: TgConfig, l2: float | None = None, rng=None):
    """Loss value and exact gradient of the batch-mean loss w.r.t. every parameter."""
    l2 = config.l2 if l2 is None else l2
    leaves = {name: ad.Tensor(value, requires_grad=True, name=name) for name, value in params.items()}
    y_hat = forward(leaves, config, batch.X, batch.A_hat, rng=rng)
    objective = loss(y_hat, batch.y, leaves, l2)
    objective.backward()
    grads = {}
    for name, leaf in leaves.items():
        g = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
        if not np.all(np.isfinite(g)):
            raise NumericalError(name)
        grads[name] = g
    return float(objective.value), grads


def predict(params, config: TgConfig, batch: Batch, chunk: int = 1024) -> np.ndarray:
    if len(batch) == 0:
        return np.zeros((0, config.q))
    out = []
    for start in range(0, len(batch), chunk):
        part = batch.take(slice(start, start + chunk))
        out.append(forward(params, config, part.X, part.A_hat))
    return np.concatenate(out)
