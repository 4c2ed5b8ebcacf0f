import numpy as np
import pytest

from vistat import autodiff as ad
from vistat.errors import DimensionError, InputError
from vistat.gradcheck import finite_difference_gradients, relative_errors
from vistat.model import (
    Batch,
    TgConfig,
    baseline_forward,
    fc_component_forward,
    forward,
    gcn_layer,
    geometric_component_forward,
    gradients,
    init_params,
    loss,
    normalize_adjacency,
    param_shapes,
    recurrent_layer,
    sample_adjacency,
    tg_forward,
    time_component_forward,
)
from vistat.series import WindowSample


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def small(**kw):
    base = dict(m=4, q=1, n_features=2, time_hidden=3, gcn_hidden=3, lstm_hidden=3, l2=1e-3)
    base.update(kw)
    return TgConfig(**base)


def sample_for(config, seed=0):
    rng = np.random.default_rng(seed)
    return WindowSample(
        X=rng.normal(size=(config.m, config.n_features)),
        raw_target_window=rng.normal(size=config.m).cumsum(),
        y=rng.normal(size=config.q),
        t_index=config.m - 1,
    )


# -- adjacency and gcn ----------------------------------------------------------

def test_normalize_adjacency_examples():
    np.testing.assert_array_equal(normalize_adjacency([[0]]), [[1.0]])
    np.testing.assert_allclose(normalize_adjacency([[0, 1], [1, 0]]), np.full((2, 2), 0.5))
    tri = np.ones((3, 3)) - np.eye(3)
    np.testing.assert_allclose(normalize_adjacency(tri), np.full((3, 3), 1 / 3))


def test_normalize_adjacency_contract(rng):
    with pytest.raises(InputError):
        normalize_adjacency([[0, 1], [0, 0]])
    with pytest.raises(InputError):
        normalize_adjacency([[1, 0], [0, 0]])
    A = np.triu((rng.random((6, 6)) < 0.4).astype(float), 1)
    A_hat = normalize_adjacency(A + A.T)
    np.testing.assert_allclose(A_hat, A_hat.T)


def test_gcn_layer_examples():
    H = np.array([[1.0, -2.0], [3.0, 0.5]])
    theta = np.array([[2.0, 0.0, 1.0], [1.0, -1.0, 0.0]])
    np.testing.assert_allclose(gcn_layer(np.eye(2), H, theta), H @ theta)
    path = normalize_adjacency([[0, 1], [1, 0]])
    np.testing.assert_allclose(gcn_layer(path, np.array([[1.0], [3.0]]), np.eye(1)), [[2.0], [2.0]])
    np.testing.assert_array_equal(gcn_layer(np.eye(2), -np.abs(H) - 1, np.eye(2), "relu"), 0.0)
    with pytest.raises(DimensionError):
        gcn_layer(np.eye(3), H, theta)


# -- time component ---------------------------------------------------------------

def test_time_component_zero_weights():
    cfg = small(activation="identity")
    params = {k: np.zeros_like(v) for k, v in init_params(cfg).items()}
    out = time_component_forward(sample_for(cfg).X[None], params, cfg)
    np.testing.assert_array_equal(out, 0.0)


def test_time_component_first_step_hand_unroll():
    cfg = small(activation="elu")
    params = init_params(cfg, seed=4)
    params["time.0.b"] = np.array([0.1, -0.2, 0.3])
    params["time.out.b"] = np.array([0.05, -0.05])
    X = sample_for(cfg).X
    out = time_component_forward(X[None], params, cfg)[0]
    h = np.tanh(X[0] @ params["time.0.W_x"] + params["time.0.b"])
    pre = h @ params["time.out.W"] + params["time.out.b"]
    expected = np.where(pre > 0, pre, np.expm1(pre))
    np.testing.assert_allclose(out[0], expected, rtol=1e-14)
    h1 = np.tanh(X[1] @ params["time.0.W_x"] + h @ params["time.0.W_h"] + params["time.0.b"])
    pre1 = h1 @ params["time.out.W"] + params["time.out.b"]
    np.testing.assert_allclose(out[1], np.where(pre1 > 0, pre1, np.expm1(pre1)), rtol=1e-14)


def test_lstm_saturated_gates_sum_candidates(rng):
    H, F, m = 3, 2, 6
    W_x = rng.normal(size=(F, 4 * H))
    W_h = np.zeros((H, 4 * H))
    b = np.zeros(4 * H)
    b[:H] = 60.0          # input gate open
    b[H : 2 * H] = 60.0   # forget gate open
    b[3 * H :] = 60.0     # output gate open
    x = rng.normal(size=(m, F))
    hs, cs = recurrent_layer(x, W_x, W_h, b, "lstm", return_cells=True)
    g = np.tanh(x @ W_x[:, 2 * H : 3 * H])
    np.testing.assert_allclose(cs, np.cumsum(g, axis=0), rtol=1e-12)
    np.testing.assert_allclose(hs, np.tanh(np.cumsum(g, axis=0)), rtol=1e-12)


# -- geometric component ----------------------------------------------------------

def test_geometric_zero_weights_give_zero(rng):
    cfg = small()
    params = init_params(cfg)
    for name in ("geo.lstm.W_x", "geo.lstm.W_h", "geo.lstm.b", "geo.out.W", "geo.out.b"):
        params[name] = np.zeros_like(params[name])
    s = sample_for(cfg)
    out = geometric_component_forward(sample_adjacency(s.raw_target_window)[None], s.X[None], params, cfg)
    np.testing.assert_array_equal(out, 0.0)


def test_geometric_empty_graph_identity_gcn(rng):
    cfg = small(gcn_hidden=2, gcn_activation="identity")
    params = init_params(cfg, seed=2)
    params["geo.gcn.0.theta"] = np.eye(2)
    X = sample_for(cfg).X
    out = geometric_component_forward(np.eye(cfg.m)[None], X[None], params, cfg)[0]
    seq = recurrent_layer(X, params["geo.lstm.W_x"], params["geo.lstm.W_h"], params["geo.lstm.b"], "lstm")
    np.testing.assert_allclose(out, seq @ params["geo.out.W"] + params["geo.out.b"], rtol=1e-14)


def test_geometric_two_node_path_hand_unroll():
    cfg = TgConfig(m=2, q=1, n_features=1, gcn_hidden=1, lstm_hidden=1, gcn_activation="identity")
    params = init_params(cfg, seed=0)
    params["geo.gcn.0.theta"] = np.array([[2.0]])
    wx = np.array([0.3, -0.4, 0.5, 0.6])     # i, f, g, o
    wh = np.array([0.1, 0.2, -0.3, 0.4])
    bb = np.array([0.0, 0.5, 0.1, -0.1])
    params["geo.lstm.W_x"] = wx[None]
    params["geo.lstm.W_h"] = wh[None]
    params["geo.lstm.b"] = bb
    params["geo.out.W"] = np.array([[1.5]])
    params["geo.out.b"] = np.array([0.25])
    X = np.array([[1.0], [3.0]])
    A_hat = normalize_adjacency([[0, 1], [1, 0]])
    out = geometric_component_forward(A_hat[None], X[None], params, cfg)[0]

    gcn = [0.5 * 1 * 2 + 0.5 * 3 * 2] * 2     # both nodes: 4.0
    h = c = 0.0
    expected = []
    for u in gcn:
        z = wx * u + wh * h + bb
        i, f, g, o = sigmoid(z[0]), sigmoid(z[1]), np.tanh(z[2]), sigmoid(z[3])
        c = f * c + i * g
        h = o * np.tanh(c)
        expected.append(1.5 * h + 0.25)
    np.testing.assert_allclose(out[:, 0], expected, rtol=1e-13)


def test_adjacency_size_mismatch():
    cfg = small()
    params = init_params(cfg)
    with pytest.raises(DimensionError):
        geometric_component_forward(np.eye(3)[None], np.zeros((1, 4, 2)), params, cfg)


# -- fully connected and composition ------------------------------------------------

def test_fc_additive_identity_and_swap(rng):
    cfg = small(skip_layer=False)
    params = init_params(cfg, seed=5)
    a, b = rng.normal(size=(2, 1, cfg.m, cfg.n_features))
    X = rng.normal(size=(1, cfg.m, cfg.n_features))
    np.testing.assert_array_equal(
        fc_component_forward(a, np.zeros_like(a), X, params, cfg),
        fc_component_forward(a, None, X, params, cfg),
    )
    skip = cfg.with_(skip_layer=True)
    sp = init_params(skip, seed=5)
    np.testing.assert_array_equal(
        fc_component_forward(a, b, X, sp, skip), fc_component_forward(b, a, X, sp, skip)
    )


def test_fc_zero_weights():
    cfg = small()
    params = {k: np.zeros_like(v) for k, v in init_params(cfg).items()}
    X = np.ones((1, cfg.m, cfg.n_features))
    np.testing.assert_array_equal(fc_component_forward(X, X, X, params, cfg), 0.0)


@pytest.mark.parametrize("skip", [True, False])
def test_baseline_equals_tg_with_zero_graph(skip):
    cfg = small(skip_layer=skip)
    params = init_params(cfg, seed=8)
    params["geo.out.W"] = np.zeros_like(params["geo.out.W"])
    params["geo.out.b"] = np.zeros_like(params["geo.out.b"])
    base_cfg = cfg.with_(model="baseline")
    base_params = {k: v for k, v in params.items() if k in param_shapes(base_cfg)}
    s = sample_for(cfg, seed=3)
    np.testing.assert_array_equal(tg_forward(s, params, cfg), baseline_forward(s, base_params, base_cfg))


@pytest.mark.parametrize("q", [1, 5, 20])
@pytest.mark.parametrize("cell", ["rnn", "lstm"])
def test_output_length(q, cell):
    cfg = TgConfig(m=8, q=q, n_features=5, time_cell=cell, time_hidden=6, gcn_hidden=4, lstm_hidden=4)
    params = init_params(cfg)
    s = sample_for(cfg)
    first = tg_forward(s, params, cfg)
    assert first.shape == (q,)
    assert np.array_equal(first, tg_forward(s, params, cfg))


def test_param_names_differ_by_model():
    tg = set(param_shapes(small()))
    bl = set(param_shapes(small(model="baseline")))
    assert bl < tg
    assert all(name.startswith("geo.") for name in tg - bl)


def test_config_validation():
    with pytest.raises(InputError):
        TgConfig(patience=0)
    with pytest.raises(InputError):
        TgConfig(dropout=1.0)
    with pytest.raises(InputError):
        TgConfig(activation="softsign")
    with pytest.raises(InputError):
        TgConfig.from_dict({"bogus": 1})
    assert TgConfig.from_dict(small().to_dict()) == small()


# -- loss and gradients --------------------------------------------------------------

def test_loss_examples():
    params = {"w.W": np.array([[1.0, -2.0]]), "w.b": np.array([5.0])}
    assert loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]), params, 0.0) == 0.0
    assert loss(np.array([0.0]), np.array([2.0]), params, 0.0) == 4.0
    assert loss(np.array([0.0]), np.array([2.0]), params, 0.5) == pytest.approx(4.0 + 0.5 * 5.0)
    zeros = {k: np.zeros_like(v) for k, v in params.items()}
    assert loss(np.array([0.0]), np.array([2.0]), zeros, 0.5) == 4.0


def test_penalty_gradient_is_two_lambda_w():
    cfg = small(model="baseline")
    params = init_params(cfg, seed=1)
    batch = Batch(X=np.zeros((1, cfg.m, cfg.n_features)), y=np.zeros((1, 1)))
    lam = 0.3
    _, with_pen = gradients(batch, params, cfg, l2=lam)
    _, without = gradients(batch, params, cfg, l2=0.0)
    for name in params:
        expected = 0.0 if name.endswith(".b") else 2 * lam * params[name]
        np.testing.assert_allclose(with_pen[name] - without[name], expected, atol=1e-12)


def test_zero_loss_point_head_bias_gradient():
    cfg = small(activation="identity")
    params = init_params(cfg, seed=3)
    s = sample_for(cfg)
    A_hat = sample_adjacency(s.raw_target_window)[None]
    y = forward(params, cfg, s.X[None], A_hat)
    _, grads = gradients(Batch(s.X[None], y, A_hat), params, cfg, l2=0.0)
    np.testing.assert_array_equal(grads["fc.head.b"], 0.0)


@pytest.mark.parametrize("cell", ["rnn", "lstm"])
def test_gradients_match_finite_differences_small(cell):
    cfg = small(time_cell=cell, activation="tanh", gcn_activation="elu", m=3, time_hidden=2,
                gcn_hidden=2, lstm_hidden=2)
    params = init_params(cfg, seed=11)
    params = {k: v + 0.05 for k, v in params.items()}   # move biases off zero
    s = sample_for(cfg, seed=2)
    batch = Batch(s.X[None], s.y[None], sample_adjacency(s.raw_target_window)[None])
    _, analytic = gradients(batch, params, cfg)
    numeric = finite_difference_gradients(batch, params, cfg)
    worst = max(e.max() for e in relative_errors(analytic, numeric).values())
    assert worst < 1e-4


def test_batch_gradient_is_mean_of_sample_gradients():
    cfg = small()
    params = init_params(cfg, seed=6)
    samples = [sample_for(cfg, seed=k) for k in range(3)]
    A = np.stack([sample_adjacency(s.raw_target_window) for s in samples])
    full = Batch(np.stack([s.X for s in samples]), np.stack([s.y for s in samples]), A)
    _, g_all = gradients(full, params, cfg, l2=0.0)
    parts = [gradients(full.take([k]), params, cfg, l2=0.0)[1] for k in range(3)]
    for name in params:
        np.testing.assert_allclose(g_all[name], np.mean([p[name] for p in parts], axis=0), atol=1e-12)


def test_dropout_only_in_training_mode():
    cfg = small(dropout=0.5)
    params = init_params(cfg)
    s = sample_for(cfg)
    A_hat = sample_adjacency(s.raw_target_window)[None]
    a = forward(params, cfg, s.X[None], A_hat)
    assert np.array_equal(a, forward(params, cfg, s.X[None], A_hat))
    b = forward(params, cfg, s.X[None], A_hat, rng=np.random.default_rng(0))
    assert not np.array_equal(a, b)


def test_tensor_and_array_paths_agree():
    cfg = small(time_cell="lstm")
    params = init_params(cfg, seed=9)
    s = sample_for(cfg)
    A_hat = sample_adjacency(s.raw_target_window)[None]
    leaves = {k: ad.Tensor(v, requires_grad=True) for k, v in params.items()}
    np.testing.assert_array_equal(
        forward(leaves, cfg, s.X[None], A_hat).value, forward(params, cfg, s.X[None], A_hat)
    )
