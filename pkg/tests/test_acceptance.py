"""Acceptance criteria. Each test prints one ``[AC n] PASS|FAIL`` line.

Run ``python3 tests/test_acceptance.py`` to see the lines without pytest.
"""

import math
import time

import numpy as np
import pytest

from vistat import statcompare as sc
from vistat.gradcheck import finite_difference_gradients, relative_errors
from vistat.metrics import mae, mape, mase, rmse
from vistat.model import Batch, TgConfig, gradients, init_params, sample_adjacency
from vistat.pipeline import PRESETS, prepare, synthetic_sinusoid
from vistat.training import save_checkpoint, train
from vistat.visgraph import (
    build_vg,
    build_vg_bruteforce,
    degree_stats,
    gen_random,
    gen_regular,
    gen_small_world,
    is_connected,
)

from table_data import REFERENCE_CRITICAL, PAIRWISE, RMSE_1DAY_RANKS

RESULTS = []


def report(number, ok, detail, elapsed=None, limit=None):
    timing = ""
    if elapsed is not None:
        timing = f" [{elapsed:.2f}s"
        if limit is not None:
            timing += f" / limit {limit:g}s"
            ok = ok and elapsed < limit
        timing += "]"
    line = f"[AC {number:>2}] {'PASS' if ok else 'FAIL'}: {detail}{timing}"
    RESULTS.append(line)
    print(line)
    return ok


def random_series(count, seed):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        n = int(rng.integers(3, 65))
        steps = rng.standard_normal(n)
        out.append(steps if k % 2 == 0 else np.cumsum(steps))
    return out


# 1-3: visibility graphs -------------------------------------------------------------

SERIES = random_series(200, seed=2024)


def test_ac01_fast_scan_matches_bruteforce():
    start = time.perf_counter()
    mismatches = sum(build_vg(s) != build_vg_bruteforce(s) for s in SERIES)
    mismatches += sum(build_vg(s, True) != build_vg_bruteforce(s, True) for s in SERIES)
    elapsed = time.perf_counter() - start
    assert report(1, mismatches == 0,
                  f"fast scan == brute force on {len(SERIES)} series (undirected + directed), "
                  f"{mismatches} mismatches", elapsed, 5)


def test_ac02_affine_invariance():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    failures = 0
    for s in SERIES[:100]:
        a = float(np.exp(rng.uniform(-3, 3)))
        b = float(rng.uniform(-1e3, 1e3))
        failures += build_vg(a * s + b) != build_vg(s)
    elapsed = time.perf_counter() - start
    assert report(2, failures == 0, f"edge sets unchanged under 100 affine maps, {failures} failures", elapsed)


def test_ac03_connectivity():
    start = time.perf_counter()
    disconnected = sum(not is_connected(build_vg(s)) for s in SERIES)
    elapsed = time.perf_counter() - start
    assert report(3, disconnected == 0, f"all {len(SERIES)} undirected graphs connected", elapsed)


# 4-6: statistical constants and reference tables ------------------------------------

def test_ac04_constants():
    start = time.perf_counter()
    t89 = sc.critical_value("student-t", 0.975, 89)
    z = sc.critical_value("normal", 0.975)
    chi = sc.critical_value("chi-squared", 0.975, 15)
    wz = abs(sc.wilcoxon(np.arange(90.0) + 1, np.arange(90.0)).statistic)
    cd = sc.critical_difference(16, 90, 3.523)
    checks = [
        abs(t89 - 1.987) <= 0.002,
        abs(z - 1.960) <= 0.001,
        abs(chi - 27.488) <= 0.01,
        abs(wz - 8.238) <= 0.005,
        abs(cd - 2.500) <= 0.005,
    ]
    elapsed = time.perf_counter() - start
    assert report(4, all(checks),
                  f"t={t89:.4f} z={z:.4f} chi2={chi:.4f} |z_w|={wz:.4f} CD={cd:.4f}", elapsed, 1)


def test_ac05_friedman_from_reference_ranks():
    start = time.perf_counter()
    ranks = np.array(RMSE_1DAY_RANKS)
    res = sc.friedman_from_average_ranks(ranks, N=90)
    crit95, crit975 = res.details["critical_0.95"], res.details["critical_0.975"]
    ok = (
        abs(res.statistic - 1041) / 1041 < 0.01
        and res.statistic > crit95 and res.statistic > crit975
        and abs(ranks.sum() - 136) <= 0.15
    )
    elapsed = time.perf_counter() - start
    assert report(5, ok,
                  f"chi2_F={res.statistic:.2f} (reference 1041, {abs(res.statistic - 1041) / 1041:.2%} off), "
                  f"rejects vs {crit95:.3f} and {crit975:.3f}; rank sum {ranks.sum():.2f}", elapsed, 1)


RULES = {"paired-t": "abs-gt", "wilcoxon": "abs-gt", "sign": "ge"}


def regression_mismatches(cells):
    bad = []
    for model, test, metric, flag, stat in cells:
        decision = sc.decide(stat, REFERENCE_CRITICAL[test], RULES[test])
        if (decision == sc.REJECT) != (flag == "R"):
            bad.append((model, test, metric, flag, stat))
    return bad


# The one-day table prints A(58) for the BiLSTM sign test on RMSE although
# 58 exceeds both 54.42 and 54.30; no threshold reproduces that flag.
KNOWN_INCONSISTENT = [("BiLSTM", "sign", "rmse", "A", 58.0)]


def test_ac06_table_decision_logic():
    start = time.perf_counter()
    cells = PAIRWISE[1]
    bad = regression_mismatches(cells)
    elapsed = time.perf_counter() - start
    detail = f"{len(cells) - len(bad)}/{len(cells)} one-day pairwise cells reproduce their A/R flag"
    if bad:
        detail += "; unreproducible: " + ", ".join(f"{m} {t} {k} printed {f}({s:g})" for m, t, k, f, s in bad)
    ok = report(6, len(cells) == 96 and not bad, detail, elapsed, 1)
    if not ok and bad == KNOWN_INCONSISTENT:
        pytest.xfail("reference table flags A(58) against a 54.42 threshold")
    assert ok


@pytest.mark.parametrize("horizon", [5, 20])
def test_longer_horizon_tables_decision_logic(horizon):
    assert regression_mismatches(PAIRWISE[horizon]) == []


# 7: gradient verification -----------------------------------------------------------

GRAD_CONFIGS = [(cell, skip, q) for cell in ("rnn", "lstm") for skip in (True, False) for q in (1, 3)]


def test_ac07_gradients_match_finite_differences():
    start = time.perf_counter()
    worst_overall = 0.0
    for k, (cell, skip, q) in enumerate(GRAD_CONFIGS):
        cfg = TgConfig(m=4, q=q, n_features=2, time_cell=cell, skip_layer=skip,
                       time_layers=1, gcn_layers=1, time_hidden=3, gcn_hidden=3, lstm_hidden=3,
                       l2=1e-3, dropout=0.0, use_dropout=False, seed=k)
        rng = np.random.default_rng(100 + k)
        params = {n: v + rng.normal(scale=0.1, size=v.shape) for n, v in init_params(cfg).items()}
        raw = rng.standard_normal(cfg.m).cumsum()
        batch = Batch(
            X=rng.standard_normal((1, cfg.m, cfg.n_features)),
            y=rng.standard_normal((1, q)),
            A_hat=sample_adjacency(raw)[None],
        )
        _, analytic = gradients(batch, params, cfg)
        numeric = finite_difference_gradients(batch, params, cfg, h=1e-5)
        worst = max(float(e.max()) for e in relative_errors(analytic, numeric).values())
        worst_overall = max(worst_overall, worst)
    elapsed = time.perf_counter() - start
    assert report(7, worst_overall < 1e-4,
                  f"{len(GRAD_CONFIGS)} configs, worst relative error {worst_overall:.2e}", elapsed, 30)


# 8: toy training ----------------------------------------------------------------------

def test_ac08_toy_training(tmp_path):
    start = time.perf_counter()
    table = synthetic_sinusoid(T=600, seed=0)
    details, ok = [], True
    for model in ("tg", "baseline"):
        cfg = TgConfig.from_dict({**PRESETS["desk"], "model": model, "time_cell": "rnn",
                                  "q": 1, "n_features": 5, "max_epochs": 300, "seed": 0})
        data = prepare(table, m=16, q=1, w=30, with_graph=cfg.geometric)
        blobs = []
        for run in range(2):
            params, log = train(data.train, data.val, cfg)
            path = tmp_path / f"{model}{run}.json"
            save_checkpoint(path, params, cfg)
            blobs.append(path.read_bytes())
        ratio = log.final_train_loss / log.initial_train_loss
        identical = blobs[0] == blobs[1]
        ok = ok and ratio < 0.5 and log.stopped_early and identical
        details.append(f"{model}: loss ratio {ratio:.3f}, stopped at epoch {log.rows[-1][0]}"
                       f"{'' if log.stopped_early else ' (no early stop)'}, "
                       f"{'identical' if identical else 'DIFFERENT'} reruns")
    elapsed = time.perf_counter() - start
    assert report(8, ok, "; ".join(details), elapsed, 120)


# 9-11: metrics, exact sign test, generators ---------------------------------------------

def test_ac09_metric_properties():
    start = time.perf_counter()
    rng = np.random.default_rng(9)
    ok = True
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        y, y_hat = rng.normal(scale=rng.uniform(0.1, 100), size=(2, n))
        ok &= rmse(y, y_hat) >= mae(y, y_hat)
    for _ in range(200):
        y = rng.uniform(1, 100, size=20)
        y_hat = y + rng.normal(size=20)
        c = float(rng.uniform(0.01, 100))
        ok &= math.isclose(mape(c * y, c * y_hat), mape(y, y_hat), rel_tol=1e-12, abs_tol=1e-12)
        ok &= math.isclose(mase(c * y, c * y_hat), mase(y, y_hat), rel_tol=1e-12, abs_tol=1e-12)
    hand = mase([1, 2, 4], [1, 3, 3])
    ok &= abs(hand - 0.4444) <= 1e-4
    elapsed = time.perf_counter() - start
    assert report(9, bool(ok), f"RMSE >= MAE on 1000 pairs, scale invariance, mase hand example {hand:.4f}",
                  elapsed, 5)


def test_ac10_exact_sign_test_oracle():
    start = time.perf_counter()
    popcounts = np.bitwise_count(np.arange(1 << 25, dtype=np.uint32))
    mismatches = checked = 0
    for n in range(5, 26):
        hist = np.bincount(popcounts[: 1 << n], minlength=n + 1)
        for k in range(n + 1):
            p = min(1.0, 2 * min(hist[: k + 1].sum(), hist[k:].sum()) / 2**n)
            res = sc.sign_test(np.ones(n), np.where(np.arange(n) < k, 0.0, 2.0), exact=True)
            mismatches += res.rejected != (p <= 0.05)
            checked += 1
    elapsed = time.perf_counter() - start
    assert report(10, mismatches == 0,
                  f"{checked} (N, wins) cases vs enumerated binomial tails, {mismatches} mismatches", elapsed, 5)


def test_ac11_generators():
    start = time.perf_counter()
    regular = set(degree_stats(gen_regular(100, 30)).degrees.tolist())
    random_means = [degree_stats(gen_random(100, 0.2, seed=s)).mean for s in range(20)]
    sw = degree_stats(gen_small_world(100, 10, 0.1, seed=0)).mean
    ok = regular == {30} and all(abs(m - 19.8) <= 3 for m in random_means) and sw == 10
    elapsed = time.perf_counter() - start
    assert report(11, ok,
                  f"regular degrees {sorted(regular)}, random mean degree range "
                  f"[{min(random_means):.2f}, {max(random_means):.2f}], small-world mean {sw}", elapsed, 5)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
