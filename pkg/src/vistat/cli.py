"""Command-line entry point: ``vistat {vg,normalize,train,evaluate,compare,rank}``.

Exit codes: 0 success, 2 input/schema error, 3 degenerate math, 4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import shutil
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import statcompare as sc
from .errors import InputError, SchemaError, VistatError
from .metrics import REPORT_HEADER
from .pipeline import RunConfig, evaluate_model, prepare, run_metadata
from .series import SplitSpec, load_ohlcv, make_windows, rolling_normalize, split, write_windows_csv
from .training import load_checkpoint, save_checkpoint, train
from .visgraph import build_vg, write_edge_list, write_matrix

log = logging.getLogger("vistat")

REPORT_COLUMNS = ("test", "metric", "horizon", "pair_or_family", "statistic", "critical", "decision", "warnings")
TEST_NAMES = {"t": "paired-t", "wilcoxon": "wilcoxon", "sign": "sign"}


# -- helpers ----------------------------------------------------------------

def _read_column(path, column):
    """Values of one named column from any CSV with a header row."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise SchemaError(f"{path}: empty file")
        header = [h.strip().lower() for h in reader.fieldnames]
        if column not in header:
            raise SchemaError(f"{path}: missing column {column!r}")
        reader.fieldnames = header
        values = []
        for row in reader:
            try:
                values.append(float(row[column]))
            except (TypeError, ValueError):
                raise InputError(f"{path}: line {reader.line_num}: bad value {row[column]!r}") from None
    if not values:
        raise SchemaError(f"{path}: no data rows")
    return np.array(values)


def _emit(text, output):
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _resolve_seed(flag, config_value):
    if flag is not None:
        return flag
    if config_value is not None:
        return config_value
    env = os.environ.get("VISTAT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"VISTAT_SEED must be an integer, got {env!r}") from None
    return 0


def _load_run_config(args) -> RunConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from None
    overrides = {
        "input": args.input,
        "horizon": args.horizon,
        "m": args.m,
        "window": args.window,
        "preset": args.preset,
        "output_dir": args.output_dir,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    model = dict(data.get("model", {}))
    if args.model is not None:
        model["model"] = args.model
    if args.cell is not None:
        model["time_cell"] = {"rnn": "rnn", "lstm": "lstm"}[args.cell]
    if args.epochs is not None:
        model["max_epochs"] = args.epochs
    if args.lr is not None:
        model["learning_rate"] = args.lr
    if args.directed:
        model["directed"] = True
    data["model"] = model
    if args.features:
        data["features"] = [f.strip() for f in args.features.split(",") if f.strip()]
    data["seed"] = _resolve_seed(args.seed, data.get("seed"))
    return RunConfig.from_dict(data)


def _manifest_inputs(path):
    lines = Path(path).read_text().splitlines()
    entries = [ln.strip() for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    if not entries:
        raise InputError(f"manifest {path} lists no instruments")
    return entries


# -- subcommands ------------------------------------------------------------

def cmd_vg(args):
    values = _read_column(args.input, args.column)
    if args.window:
        if args.window > len(values):
            raise InputError(f"window {args.window} exceeds series length {len(values)}")
        values = values[-args.window :]
    g = build_vg(values, directed=args.directed)
    if args.format == "matrix":
        text = "\n".join(",".join(str(int(v)) for v in row) for row in g.adjacency) + "\n"
    else:
        text = "src,dst\n" + "".join(f"{i},{j}\n" for i, j in g.edges())
    _emit(text, args.output)
    return 0


def cmd_normalize(args):
    table = load_ohlcv(args.input)
    cols = [c.strip() for c in args.columns.split(",")]
    out = io.StringIO()
    normalized = {c: rolling_normalize(table.column(c), args.window)[0] for c in cols}
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["date"] + cols)
    dates = table.timestamps[args.window - 1 :]
    for i, day in enumerate(dates):
        writer.writerow([day.isoformat()] + [repr(float(normalized[c][i])) for c in cols])
    _emit(out.getvalue(), args.output)

    if args.dump_windows:
        feats = np.column_stack([normalized[c] for c in cols])
        raw = table.column(args.target)[args.window - 1 :]
        target_dir = Path(args.dump_windows)
        target_dir.mkdir(parents=True, exist_ok=True)
        for name, part in zip(("train", "val", "test"), split(len(raw), SplitSpec())):
            samples = make_windows(feats, raw, args.m, args.horizon, part)
            write_windows_csv(samples, target_dir / f"windows_{name}.csv")
    return 0


def _train_one(run: RunConfig):
    config = run.model_config()
    table = load_ohlcv(run.input)
    data = prepare(
        table, config.m, config.q, run.window, run.features, run.target,
        SplitSpec(*run.split), config.directed, with_graph=config.geometric,
    )
    out = Path(run.output_dir)
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    ckpt, log_path = out / "checkpoint.json", out / "training_log.csv"
    try:
        params, history = train(data.train, data.val, config)
        metadata = run_metadata(run, config)
        metadata.update(instrument=table.instrument_id, best_epoch=history.best_epoch,
                        stopped_early=history.stopped_early)
        save_checkpoint(ckpt, params, config, metadata)
        history.write_csv(log_path)
    except BaseException:
        for p in (ckpt, log_path):
            p.unlink(missing_ok=True)
        if created:
            shutil.rmtree(out, ignore_errors=True)
        raise
    return str(ckpt), history.rows[-1]


def cmd_train(args):
    run = _load_run_config(args)
    if not args.manifest:
        if not run.input:
            raise InputError("no input CSV given (--input, --manifest or config 'input')")
        ckpt, (epoch, tr, va) = _train_one(run)
        print(f"{ckpt}: stopped at epoch {epoch}, train {tr:.6g}, val {va:.6g}")
        return 0
    runs = []
    base = Path(run.output_dir)
    for index, path in enumerate(_manifest_inputs(args.manifest)):
        data = {**run.__dict__, "input": path, "seed": (run.seed or 0) + index,
                "output_dir": str(base / Path(path).stem)}
        runs.append(RunConfig.from_dict(data))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_train_one, runs))
    else:
        results = [_train_one(r) for r in runs]
    for ckpt, (epoch, tr, va) in results:
        print(f"{ckpt}: stopped at epoch {epoch}, train {tr:.6g}, val {va:.6g}")
    return 0


def _evaluate_one(checkpoint, input_path, partition, dataset, algorithm):
    params, config, meta = load_checkpoint(checkpoint)
    data_meta = meta.get("data", {})
    table = load_ohlcv(input_path)
    features = data_meta.get("features", ["close", "open", "high", "low", "volume"])
    if len(features) != config.n_features:
        raise InputError("checkpoint feature list does not match its configuration")
    data = prepare(
        table, config.m, config.q, data_meta.get("window", 30), features,
        data_meta.get("target", "close"), SplitSpec(*data_meta.get("split", [0.6, 0.2, 0.2])),
        config.directed, with_graph=config.geometric,
    )
    report = evaluate_model(params, config, data.partition(partition))
    name = algorithm or f"{'TG' if config.geometric else 'BL'}({config.time_cell.upper()})"
    return report.csv_row(dataset or table.instrument_id, name, config.q)


def cmd_evaluate(args):
    if args.manifest:
        pairs = []
        for line in _manifest_inputs(args.manifest):
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise InputError(f"manifest line {line!r}: expected 'checkpoint,input'")
            pairs.append(parts)
    else:
        if not args.checkpoint or not args.input:
            raise InputError("evaluate needs --checkpoint and --input (or --manifest)")
        pairs = [(args.checkpoint, args.input)]
    rows = [_evaluate_one(c, i, args.partition, args.dataset, args.algorithm) for c, i in pairs]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    writer.writerows(rows)
    _emit(out.getvalue(), args.output)
    return 0


def _report_row(result, metric, horizon, label):
    return [
        result.test, metric, "" if horizon is None else horizon, label,
        repr(result.statistic), repr(result.critical), result.decision, "; ".join(result.warnings),
    ]


def cmd_compare(args):
    matrix = sc.read_metrics_matrix(args.matrix, args.metric, args.horizon)
    tests = [t.strip() for t in args.tests.split(",") if t.strip()]
    for t in tests:
        if t not in TEST_NAMES:
            raise InputError(f"unknown test {t!r}; choose from {sorted(TEST_NAMES)}")
    if args.pairs:
        pairs = [tuple(p.split(":", 1)) for p in args.pairs]
        if any(len(p) != 2 for p in pairs):
            raise InputError("pairs must look like BASELINE:VARIANT")
    else:
        names = matrix.algorithms
        pairs = [(names[i], names[i + 1]) for i in range(0, len(names) - 1, 2)]
    funcs = {"t": sc.paired_t, "wilcoxon": sc.wilcoxon, "sign": sc.sign_test}

    rows, summary = [], []
    for bl, tg in pairs:
        base_col, var_col = matrix.column(bl), matrix.column(tg)
        cells = []
        for t in tests:
            try:
                result = funcs[t](base_col, var_col, args.alpha)
                cells.append(result.cell())
            except sc.DegenerateError as exc:
                result = sc.TestResult(TEST_NAMES[t], float("nan"), float("nan"), "degenerate",
                                       args.alpha, [str(exc)])
                cells.append("D(-)")
            rows.append(_report_row(result, matrix.metric, matrix.horizon, f"{bl}:{tg}"))
        summary.append(f"{bl}:{tg}".ljust(24) + " ".join(c.rjust(9) for c in cells))

    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    writer.writerows(rows)
    _emit(out.getvalue(), args.output)
    header = "pair".ljust(24) + " ".join(TEST_NAMES[t].rjust(9) for t in tests)
    text = "\n".join([header] + summary) + "\n"
    if args.summary:
        Path(args.summary).write_text(text)
    elif args.output not in (None, "-"):
        sys.stdout.write(text)
    return 0


def cmd_rank(args):
    matrix = sc.read_metrics_matrix(args.matrix, args.metric, args.horizon)
    ranks = sc.rank_matrix(matrix)
    fried = sc.friedman(ranks, args.alpha)
    nem = sc.nemenyi(ranks.average, ranks.N, args.q_alpha, args.alpha, matrix.algorithms)

    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "average_ranks.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["algorithm", "average_rank"])
        for name, r in zip(matrix.algorithms, ranks.average):
            writer.writerow([name, f"{r:.4f}"])
    with (out_dir / "friedman.csv").open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        writer.writerow(_report_row(fried, matrix.metric, matrix.horizon, f"K={ranks.K},N={ranks.N}"))
    (out_dir / "nemenyi.txt").write_text(nem.text_matrix())
    print(f"Friedman chi2 = {fried.statistic:.4f} (critical {fried.critical:.4f}) -> {fried.cell()}")
    print(nem.text_matrix(), end="")
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vistat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("vg", help="visibility graph of a series column")
    p.add_argument("input")
    p.add_argument("--column", default="close")
    p.add_argument("--window", type=int, default=None, help="use only the last N observations")
    p.add_argument("--directed", action="store_true", help="left-to-right arcs only")
    p.add_argument("--format", choices=("edges", "matrix"), default="edges")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_vg)

    p = sub.add_parser("normalize", help="rolling-window standardization of OHLCV columns")
    p.add_argument("input")
    p.add_argument("--window", type=int, default=30)
    p.add_argument("--columns", default="close,open,high,low,volume")
    p.add_argument("--target", default="close")
    p.add_argument("-m", type=int, default=16, help="window length for --dump-windows")
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--dump-windows", metavar="DIR", default=None)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("train", help="train a baseline or Time-Geometric model")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--input")
    p.add_argument("--manifest", help="file listing one input CSV per line")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--model", choices=("baseline", "tg"))
    p.add_argument("--cell", choices=("rnn", "lstm"))
    p.add_argument("--horizon", type=int)
    p.add_argument("-m", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--preset")
    p.add_argument("--features", help="comma-separated feature columns")
    p.add_argument("--directed", action="store_true")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on one partition")
    p.add_argument("--checkpoint")
    p.add_argument("--input")
    p.add_argument("--manifest", help="lines of 'checkpoint,input'")
    p.add_argument("--partition", choices=("train", "val", "test"), default="test")
    p.add_argument("--dataset")
    p.add_argument("--algorithm")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="pairwise tests on a metrics matrix")
    p.add_argument("matrix")
    p.add_argument("--tests", default="t,wilcoxon,sign")
    p.add_argument("--pairs", nargs="*", metavar="BL:TG")
    p.add_argument("--metric", default="")
    p.add_argument("--horizon", type=int)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--summary", help="write the plain-text table here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("rank", help="average ranks, Friedman test and Nemenyi matrix")
    p.add_argument("matrix")
    p.add_argument("--metric", default="")
    p.add_argument("--horizon", type=int)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--q-alpha", type=float, default=None, help="override the built-in q_alpha")
    p.add_argument("--output-dir", default=".")
    p.set_defaults(func=cmd_rank)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except VistatError as exc:
        print(f"vistat {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"vistat {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to exit code 4
        log.exception("internal error")
        print(f"vistat {args.command}: internal error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
