"""loadcast command line: ingest, aggregate, train, predict, benchmark, gradcheck, synth."""

import argparse
import csv
import json
import logging
import sys
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from loadcast import __version__
from loadcast.baselines import init_mlp, mlp_gradients
from loadcast.checkpoint import MlpModel, load_checkpoint, save_checkpoint
from loadcast.errors import DataError, LoadcastError
from loadcast.evalbench import (
    FORMATS,
    MODELS,
    BenchConfig,
    emit_report,
    rmse,
    run_benchmark,
    targets_from_block,
)
from loadcast.gradcheck import KINDS, run_gradcheck
from loadcast.meterdata import (
    DEFAULT_COLUMNS,
    SCHEMES,
    BlockSeries,
    IngestReport,
    ScaleRecord,
    SplitSpec,
    assemble_series,
    block_daily_mean,
    chronological_split,
    common_period,
    ingest_csv,
    load_store,
    make_windows,
    minmax_scale,
    save_store,
)
from loadcast.seqmodels import forward_batch, init_network
from loadcast.synthetic import synthetic_daily
from loadcast.training import TrainConfig, fit_params, train

GRADCHECK_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _clip(value):
    if value.lower() in ("none", "off", "0"):
        return None
    v = float(value)
    if v <= 0:
        raise argparse.ArgumentTypeError("grad clip must be positive or 'none'")
    return v


def _add_train_flags(p):
    p.add_argument("--scheme", choices=sorted(SCHEMES), default="day")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--grad-clip", type=_clip, default=1.0, help="global-norm clip, or 'none'")
    p.add_argument("--hidden", type=int, default=100, help="recurrent units")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", action="store_true", help="min-max scale using training data")
    p.add_argument("--split", type=float, default=0.8, help="chronological train fraction")


def build_parser():
    parser = _Parser(prog="loadcast", description=__doc__)
    parser.add_argument("--version", action="version", version=f"loadcast {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("ingest", help="CSV -> validated series store + ingestion report")
    p.add_argument("csv")
    p.add_argument("--out", required=True, help="series store (JSON)")
    p.add_argument("--report", help="ingestion report path (default: stdout)")
    p.add_argument("--block-id", help="defaults to the CSV file stem")
    p.add_argument("--col-id", default=DEFAULT_COLUMNS["id"])
    p.add_argument("--col-date", default=DEFAULT_COLUMNS["date"])
    p.add_argument("--col-value", default=DEFAULT_COLUMNS["value"])
    p.add_argument("--max-gap", type=int, default=3, help="longest gap (days) to interpolate")

    p = sub.add_parser("aggregate", help="block store -> per-day mean series store")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--coverage", type=float, default=0.8)

    p = sub.add_parser("train", help="series + scheme + model -> checkpoint + loss CSV")
    p.add_argument("--store", required=True)
    p.add_argument("--house", help="house id (default: the only house in the store)")
    p.add_argument("--model", choices=["rnn", "lstm", "ann", "dnn"], default="lstm")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--loss-csv", help="per-epoch loss CSV path")
    p.add_argument("--width", type=int, default=64, help="MLP hidden width")
    _add_train_flags(p)

    p = sub.add_parser("predict", help="checkpoint + input window -> forecast on stdout")
    p.add_argument("--checkpoint", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--input", help="comma-separated daily values, oldest first")
    group.add_argument("--input-file", help="file with one value per line (or a one-column CSV)")

    p = sub.add_parser("benchmark", help="run the model x scheme x target matrix")
    p.add_argument("--store", required=True)
    p.add_argument("--target", action="append",
                   help="house:<id>, block or block-mean (repeatable; default block-mean)")
    p.add_argument("--model", action="append", choices=MODELS, help="repeatable; default all")
    p.add_argument("--scheme", action="append", choices=sorted(SCHEMES),
                   help="repeatable; default day, trimester, thirteen_month")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--grad-clip", type=_clip, default=1.0)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--ar-p", type=int, default=7)
    p.add_argument("--ar-d", type=int, default=1, choices=[0, 1])
    p.add_argument("--coverage", type=float, default=0.8)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", action="store_true")
    p.add_argument("--format", choices=FORMATS, default="markdown")
    p.add_argument("--out", help="report path (default: <out-dir>/report_<timestamp>.<ext>)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-timestamp", action="store_true")

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--cell", choices=KINDS, default="lstm")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth", help="write a synthetic daily-consumption CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--days", type=int, default=1000)
    p.add_argument("--houses", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", default="2012-01-01")
    return parser


def _pick_house(block, house):
    if house is None:
        if len(block.houses) != 1:
            raise DataError(f"store has {len(block.houses)} houses; pass --house")
        return next(iter(block.houses.values()))
    if house not in block.houses:
        raise DataError(f"house {house!r} not in store")
    return block.houses[house]


def cmd_ingest(args):
    report = IngestReport()
    records, _ = ingest_csv(args.csv, args.col_id, args.col_date, args.col_value, report)
    block = assemble_series(records, args.block_id or Path(args.csv).stem, args.max_gap, report)
    save_store(block, args.out)
    text = json.dumps(report.to_dict(), indent=1, sort_keys=True)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_aggregate(args):
    block = load_store(args.store)
    period = common_period(block, args.coverage)
    mean = block_daily_mean(block, period)
    extra = {"aggregate": {"coverage": args.coverage, "start": period[0].isoformat(),
                           "end": period[1].isoformat(), "houses": len(block)}}
    save_store(BlockSeries(block.block_id, {mean.house_id: mean}), args.out, extra)


def cmd_train(args):
    series = _pick_house(load_store(args.store), args.house)
    cfg = TrainConfig(args.epochs, args.batch_size, args.lr, grad_clip=args.grad_clip, seed=args.seed)
    train_s, test_s = chronological_split(series, SplitSpec(args.split))
    tr = make_windows(train_s, args.scheme)
    try:
        te = make_windows(test_s, args.scheme)
    except DataError:
        te = None
    scale = minmax_scale(train_s.values)[1] if args.scale else ScaleRecord(0.0, 1.0, degenerate=True)
    X, Y = scale.apply(tr.inputs), scale.apply(tr.targets)

    meta = {
        "scheme": args.scheme,
        "input_len": tr.input_len,
        "horizon": tr.horizon,
        "series": series.house_id,
        "seed": args.seed,
        "train_config": cfg.to_dict(),
        "scale": {"min": scale.minimum, "max": scale.maximum, "degenerate": scale.degenerate},
    }
    if args.model in ("rnn", "lstm"):
        net = init_network(args.model, args.hidden, tr.horizon, seed=args.seed)
        model, history = train(net, X, Y, cfg)
        predict = lambda A: forward_batch(model, A)[0]  # noqa: E731
    else:
        params = init_mlp(args.model, tr.input_len, tr.horizon, args.width, args.seed)
        params, history = fit_params(params, mlp_gradients, X, Y, cfg)
        model = MlpModel(args.model, params, {"width": args.width})
        predict = model.predict
    save_checkpoint(model, args.out, meta)
    if args.loss_csv:
        history.to_csv(args.loss_csv)
    summary = {"checkpoint": str(args.out), "epochs": len(history), "final_loss": history.losses[-1]}
    if te is not None:
        summary["test_rmse"] = rmse(scale.invert(predict(scale.apply(te.inputs))), te.targets)
        summary["test_samples"] = len(te)
    print(json.dumps(summary, sort_keys=True))


def _read_input(args):
    if args.input is not None:
        parts = [p for p in args.input.replace(" ", "").split(",") if p]
    else:
        with open(args.input_file, newline="", encoding="utf-8") as fh:
            parts = [row[-1] for row in csv.reader(fh) if row]
        try:
            float(parts[0])
        except (ValueError, IndexError):
            parts = parts[1:]  # header row
    try:
        values = np.array([float(p) for p in parts])
    except ValueError as exc:
        raise DataError(f"bad input value: {exc}") from None
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise DataError("input window must be non-empty and finite")
    return values


def cmd_predict(args):
    model = load_checkpoint(args.checkpoint)
    values = _read_input(args)
    meta = model.meta
    want = meta.get("input_len")
    if want is not None and values.size != want:
        raise DataError(f"checkpoint expects {want} input values, got {values.size}")
    sc = meta.get("scale", {})
    scale = ScaleRecord(sc.get("min", 0.0), sc.get("max", 1.0), sc.get("degenerate", True))
    x = scale.apply(values)[None, :]
    if isinstance(model, MlpModel):
        out = model.predict(x)[0]
    else:
        out = forward_batch(model, x)[0][0]
    for v in scale.invert(out):
        print(repr(float(v)))


def cmd_benchmark(args):
    block = load_store(args.store)
    targets = targets_from_block(block, args.target or ["block-mean"], args.coverage)
    cfg = BenchConfig(
        train=TrainConfig(args.epochs, args.batch_size, args.lr, grad_clip=args.grad_clip, seed=args.seed),
        hidden_size=args.hidden,
        mlp_width=args.width,
        ar_p=args.ar_p,
        ar_d=args.ar_d,
        split=args.split,
        scale=args.scale,
        jobs=args.jobs,
    )
    schemes = args.scheme or ["day", "trimester", "thirteen_month"]
    report = run_benchmark(targets, args.model or list(MODELS), schemes, cfg,
                           timestamp=not args.no_timestamp)
    path = emit_report(report, args.format, args.out, args.out_dir)
    print(json.dumps({"report": str(path), "rows": len(report.rows), "failures": len(report.failures)}))


def cmd_gradcheck(args):
    trials = run_gradcheck(args.cell, args.trials, args.seed)
    worst = max(t.max_rel_error for t in trials)
    print(f"max_rel_error={worst:.3e} cell={args.cell} trials={len(trials)} tolerance={GRADCHECK_TOLERANCE:g}")
    return 0 if worst < GRADCHECK_TOLERANCE else 1


def cmd_synth(args):
    start = date.fromisoformat(args.start)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([DEFAULT_COLUMNS["id"], DEFAULT_COLUMNS["date"], DEFAULT_COLUMNS["value"]])
        for h in range(args.houses):
            values = synthetic_daily(args.days, args.seed + h)
            for i, v in enumerate(values):
                w.writerow([f"SYN{h:04d}", (start + timedelta(days=i)).isoformat(), repr(float(v))])


COMMANDS = {
    "ingest": cmd_ingest,
    "aggregate": cmd_aggregate,
    "train": cmd_train,
    "predict": cmd_predict,
    "benchmark": cmd_benchmark,
    "gradcheck": cmd_gradcheck,
    "synth": cmd_synth,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            raise UsageError("no subcommand given")
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args) or 0
    except (LoadcastError, ValueError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {args.command}: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
