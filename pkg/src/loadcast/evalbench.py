"""RMSE benchmark harness: every (target, model, scheme) cell becomes one report row."""

import csv
import hashlib
import io
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from loadcast import __version__
from loadcast.errors import DataError, LoadcastError
from loadcast.estimators import (
    ArimaLiteForecaster,
    MLPForecaster,
    PersistenceForecaster,
    RecurrentForecaster,
)
from loadcast.meterdata import (
    SCHEMES,
    SplitSpec,
    WindowSet,
    block_daily_mean,
    chronological_split,
    common_period,
    make_windows,
    minmax_scale,
)
from loadcast.training import TrainConfig

logger = logging.getLogger(__name__)

MODELS = ("arima", "ann", "dnn", "rnn", "lstm", "persistence")
MODEL_LABELS = {
    "arima": "ARIMA",
    "ann": "ANN",
    "dnn": "DNN",
    "rnn": "RNN",
    "lstm": "LSTM",
    "persistence": "Persistence",
}
FORMATS = ("csv", "json", "markdown")
EXTENSIONS = {"csv": "csv", "json": "json", "markdown": "md"}
CSV_FIELDS = ("target", "model", "scheme", "rmse", "samples", "config_digest")


def rmse(pred, actual):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if pred.shape != actual.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {actual.size} actuals")
    if pred.size == 0:
        raise ValueError("rmse of empty input")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


@dataclass
class Target:
    """A forecasting target: one series, or several pooled ones for a whole block."""

    target_id: str
    kind: str
    series: list


def targets_from_block(block, specs=("block-mean",), coverage=0.8):
    """Resolve ``house:<id>``, ``block`` and ``block-mean`` target specs against a block."""
    targets = []
    period = None
    for spec in specs:
        if spec.startswith("house:"):
            hid = spec.split(":", 1)[1]
            if hid not in block.houses:
                raise DataError(f"house {hid!r} is not in block {block.block_id}")
            targets.append(Target(hid, "house", [block.houses[hid]]))
            continue
        if spec not in ("block", "block-mean"):
            raise ValueError(f"unknown target {spec!r}; use house:<id>, block or block-mean")
        period = period or common_period(block, coverage)
        if spec == "block":
            parts = [h.slice_dates(*period) for h in block.houses.values()]
            targets.append(Target(f"block:{block.block_id}", "block", [p for p in parts if p is not None]))
        else:
            targets.append(Target(f"block-mean:{block.block_id}", "block-mean", [block_daily_mean(block, period)]))
    return targets


@dataclass
class BenchConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    hidden_size: int = 100
    mlp_width: int = 64
    ar_p: int = 7
    ar_d: int = 1
    split: float = 0.8
    scale: bool = False
    jobs: int = 1

    def to_dict(self):
        return asdict(self)


@dataclass
class EvalRow:
    target: str
    model: str
    scheme: str
    rmse: float
    samples: int
    config_digest: str


@dataclass
class EvalFailure:
    target: str
    model: str
    scheme: str
    error: str


@dataclass
class EvalReport:
    rows: list
    failures: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def keys(self):
        return [(r.target, r.model, r.scheme) for r in self.rows]

    def get(self, target, model, scheme):
        for r in self.rows:
            if (r.target, r.model, r.scheme) == (target, model, scheme):
                return r
        raise KeyError((target, model, scheme))


def cell_seed(base, target, model, scheme):
    return (int(base) * 1_000_003 + zlib.crc32(f"{target}|{model}|{scheme}".encode())) % 2**63


def make_forecaster(model, cfg, seed, horizon):
    t = cfg.train
    common = dict(epochs=t.epochs, batch_size=t.batch_size, learning_rate=t.learning_rate,
                  grad_clip=t.grad_clip, random_state=seed)
    if model in ("rnn", "lstm"):
        return RecurrentForecaster(cell=model, hidden_size=cfg.hidden_size, **common)
    if model in ("ann", "dnn"):
        return MLPForecaster(kind=model, width=cfg.mlp_width, **common)
    if model == "arima":
        return ArimaLiteForecaster(p=cfg.ar_p, d=cfg.ar_d, horizon=horizon)
    if model == "persistence":
        return PersistenceForecaster(horizon=horizon)
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def _digest(payload):
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def evaluate_cell(target, model, scheme, cfg):
    """Fit ``model`` on the training side of every series in ``target`` and score the test side."""
    input_len, horizon = SCHEMES[scheme]
    spec = SplitSpec(cfg.split)
    scale = None
    if cfg.scale:
        train_vals = np.concatenate([s.values[: spec.boundary(len(s))] for s in target.series])
        _, scale = minmax_scale(train_vals)

    train_sets, test_sets, segments, histories, skipped = [], [], [], [], []
    for s in target.series:
        try:
            tr, te = chronological_split(s, spec)
            tr_w, te_w = make_windows(tr, scheme), make_windows(te, scheme)
        except DataError as exc:
            skipped.append(str(exc))
            continue
        train_sets.append(tr_w)
        test_sets.append(te_w)
        segments.append(tr.values)
        # the full record up to each test forecast origin
        histories.extend(s.values[: len(tr) + off + input_len] for off in te_w.offsets)
    if not train_sets:
        raise DataError(f"no series of {target.target_id} is long enough: {skipped[0]}")
    train_ws, test_ws = WindowSet.concat(train_sets), WindowSet.concat(test_sets)
    X_train, Y_train, X_test = train_ws.inputs, train_ws.targets, test_ws.inputs
    if scale:
        X_train, Y_train, X_test = scale.apply(X_train), scale.apply(Y_train), scale.apply(X_test)
        segments = [scale.apply(v) for v in segments]
        histories = [scale.apply(v) for v in histories]

    seed = cell_seed(cfg.train.seed, target.target_id, model, scheme)
    est = make_forecaster(model, cfg, seed, horizon)
    if getattr(est, "requires_history", False):
        est.fit(segments)
        pred = est.predict(histories)
    else:
        est.fit(X_train, Y_train)
        pred = est.predict(X_test)
    if scale:
        pred = scale.invert(pred)
    actual = test_ws.targets

    digest = _digest({
        "model": model,
        "scheme": scheme,
        "target": target.target_id,
        "params": est.get_params(),
        "bench": {k: v for k, v in cfg.to_dict().items() if k != "jobs"},  # scheduling only
        "seed": seed,
        "series": [(s.house_id, s.start_date.isoformat(), len(s)) for s in target.series],
        "skipped": skipped,
        "version": __version__,
    })
    return EvalRow(target.target_id, model, scheme, rmse(pred, actual), int(actual.size // horizon), digest)


def _run_cell(args):
    target, model, scheme, cfg = args
    try:
        return evaluate_cell(target, model, scheme, cfg)
    except (LoadcastError, ValueError, ArithmeticError) as exc:
        logger.warning("cell %s/%s/%s failed: %s", target.target_id, model, scheme, exc)
        return EvalFailure(target.target_id, model, scheme, f"{type(exc).__name__}: {exc}")


def dataset_fingerprint(targets):
    h = hashlib.sha256()
    for t in targets:
        for s in t.series:
            h.update(f"{t.target_id}|{s.house_id}|{s.start_date.isoformat()}|".encode())
            h.update(np.ascontiguousarray(s.values, dtype="<f8").tobytes())
    return h.hexdigest()


def run_benchmark(targets, models=MODELS, schemes=("day", "trimester", "thirteen_month"),
                  cfg=None, timestamp=True):
    """Evaluate the full target x model x scheme matrix.

    A failing cell becomes an EvalFailure instead of aborting the run.
    """
    cfg = cfg or BenchConfig()
    if not targets or not models or not schemes:
        raise ValueError("benchmark needs at least one target, model and scheme")
    for m in models:
        if m not in MODELS:
            raise ValueError(f"unknown model {m!r}; expected one of {MODELS}")
    for s in schemes:
        if s not in SCHEMES:
            raise ValueError(f"unknown scheme {s!r}; expected one of {sorted(SCHEMES)}")
    cells = [(t, m, s, cfg) for t in targets for s in schemes for m in models]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_cell, cells))
    else:
        results = [_run_cell(c) for c in cells]
    rows = [r for r in results if isinstance(r, EvalRow)]
    failures = [r for r in results if isinstance(r, EvalFailure)]
    if not rows:
        raise LoadcastError(f"all {len(failures)} benchmark cells failed; first: {failures[0].error}")
    metadata = {
        "toolkit": "loadcast",
        "version": __version__,
        "dataset_fingerprint": dataset_fingerprint(targets),
        "config": cfg.to_dict(),
        "targets": {t.target_id: t.kind for t in targets},
        "notes": {
            "rmse": "pooled over all test-window errors",
            "block": "one model per block trained on pooled per-house windows",
        },
    }
    if timestamp:
        metadata["timestamp"] = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    return EvalReport(rows, failures, metadata)


def _fmt(x, decimals):
    return f"{x:.{decimals}f}"


def render_markdown(report, decimals=2):
    models = [m for m in MODELS if any(r.model == m for r in report.rows + report.failures)]
    schemes = list(dict.fromkeys(r.scheme for r in report.rows + report.failures))
    failed = {(f.target, f.model, f.scheme) for f in report.failures}
    out = []
    for scheme in schemes:
        input_len, horizon = SCHEMES[scheme]
        cells = {(r.target, r.model): r.rmse for r in report.rows if r.scheme == scheme}
        targets = list(dict.fromkeys(
            r.target for r in report.rows + report.failures if r.scheme == scheme))
        out.append(f"### {scheme} (input {input_len} d, horizon {horizon} d), RMSE")
        out.append("")
        out.append("| Target | " + " | ".join(MODEL_LABELS[m] for m in models) + " |")
        out.append("|---|" + "---|" * len(models))
        for t in targets:
            vals = []
            for m in models:
                if (t, m) in cells:
                    vals.append(_fmt(cells[(t, m)], decimals))
                else:
                    vals.append("fail" if (t, m, scheme) in failed else "")
            out.append(f"| {t} | " + " | ".join(vals) + " |")
        out.append("")
    if report.failures:
        out.append("Failed cells:")
        out.append("")
        out.extend(f"- {f.target} / {f.model} / {f.scheme}: {f.error}" for f in report.failures)
        out.append("")
    return "\n".join(out)


def render_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in report.rows:
        w.writerow([r.target, r.model, r.scheme, repr(r.rmse), r.samples, r.config_digest])
    return buf.getvalue()


def render_json(report):
    doc = {
        "metadata": report.metadata,
        "rows": [asdict(r) for r in report.rows],
        "failures": [asdict(f) for f in report.failures],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_filename(report, fmt):
    stamp = report.metadata.get("timestamp")
    stem = f"report_{stamp}" if stamp else "report"
    return f"{stem}.{EXTENSIONS[fmt]}"


def emit_report(report, fmt="markdown", path=None, out_dir=".", decimals=2):
    """Write ``report`` and return the path written."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if not report.rows and not report.failures:
        raise ValueError("empty report")
    text = {
        "csv": lambda: render_csv(report),
        "json": lambda: render_json(report),
        "markdown": lambda: render_markdown(report, decimals),
    }[fmt]()
    path = Path(path) if path else Path(out_dir) / report_filename(report, fmt)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def read_report_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            EvalRow(r["target"], r["model"], r["scheme"], float(r["rmse"]), int(r["samples"]), r["config_digest"])
            for r in csv.DictReader(fh)
        ]


def read_report_json(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return EvalReport(
        [EvalRow(**r) for r in doc["rows"]],
        [EvalFailure(**f) for f in doc["failures"]],
        doc["metadata"],
    )
