"""Smart-meter ingestion, per-house series assembly, block aggregation and windowing."""

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from loadcast.errors import DataError

logger = logging.getLogger(__name__)

# (input_len, horizon) in days
SCHEMES = {
    "day": (1, 1),
    "month": (30, 30),
    "trimester": (90, 90),
    "thirteen_month": (30, 390),
}
BALANCED_SCHEMES = ("month", "trimester")
BALANCE_DAYS = 600
MAX_INTERPOLATED_GAP = 3

# column names of the London smart-meter daily_dataset.csv
DEFAULT_COLUMNS = {"id": "LCLid", "date": "day", "value": "energy_sum"}


@dataclass(frozen=True)
class Record:
    house_id: str
    date: date
    value: float


@dataclass
class IngestReport:
    rows_read: int = 0
    rows_dropped: int = 0
    drop_reasons: dict = field(default_factory=dict)
    duplicates_merged: int = 0
    houses: dict = field(default_factory=dict)

    def drop(self, reason):
        self.rows_dropped += 1
        self.drop_reasons[reason] = self.drop_reasons.get(reason, 0) + 1

    @property
    def days_interpolated(self):
        return sum(h["interpolated_days"] for h in self.houses.values())

    @property
    def segments_kept(self):
        return len(self.houses)

    def to_dict(self):
        return {
            "rows_read": self.rows_read,
            "rows_dropped": self.rows_dropped,
            "drop_reasons": dict(sorted(self.drop_reasons.items())),
            "duplicates_merged": self.duplicates_merged,
            "days_interpolated": self.days_interpolated,
            "segments_kept": self.segments_kept,
            "houses": {k: self.houses[k] for k in sorted(self.houses)},
        }


def ingest_csv(path, col_id=None, col_date=None, col_value=None, report=None):
    """Read ``(house_id, date, value)`` records from a CSV file with a header row.

    Rows with an unparseable date or a missing, non-finite or negative value
    are dropped and counted in the returned IngestReport.
    """
    col_id = col_id or DEFAULT_COLUMNS["id"]
    col_date = col_date or DEFAULT_COLUMNS["date"]
    col_value = col_value or DEFAULT_COLUMNS["value"]
    report = report if report is not None else IngestReport()
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in (col_id, col_date, col_value) if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        for row in reader:
            report.rows_read += 1
            hid = (row[col_id] or "").strip()
            if not hid:
                report.drop("missing_id")
                continue
            try:
                day = date.fromisoformat((row[col_date] or "").strip()[:10])
            except ValueError:
                report.drop("bad_date")
                continue
            try:
                value = float(row[col_value])
            except (TypeError, ValueError):
                report.drop("bad_value")
                continue
            if not math.isfinite(value):
                report.drop("non_finite_value")
                continue
            if value < 0:
                report.drop("negative_value")
                continue
            records.append(Record(hid, day, value))
    if not records:
        raise DataError(f"{path}: no valid rows ({report.rows_read} read)")
    return records, report


@dataclass
class HouseSeries:
    house_id: str
    start_date: date
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise DataError(f"{self.house_id}: values must be finite and non-negative")

    def __len__(self):
        return self.values.size

    @property
    def end_date(self):
        return self.start_date + timedelta(days=len(self) - 1)

    def dates(self):
        return [self.start_date + timedelta(days=i) for i in range(len(self))]

    def slice_dates(self, start, end):
        """Sub-series covering ``[start, end]`` intersected with this series."""
        lo = max((start - self.start_date).days, 0)
        hi = min((end - self.start_date).days + 1, len(self))
        if hi <= lo:
            return None
        return HouseSeries(self.house_id, self.start_date + timedelta(days=lo), self.values[lo:hi])


@dataclass
class BlockSeries:
    block_id: str
    houses: dict

    def __post_init__(self):
        if not self.houses:
            raise DataError(f"block {self.block_id} has no houses")

    def __len__(self):
        return len(self.houses)


def _repair(house_id, days, values, max_gap):
    """Fill short gaps by linear interpolation, then keep the longest contiguous segment."""
    segments = [[values[0]]]
    starts = [days[0]]
    filled = [0]
    for k in range(1, len(days)):
        gap = (days[k] - days[k - 1]).days - 1
        if gap > max_gap:
            segments.append([values[k]])
            starts.append(days[k])
            filled.append(0)
            continue
        lo, hi = values[k - 1], values[k]
        segments[-1].extend(lo + (j / (gap + 1)) * (hi - lo) for j in range(1, gap + 1))
        segments[-1].append(hi)
        filled[-1] += gap
    best = max(range(len(segments)), key=lambda i: len(segments[i]))  # first longest wins ties
    kept = len(segments[best])
    return (
        HouseSeries(house_id, starts[best], segments[best]),
        {
            "interpolated_days": filled[best],
            "segments": len(segments),
            "kept_start": starts[best].isoformat(),
            "kept_days": kept,
            "discarded_days": sum(map(len, segments)) - kept,
        },
    )


def assemble_series(records, block_id="block", max_gap=MAX_INTERPOLATED_GAP, report=None):
    """Group records by house into contiguous daily series.

    Exact duplicate rows are merged; conflicting duplicates raise DataError.
    """
    if not records:
        raise DataError("no records to assemble")
    by_house = defaultdict(dict)
    conflicts = []
    merged = 0
    for r in records:
        seen = by_house[r.house_id]
        if r.date in seen:
            if seen[r.date] != r.value:
                conflicts.append(f"{r.house_id}@{r.date.isoformat()}")
            else:
                merged += 1
            continue
        seen[r.date] = r.value
    if conflicts:
        shown = ", ".join(sorted(set(conflicts))[:10])
        raise DataError(f"conflicting duplicate readings: {shown}")
    houses = {}
    for hid in sorted(by_house):
        days = sorted(by_house[hid])
        values = [by_house[hid][d] for d in days]
        series, log = _repair(hid, days, values, max_gap)
        houses[hid] = series
        if report is not None:
            report.houses[hid] = log
        if log["segments"] > 1 or log["interpolated_days"]:
            logger.info("%s: repaired %s", hid, log)
    if report is not None:
        report.duplicates_merged += merged
    return BlockSeries(block_id, houses)


def common_period(block, coverage=0.8):
    """Longest date range fully covered by at least ``ceil(coverage * houses)`` houses.

    Returns an inclusive ``(start, end)`` pair; ties go to the earliest range.
    """
    if not 0 < coverage <= 1:
        raise ValueError("coverage must be in (0, 1]")
    spans = [(h.start_date, h.end_date) for h in block.houses.values()]
    need = math.ceil(coverage * len(spans) - 1e-12)
    best = None
    for s in sorted({s for s, _ in spans}):
        ends = sorted((e for s2, e in spans if s2 <= s), reverse=True)
        if len(ends) < need:
            continue
        e = ends[need - 1]
        if e < s:
            continue
        if best is None or (e - s).days > (best[1] - best[0]).days:
            best = (s, e)
    if best is None:
        raise DataError(
            f"no period is covered by {need} of {len(spans)} houses; try a lower coverage"
        )
    return best


def block_daily_mean(block, date_range, house_id="block-mean"):
    """Per-day mean over the houses that have a reading on that day."""
    start, end = date_range
    n = (end - start).days + 1
    if n < 1:
        raise DataError("empty date range")
    total = np.zeros(n)
    count = np.zeros(n, dtype=int)
    for h in block.houses.values():
        part = h.slice_dates(start, end)
        if part is None:
            continue
        lo = (part.start_date - start).days
        total[lo:lo + len(part)] += part.values
        count[lo:lo + len(part)] += 1
    if np.any(count == 0):
        first = start + timedelta(days=int(np.argmax(count == 0)))
        raise DataError(f"no house has data on {first.isoformat()}")
    return HouseSeries(house_id, start, total / count)


@dataclass
class SplitSpec:
    fraction: float = 0.8

    def __post_init__(self):
        if not 0 < self.fraction < 1:
            raise ValueError(f"train fraction must be in (0, 1), got {self.fraction}")

    def boundary(self, n):
        return int(math.floor(self.fraction * n))


def chronological_split(series, spec=None):
    spec = spec or SplitSpec()
    k = spec.boundary(len(series))
    if k < 1 or k >= len(series):
        raise DataError(f"{series.house_id}: {len(series)} days is too short to split")
    train = HouseSeries(series.house_id, series.start_date, series.values[:k])
    test = HouseSeries(series.house_id, series.start_date + timedelta(days=k), series.values[k:])
    return train, test


@dataclass
class WindowSet:
    """Supervised samples ``inputs[k] -> targets[k]``.

    ``offsets[k]`` is the index of the first input value within the series
    named by ``source_ids[k]``, counted from ``start_dates[k]``.
    """

    scheme: str
    input_len: int
    horizon: int
    inputs: np.ndarray
    targets: np.ndarray
    source_ids: list
    offsets: np.ndarray
    start_dates: list

    def __len__(self):
        return self.inputs.shape[0]

    @classmethod
    def concat(cls, sets):
        sets = [s for s in sets if s is not None]
        if not sets:
            raise DataError("nothing to concatenate")
        first = sets[0]
        for s in sets[1:]:
            if (s.scheme, s.input_len, s.horizon) != (first.scheme, first.input_len, first.horizon):
                raise DataError("cannot pool windows from different schemes")
        return cls(
            first.scheme,
            first.input_len,
            first.horizon,
            np.vstack([s.inputs for s in sets]),
            np.vstack([s.targets for s in sets]),
            [i for s in sets for i in s.source_ids],
            np.concatenate([s.offsets for s in sets]),
            [d for s in sets for d in s.start_dates],
        )


def scheme_shape(scheme):
    try:
        return SCHEMES[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {sorted(SCHEMES)}") from None


def effective_length(n, scheme):
    return min(n, BALANCE_DAYS) if scheme in BALANCED_SCHEMES else n


def make_windows(series, scheme):
    """Stride-1 sliding windows; month/trimester use only the first 600 days."""
    input_len, horizon = scheme_shape(scheme)
    values = series.values[: effective_length(len(series), scheme)]
    n = values.size - input_len - horizon + 1
    if n < 1:
        raise DataError(
            f"{series.house_id}: {values.size} days is too short for the {scheme} scheme "
            f"({input_len} + {horizon} needed)"
        )
    span = np.lib.stride_tricks.sliding_window_view(values, input_len + horizon)
    return WindowSet(
        scheme,
        input_len,
        horizon,
        span[:, :input_len].copy(),
        span[:, input_len:].copy(),
        [series.house_id] * n,
        np.arange(n),
        [series.start_date] * n,
    )


def split_windows(series, scheme, spec=None):
    """Split chronologically, then window each side on its own so no test day reaches training."""
    train, test = chronological_split(series, spec)
    return make_windows(train, scheme), make_windows(test, scheme)


@dataclass
class ScaleRecord:
    minimum: float
    maximum: float
    degenerate: bool = False

    def apply(self, v):
        v = np.asarray(v, dtype=np.float64)
        if self.degenerate:
            return v.copy()
        return (v - self.minimum) / (self.maximum - self.minimum)

    def invert(self, v):
        v = np.asarray(v, dtype=np.float64)
        if self.degenerate:
            return v.copy()
        return v * (self.maximum - self.minimum) + self.minimum


def minmax_scale(values):
    """Map observed ``[min, max]`` onto ``[0, 1]``; a constant series is returned unchanged and flagged."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = float(v.min()), float(v.max())
    record = ScaleRecord(lo, hi, degenerate=hi == lo)
    return record.apply(v), record


def invert_scale(record, values):
    return record.invert(values)


class MinMaxScaler(TransformerMixin, BaseEstimator):
    """Scalar min-max scaling fit on every value of ``X`` jointly.

    Unlike sklearn's per-column scaler, one (min, max) pair covers all
    columns, so input windows and targets share a single scale.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        _, self.record_ = minmax_scale(X.ravel())
        return self

    def transform(self, X):
        check_is_fitted(self, "record_")
        return self.record_.apply(X)

    def inverse_transform(self, X):
        check_is_fitted(self, "record_")
        return self.record_.invert(X)


def block_to_dict(block, extra=None):
    out = {
        "format": "loadcast-series",
        "version": 1,
        "block_id": block.block_id,
        "houses": {
            hid: {"start_date": h.start_date.isoformat(), "values": [float(x) for x in h.values]}
            for hid, h in sorted(block.houses.items())
        },
    }
    if extra:
        out.update(extra)
    return out


def save_store(block, path, extra=None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(block_to_dict(block, extra), fh, indent=1)
        fh.write("\n")


def load_store(path):
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a series store ({exc})") from None
    if doc.get("format") != "loadcast-series":
        raise DataError(f"{path}: not a loadcast series store")
    houses = {
        hid: HouseSeries(hid, date.fromisoformat(h["start_date"]), h["values"])
        for hid, h in doc["houses"].items()
    }
    return BlockSeries(doc["block_id"], houses)
