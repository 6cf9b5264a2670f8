import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadcast.errors import DataError, LoadcastError
from loadcast.evalbench import (
    BenchConfig,
    EvalRow,
    Target,
    emit_report,
    read_report_csv,
    read_report_json,
    render_markdown,
    rmse,
    run_benchmark,
    targets_from_block,
)
from loadcast.meterdata import BlockSeries, HouseSeries
from loadcast.synthetic import synthetic_house
from loadcast.training import TrainConfig, mse_loss

D0 = date(2012, 1, 1)
finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_rmse_examples():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(math.sqrt(12.5), abs=1e-12)
    assert round(rmse([0.0, 0.0], [3.0, 4.0]), 6) == 3.535534
    assert rmse([0.3], [0.4]) == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        rmse([], [])


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=30), st.floats(-100, 100))
def test_rmse_symmetry_and_translation(pairs, c):
    p = np.array([a for a, _ in pairs])
    a = np.array([b for _, b in pairs])
    assert rmse(p, a) == rmse(a, p)
    assert rmse(p + c, a + c) == pytest.approx(rmse(p, a), abs=1e-9, rel=1e-12)


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=30))
def test_rmse_consistent_with_mse(pairs):
    p = np.array([a for a, _ in pairs])
    a = np.array([b for _, b in pairs])
    sse = float(np.sum((p - a) ** 2))
    assert rmse(p, a) ** 2 * len(p) == pytest.approx(sse, rel=1e-9, abs=1e-300)
    assert rmse(p, a) ** 2 == pytest.approx(mse_loss(p, a), rel=1e-9, abs=1e-300)


def tiny_cfg(**kw):
    return BenchConfig(train=TrainConfig(epochs=1, batch_size=64), hidden_size=2, mlp_width=3, ar_p=2, **kw)


def test_single_cell_report():
    t = Target("const", "house", [HouseSeries("const", D0, np.full(50, 3.0))])
    report = run_benchmark([t], ["persistence"], ["day"], tiny_cfg(), timestamp=False)
    assert len(report.rows) == 1 and not report.failures
    assert report.rows[0].rmse == 0.0
    assert report.rows[0].samples == 9
    md = render_markdown(report)
    assert md.count("### ") == 1
    assert md.count("| const |") == 1


@pytest.fixture(scope="module")
def matrix_report():
    targets = [Target(f"T{k}", "house", [synthetic_house(2100, seed=k, house_id=f"T{k}")]) for k in range(2)]
    models = ["arima", "ann", "dnn", "rnn", "persistence"]
    return run_benchmark(targets, models, ["day", "trimester", "thirteen_month"], tiny_cfg(), timestamp=False)


def test_matrix_cardinality(matrix_report):
    assert len(matrix_report.rows) + len(matrix_report.failures) == 30
    assert not matrix_report.failures
    assert len(set(matrix_report.keys())) == 30
    assert all(r.rmse >= 0 and r.samples >= 1 for r in matrix_report.rows)


def test_markdown_pivot_shape(matrix_report):
    md = render_markdown(matrix_report)
    tables = md.split("### ")[1:]
    assert len(tables) == 3
    for tbl in tables:
        body = [ln for ln in tbl.splitlines() if ln.startswith("| T") and not ln.startswith("| Target")]
        assert len(body) == 2
        assert all(ln.count("|") == 7 for ln in body)
        assert all(len(cell.strip().split(".")[1]) == 2 for ln in body for cell in ln.split("|")[2:-1])


def test_csv_json_round_trip(matrix_report, tmp_path):
    p_csv = emit_report(matrix_report, "csv", out_dir=tmp_path)
    p_json = emit_report(matrix_report, "json", out_dir=tmp_path)
    assert p_csv.name == "report.csv" and p_json.name == "report.json"
    rows = read_report_csv(p_csv)
    assert rows == matrix_report.rows
    assert read_report_json(p_json).rows == rows


def test_reruns_are_bit_identical(matrix_report):
    targets = [Target(f"T{k}", "house", [synthetic_house(2100, seed=k, house_id=f"T{k}")]) for k in range(2)]
    again = run_benchmark(targets, ["rnn", "dnn"], ["day"], tiny_cfg(), timestamp=False)
    for r in again.rows:
        assert r == matrix_report.get(r.target, r.model, r.scheme)


def test_failures_are_recorded_not_raised():
    short = Target("short", "house", [HouseSeries("short", D0, np.ones(60))])
    report = run_benchmark([short], ["persistence"], ["day", "trimester"], tiny_cfg(), timestamp=False)
    assert [r.scheme for r in report.rows] == ["day"]
    assert [(f.scheme, f.error.split(":")[0]) for f in report.failures] == [("trimester", "DataError")]
    assert "fail" in render_markdown(report)
    with pytest.raises(LoadcastError, match="all 1 benchmark cells failed"):
        run_benchmark([short], ["persistence"], ["trimester"], tiny_cfg())


def test_benchmark_rejects_empty_matrix():
    t = Target("x", "house", [HouseSeries("x", D0, np.ones(10))])
    with pytest.raises(ValueError):
        run_benchmark([], ["persistence"], ["day"])
    with pytest.raises(ValueError):
        run_benchmark([t], ["svm"], ["day"])


def test_scaled_metrics_stay_in_original_units():
    t = Target("c", "house", [HouseSeries("c", D0, 10.0 + np.arange(50) % 2)])
    raw = run_benchmark([t], ["persistence"], ["day"], tiny_cfg(), timestamp=False).rows[0]
    scaled = run_benchmark([t], ["persistence"], ["day"], tiny_cfg(scale=True), timestamp=False).rows[0]
    assert raw.rmse == pytest.approx(1.0) and scaled.rmse == pytest.approx(1.0)


def test_targets_from_block():
    houses = {f"H{k}": HouseSeries(f"H{k}", D0, np.full(40, float(k))) for k in range(3)}
    block = BlockSeries("B1", houses)
    ts = targets_from_block(block, ["house:H1", "block", "block-mean"])
    assert [t.kind for t in ts] == ["house", "block", "block-mean"]
    assert len(ts[1].series) == 3
    np.testing.assert_array_equal(ts[2].series[0].values, 1.0)
    with pytest.raises(DataError):
        targets_from_block(block, ["house:H9"])


def test_emit_report_unwritable(tmp_path):
    report = run_benchmark([Target("x", "house", [HouseSeries("x", D0, np.ones(20))])], ["persistence"], ["day"],
                           tiny_cfg(), timestamp=False)
    with pytest.raises(OSError):
        emit_report(report, "csv", path=tmp_path / "missing" / "r.csv")
    assert isinstance(report.rows[0], EvalRow)
