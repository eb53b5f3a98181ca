import json

import numpy as np
import pytest

from fuzconv.data_io import (
    DatasetManifest,
    TsfData,
    load_csv,
    load_dataset,
    load_tsf,
    read_forecast,
    read_manifest,
    read_tensor_dump,
    resolve_horizon,
    write_csv,
    write_forecast,
    write_tensor_dump,
    write_tsf,
)
from fuzconv.errors import DataError, NonMonotoneTimestamps, ParseError, ValidationError
from fuzconv.evaluator import ForecastReport, SeriesForecast, mae, rmse
from fuzconv.series import RawSeries


def test_two_row_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("series,timestamp,value\ns,1,5\ns,2,7\n")
    (s,) = load_csv(p)
    assert s.name == "s" and s.values.tolist() == [5, 7] and s.timestamps.tolist() == [1, 2]


def test_unsorted_timestamps(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("series,timestamp,value\ns,2,5\ns,1,7\n")
    with pytest.raises(NonMonotoneTimestamps):
        load_csv(p)


@pytest.mark.parametrize(
    "body, line",
    [
        ("series,timestamp,value\ns,1,\ns,2,3\n", 2),
        ("series,timestamp,value\ns,1,2\ns,2,abc\n", 3),
        ("series,timestamp,value\ns,1,2,9\n", 2),
        ("series,time,value\ns,1,2\n", 1),
        ("series,timestamp,value\ns,1,nan\ns,2,1\n", 2),
    ],
)
def test_csv_parse_errors_carry_line(tmp_path, body, line):
    p = tmp_path / "a.csv"
    p.write_text(body)
    with pytest.raises(ParseError) as info:
        load_csv(p)
    assert info.value.line == line


def test_single_column_csv(tmp_path):
    p = tmp_path / "vals.csv"
    p.write_text("demand\n1.5\n2.5\n4\n")
    (s,) = load_csv(p)
    assert s.name == "demand" and s.values.tolist() == [1.5, 2.5, 4] and s.timestamps.tolist() == [1, 2, 3]
    p.write_text("1\n2\n")
    assert load_csv(p)[0].name == "vals"


def test_csv_round_trip_10k(tmp_path):
    rng = np.random.default_rng(0)
    series = [
        RawSeries(f"s{i}", np.cumsum(rng.uniform(0.1, 2.0, 2500)), rng.normal(size=2500) * 10.0 ** rng.integers(-5, 5))
        for i in range(4)
    ]
    p = tmp_path / "big.csv"
    write_csv(series, p)
    back = load_csv(p)
    for a, b in zip(series, back):
        assert a.name == b.name
        assert a.values.tobytes() == b.values.tobytes()
        assert a.timestamps.tobytes() == b.timestamps.tobytes()


MINIMAL_TSF = """# comment
@relation demo
@attribute series_name string
@attribute start_timestamp date
@frequency monthly
@horizon 3
@missing false
@equallength true
@data
T1:2020-01-01 00-00-00:1,2,3,4,5
"""


def test_minimal_tsf(tmp_path):
    p = tmp_path / "d.tsf"
    p.write_text(MINIMAL_TSF)
    d = load_tsf(p)
    assert len(d.series) == 1 and len(d.series[0]) == 5
    assert d.horizon == 3 and d.frequency == "monthly"
    assert d.start_timestamps == {"T1": "2020-01-01 00-00-00"}


@pytest.mark.parametrize(
    "text",
    [
        MINIMAL_TSF.replace("@data\n", ""),
        MINIMAL_TSF.replace("1,2,3,4,5", "1,?,3"),
        MINIMAL_TSF.replace("@horizon 3", "@horizon x"),
        MINIMAL_TSF.replace("T1:2020", "2020"),
        MINIMAL_TSF.replace("@frequency", "@bogus"),
    ],
)
def test_tsf_errors(tmp_path, text):
    p = tmp_path / "d.tsf"
    p.write_text(text)
    with pytest.raises(ParseError):
        load_tsf(p)


def test_tsf_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    data = TsfData(
        series=[RawSeries.from_values(rng.normal(size=n), name=f"T{i}") for i, n in enumerate((7, 12, 3))],
        attributes=[("series_name", "string")],
        frequency="daily",
        horizon=4,
    )
    p = tmp_path / "w.tsf"
    write_tsf(data, p)
    back = load_tsf(p)
    assert back.horizon == 4 and back.frequency == "daily"
    for a, b in zip(data.series, back.series):
        assert a.name == b.name and a.values.tobytes() == b.values.tobytes()


def test_horizon_precedence():
    assert resolve_horizon(5, 7, 9) == 5
    assert resolve_horizon(None, 7, 9) == 7
    assert resolve_horizon(None, None, 9) == 9
    with pytest.raises(ValidationError):
        resolve_horizon(None, None, None)


def test_manifest_and_dataset(tmp_path):
    (tmp_path / "d.tsf").write_text(MINIMAL_TSF)
    m = tmp_path / "m.json"
    m.write_text(json.dumps({"datasets": [{"name": "demo", "path": "d.tsf", "horizon": 2}]}))
    (man,) = read_manifest(m)
    assert man.format == "tsf" and man.path == tmp_path / "d.tsf"
    ds = load_dataset(man)
    assert ds.horizon == 2 and ds.period == 12
    assert load_dataset(man, horizon=1).horizon == 1
    bad = DatasetManifest("demo", tmp_path / "d.tsf", "tsf", series_names=["nope"])
    with pytest.raises(DataError):
        load_dataset(bad)
    with pytest.raises(ValidationError):
        DatasetManifest("x", "x.bin", "bin")
    with pytest.raises(DataError):
        read_manifest(tmp_path / "missing.json")


def _report():
    a = SeriesForecast("a", np.array([1.0, 2.5]), np.array([1.5, 2.0]), 1, {"persistence": np.array([1.0, 1.0])})
    b = SeriesForecast("b", np.array([0.1]), None)
    return ForecastReport([a, b], "abc", "ds")


def test_forecast_csv_and_sidecar(tmp_path):
    p = tmp_path / "f.csv"
    sidecar = write_forecast(_report(), p)
    lines = p.read_text().splitlines()
    assert lines[0] == "series,step,predicted,actual"
    assert lines[3] == "b,1,0.1,"
    doc = json.loads(sidecar.read_text())
    assert doc["schema_version"] == 1 and doc["clamp_count"] == 1
    back = read_forecast(p)
    pred, act = back["a"]
    assert doc["mae"] == mae(pred, act) and doc["rmse"] == rmse(pred, act)
    assert back["b"][1] is None


def test_forecast_edge_cases(tmp_path):
    p = tmp_path / "e.csv"
    write_forecast(ForecastReport(), p)
    assert p.read_text() == "series,step,predicted,actual\n"
    write_forecast(ForecastReport([SeriesForecast("s", np.array([2.0]), np.array([1.0]))]), p)
    assert p.read_text().splitlines() == ["series,step,predicted,actual", "s,1,2.0,1.0"]


def test_tensor_dump_round_trip(tmp_path):
    x = np.random.default_rng(2).normal(size=(3, 4, 5))
    p = tmp_path / "t.csv"
    write_tensor_dump(x, p)
    assert p.read_text().splitlines()[0] == "window_id,row,col,value"
    assert np.array_equal(read_tensor_dump(p), x)
