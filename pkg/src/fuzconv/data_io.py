"""Dataset ingestion (CSV, Monash TSF), manifests and forecast output.

CSV series files use the header ``series,timestamp,value`` with one row per
observation; a single-column file of values (optionally headed) is also
accepted and gets unit timestamps. Forecasts are written as
``series,step,predicted,actual`` plus a JSON sidecar with the metrics.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import atomic_write_bytes
from .errors import DataError, NonMonotoneTimestamps, ParseError, ValidationError
from .evaluator import SEASONALITY, ForecastReport
from .series import RawSeries, unit_timestamps

log = logging.getLogger(__name__)

CSV_HEADER = ("series", "timestamp", "value")
FORECAST_HEADER = ("series", "step", "predicted", "actual")
SIDECAR_SCHEMA_VERSION = 1


def _float(text: str, line: int, path, what: str) -> float:
    text = text.strip()
    if not text:
        raise ParseError(f"empty {what} field", line, path)
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"cannot parse {what} {text!r}", line, path) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite {what} {text!r}", line, path)
    return value


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _build_series(name, ts, vs, path) -> RawSeries:
    ts = np.asarray(ts, dtype=np.float64)
    if np.any(np.diff(ts) <= 0):
        bad = int(np.argmax(np.diff(ts) <= 0)) + 1
        raise NonMonotoneTimestamps(
            f"{path}: series {name!r} timestamps not strictly increasing at row {bad + 1} of the series"
        )
    return RawSeries(name, ts, np.asarray(vs, dtype=np.float64))


def load_csv(path: str | os.PathLike) -> list[RawSeries]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError("empty file", None, path)

    first_line, first = rows[0]
    if len(first) == 1:
        body = rows[1:] if not _is_number(first[0]) else rows
        name = path.stem if _is_number(first[0]) else (first[0].strip() or path.stem)
        values = []
        for line, r in body:
            if len(r) != 1:
                raise ParseError(f"expected 1 column, found {len(r)}", line, path)
            values.append(_float(r[0], line, path, "value"))
        return [RawSeries(name, unit_timestamps(len(values)), values)]

    header = tuple(c.strip().lower() for c in first)
    if header != CSV_HEADER:
        raise ParseError(f"expected header {','.join(CSV_HEADER)}, got {','.join(first)}", first_line, path)
    grouped: dict[str, tuple[list, list]] = {}
    for line, r in rows[1:]:
        if len(r) != 3:
            raise ParseError(f"expected 3 columns, found {len(r)}", line, path)
        name = r[0].strip()
        if not name:
            raise ParseError("empty series name", line, path)
        ts, vs = grouped.setdefault(name, ([], []))
        ts.append(_float(r[1], line, path, "timestamp"))
        vs.append(_float(r[2], line, path, "value"))
    return [_build_series(name, ts, vs, path) for name, (ts, vs) in grouped.items()]


def write_csv(series: list[RawSeries], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in series:
        for t, v in zip(s.timestamps, s.values):
            w.writerow([s.name, repr(float(t)), repr(float(v))])
    atomic_write_bytes(path, buf.getvalue().encode())


@dataclass
class TsfData:
    series: list[RawSeries]
    attributes: list[tuple[str, str]] = field(default_factory=list)
    frequency: str | None = None
    horizon: int | None = None
    missing: bool | None = None
    equal_length: bool | None = None
    relation: str | None = None
    start_timestamps: dict[str, str] = field(default_factory=dict)


def _parse_bool(text: str, line: int, path) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ParseError(f"expected true/false, got {text!r}", line, path)


def load_tsf(path: str | os.PathLike) -> TsfData:
    """Read a Monash forecasting-archive ``.tsf`` file.

    Series get unit timestamps; a ``start_timestamp`` attribute, when
    present, is kept verbatim in ``start_timestamps``. Missing values
    (``?``) are rejected.
    """
    path = Path(path)
    out = TsfData(series=[])
    in_data = False
    with open(path, encoding="utf-8", errors="replace") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data:
                if not line.startswith("@"):
                    raise ParseError("data line before @data marker", line_no, path)
                key, _, rest = line.partition(" ")
                key = key.lower()
                rest = rest.strip()
                if key == "@data":
                    in_data = True
                elif key == "@attribute":
                    parts = rest.split()
                    if len(parts) != 2:
                        raise ParseError("@attribute needs a name and a type", line_no, path)
                    out.attributes.append((parts[0], parts[1]))
                elif key == "@frequency":
                    out.frequency = rest
                elif key == "@horizon":
                    try:
                        out.horizon = int(rest)
                    except ValueError:
                        raise ParseError(f"bad horizon {rest!r}", line_no, path) from None
                elif key == "@missing":
                    out.missing = _parse_bool(rest, line_no, path)
                elif key == "@equallength":
                    out.equal_length = _parse_bool(rest, line_no, path)
                elif key == "@relation":
                    out.relation = rest
                else:
                    raise ParseError(f"unknown header tag {key}", line_no, path)
                continue

            fields_ = line.split(":")
            if len(fields_) != len(out.attributes) + 1:
                raise ParseError(
                    f"expected {len(out.attributes)} attribute(s) plus values, got {len(fields_)} fields",
                    line_no,
                    path,
                )
            attrs = dict(zip((a for a, _ in out.attributes), fields_[:-1]))
            name = attrs.get("series_name") or f"T{len(out.series) + 1}"
            raw_vals = fields_[-1].split(",")
            values = []
            for v in raw_vals:
                if v.strip() == "?":
                    raise ParseError(f"missing value in series {name!r}; imputation is not supported", line_no, path)
                values.append(_float(v, line_no, path, "value"))
            if len(values) < 2:
                raise ParseError(f"series {name!r} has fewer than two values", line_no, path)
            if "start_timestamp" in attrs:
                out.start_timestamps[name] = attrs["start_timestamp"]
            out.series.append(RawSeries(name, unit_timestamps(len(values)), values))
    if not in_data:
        raise ParseError("no @data marker", None, path)
    if not out.series:
        raise ParseError("no series after @data", None, path)
    return out


def write_tsf(data: TsfData, path: str | os.PathLike) -> None:
    lines = []
    if data.relation:
        lines.append(f"@relation {data.relation}")
    attributes = data.attributes or [("series_name", "string")]
    for name, typ in attributes:
        lines.append(f"@attribute {name} {typ}")
    if data.frequency:
        lines.append(f"@frequency {data.frequency}")
    if data.horizon is not None:
        lines.append(f"@horizon {data.horizon}")
    lines.append(f"@missing {'true' if data.missing else 'false'}")
    equal = len({len(s) for s in data.series}) == 1
    lines.append(f"@equallength {'true' if equal else 'false'}")
    lines.append("@data")
    for s in data.series:
        fields_ = []
        for name, _ in attributes:
            if name == "series_name":
                fields_.append(s.name)
            elif name == "start_timestamp":
                fields_.append(data.start_timestamps.get(s.name, ""))
            else:
                raise ValidationError(f"cannot write attribute {name!r}")
        fields_.append(",".join(repr(float(v)) for v in s.values))
        lines.append(":".join(fields_))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode())


@dataclass
class DatasetManifest:
    name: str
    path: Path
    format: str
    horizon: int | None = None
    frequency: str | None = None
    series_names: list[str] | None = None

    def __post_init__(self):
        self.path = Path(self.path)
        if self.format not in ("csv", "tsf"):
            raise ValidationError(f"dataset {self.name!r}: format must be csv or tsf, got {self.format!r}")
        if self.horizon is not None and self.horizon < 1:
            raise ValidationError(f"dataset {self.name!r}: horizon must be >= 1")

    @property
    def period(self) -> int | None:
        return SEASONALITY.get(self.frequency) if self.frequency else None


def read_manifest(path: str | os.PathLike) -> list[DatasetManifest]:
    """Load dataset manifests from JSON, or wrap a bare .csv/.tsf file.

    A JSON manifest is one dataset object or ``{"datasets": [...]}``, each
    with ``name``, ``path`` (relative to the manifest), ``format`` and
    optionally ``horizon``, ``frequency`` and ``series``.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".csv", ".tsf"):
        return [DatasetManifest(path.stem, path, suffix[1:])]
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"manifest {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, path) from None
    entries = doc.get("datasets", [doc]) if isinstance(doc, dict) else doc
    out = []
    for e in entries:
        try:
            dpath = Path(e["path"])
            fmt = e.get("format") or dpath.suffix.lstrip(".").lower()
            out.append(
                DatasetManifest(
                    name=e.get("name", dpath.stem),
                    path=dpath if dpath.is_absolute() else path.parent / dpath,
                    format=fmt,
                    horizon=e.get("horizon"),
                    frequency=e.get("frequency"),
                    series_names=e.get("series"),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{path}: malformed dataset entry {e!r} ({exc})") from None
    return out


@dataclass
class LoadedDataset:
    manifest: DatasetManifest
    series: list[RawSeries]
    horizon: int
    period: int | None


def resolve_horizon(cli: int | None, manifest: int | None, header: int | None, name: str = "") -> int:
    """CLI flag beats manifest beats file header."""
    for source, value in (("command line", cli), ("manifest", manifest), ("file header", header)):
        if value is not None:
            log.info("dataset %s: horizon %d from %s", name, value, source)
            if value < 1:
                raise ValidationError(f"horizon must be >= 1, got {value}")
            return int(value)
    raise ValidationError(f"dataset {name!r}: no forecast horizon given (use --horizon or the manifest)")


def load_dataset(m: DatasetManifest, horizon: int | None = None, require_horizon: bool = True) -> LoadedDataset:
    """Load and select the manifest's series. Without ``require_horizon`` a
    missing horizon resolves to 0."""
    header_h = None
    frequency = m.frequency
    if m.format == "csv":
        series = load_csv(m.path)
    else:
        tsf = load_tsf(m.path)
        series = tsf.series
        header_h = tsf.horizon
        frequency = frequency or tsf.frequency
    if m.series_names is not None:
        by_name = {s.name: s for s in series}
        missing = [n for n in m.series_names if n not in by_name]
        if missing:
            raise DataError(f"dataset {m.name!r}: series not found: {missing}")
        series = [by_name[n] for n in m.series_names]
    if require_horizon or any(v is not None for v in (horizon, m.horizon, header_h)):
        h = resolve_horizon(horizon, m.horizon, header_h, m.name)
    else:
        h = 0
    period = SEASONALITY.get(frequency) if frequency else None
    return LoadedDataset(m, series, h, period)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_forecast(report: ForecastReport, path: str | os.PathLike) -> Path:
    """Write the forecast CSV and its ``.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FORECAST_HEADER)
    for s in report.series:
        for step, p in enumerate(s.predicted, start=1):
            a = "" if s.actual is None else _fmt(s.actual[step - 1])
            w.writerow([s.series, step, _fmt(p), a])
    atomic_write_bytes(path, buf.getvalue().encode())
    sidecar = path.with_suffix(".json")
    doc = {"schema_version": SIDECAR_SCHEMA_VERSION, **report.summary()}
    atomic_write_bytes(sidecar, json.dumps(doc, indent=2, sort_keys=True).encode())
    return sidecar


def read_forecast(path: str | os.PathLike) -> dict[str, tuple[np.ndarray, np.ndarray | None]]:
    """Per-series (predicted, actual) arrays from a forecast CSV."""
    path = Path(path)
    out: dict[str, tuple[list, list]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != FORECAST_HEADER:
            raise ParseError(f"expected header {','.join(FORECAST_HEADER)}", 1, path)
        for line, r in enumerate(reader, start=2):
            if len(r) != 4:
                raise ParseError(f"expected 4 columns, found {len(r)}", line, path)
            preds, acts = out.setdefault(r[0], ([], []))
            preds.append(_float(r[2], line, path, "predicted"))
            acts.append(_float(r[3], line, path, "actual") if r[3].strip() else None)
    result = {}
    for name, (preds, acts) in out.items():
        actual = None if any(a is None for a in acts) else np.array(acts)
        result[name] = (np.array(preds), actual)
    return result


def write_tensor_dump(tensors: np.ndarray, path: str | os.PathLike) -> None:
    """Fuzzified windows ``(B, S, W)`` as ``window_id,row,col,value`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("window_id", "row", "col", "value"))
    B, S, W = tensors.shape
    for b in range(B):
        for r in range(S):
            for c in range(W):
                w.writerow((b, r, c, _fmt(tensors[b, r, c])))
    atomic_write_bytes(path, buf.getvalue().encode())


def read_tensor_dump(path: str | os.PathLike) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ("window_id", "row", "col", "value"):
            raise ParseError("expected header window_id,row,col,value", 1, path)
        rows = [(int(b), int(r), int(c), float(v)) for b, r, c, v in reader]
    if not rows:
        return np.empty((0, 0, 0))
    B = max(r[0] for r in rows) + 1
    S = max(r[1] for r in rows) + 1
    W = max(r[2] for r in rows) + 1
    out = np.full((B, S, W), np.nan)
    for b, r, c, v in rows:
        out[b, r, c] = v
    return out
