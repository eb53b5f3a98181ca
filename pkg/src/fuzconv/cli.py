"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 data error, 4 numeric
divergence. ``FUZCONV_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, engine
from .checkpoint import atomic_write_bytes
from .data_io import (
    load_dataset,
    read_forecast,
    read_manifest,
    write_forecast,
    write_tensor_dump,
)
from .errors import CheckpointMismatch, DataError, FuzconvError, ValidationError
from .evaluator import ForecastReport, SeriesForecast, average_ranks, mae, nemenyi_cd, rmse
from .fuzzify import Fuzzifier
from .model import ForecastNet, ModelConfig
from .nn import grad_check
from .pac import stage_macs
from .pipeline import baselines, forecast_levels, holdout
from .series import difference
from .trainer import Forecaster, TrainConfig, train

log = logging.getLogger("fuzconv")

MODEL_FLAGS = {
    "window": "window_size",
    "baa_k": "baa_filter_length",
    "baa_stride": "baa_stride",
    "depth": "depth",
    "v_len": "v_len",
    "h_len": "h_len",
    "growth": "growth",
    "head_hidden": "head_hidden",
}
TRAIN_FLAGS = {"epochs": "epochs", "lr": "lr", "batch_size": "batch_size", "patience": "patience"}


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    horizon: int | None = None
    workers: int = 1

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "train": self.train.to_dict(), "horizon": self.horizon}


def _depth(text: str):
    return text if text == "auto" else int(text)


def build_config(args) -> RunConfig:
    """Defaults, then the ``--config`` JSON file, then command-line flags."""
    model, train_d = {}, {}
    horizon = None
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ValidationError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {args.config}: {exc}") from None
        model.update(doc.get("model", {}))
        train_d.update(doc.get("train", {}))
        horizon = doc.get("horizon")
        unknown = set(doc) - {"model", "train", "horizon", "command", "version"}
        if unknown:
            raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    for flag, key in MODEL_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            model[key] = v
    if getattr(args, "separate_filters", False):
        model["baa_shared_filter"] = False
    for flag, key in TRAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            train_d[key] = v
    if getattr(args, "seed", None) is not None:
        train_d["seed"] = args.seed
    if getattr(args, "horizon", None) is not None:
        horizon = args.horizon
    train_d["horizon"] = horizon
    if horizon is not None and horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    workers = getattr(args, "workers", 1) or 1
    if workers < 1:
        raise ValidationError("--workers must be >= 1")
    return RunConfig(ModelConfig.from_dict(model), TrainConfig.from_dict(train_d), horizon, workers)


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name) or "series"


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out: Path, cfg: RunConfig, command: str) -> None:
    doc = {"command": command, "version": __version__, **cfg.to_dict()}
    atomic_write_bytes(out / "config.json", json.dumps(doc, indent=2, sort_keys=True).encode())


def _datasets(args, cfg: RunConfig, require_horizon: bool = True):
    if not args.manifest:
        raise ValidationError("--manifest is required")
    for m in read_manifest(args.manifest):
        yield load_dataset(m, cfg.horizon, require_horizon)


# -- subcommands ---------------------------------------------------------------


def cmd_preprocess(args) -> int:
    cfg = build_config(args)
    out = _out_dir(args)
    _echo_config(out, cfg, "preprocess")
    for ds in _datasets(args, cfg, require_horizon=False):
        ddir = out / _safe(ds.manifest.name)
        for s in ds.series:
            known = holdout(s, ds.horizon)[0] if ds.horizon else s
            try:
                diff = difference(known)
                fz = Fuzzifier.fit(diff, cfg.model.window_size)
                tensors = fz.transform_series(diff)
            except FuzconvError as exc:
                raise type(exc)(f"dataset {ds.manifest.name}, series {s.name}: {exc}") from None
            write_tensor_dump(tensors, ddir / f"{_safe(s.name)}.windows.csv")
            atomic_write_bytes(
                ddir / f"{_safe(s.name)}.fuzzifier.json",
                json.dumps(fz.to_dict(), indent=2, sort_keys=True).encode(),
            )
            log.info("%s/%s: %d windows of %dx%d", ds.manifest.name, s.name, *tensors.shape)
    return 0


def _train_one(task):
    series, horizon, model_cfg, train_cfg = task
    known, _ = holdout(series, horizon)
    result = train(difference(known), model_cfg, train_cfg, val_size=horizon)
    return series.name, result


def _trace_csv(trace) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("epoch", "train_loss", "val_loss", "lr"))
    for row in trace:
        w.writerow((row["epoch"], repr(row["train_loss"]), repr(row["val_loss"]), repr(row["lr"])))
    return buf.getvalue().encode()


def cmd_train(args) -> int:
    cfg = build_config(args)
    out = _out_dir(args)
    _echo_config(out, cfg, "train")
    summary = {}
    for ds in _datasets(args, cfg):
        tcfg = replace(cfg.train, horizon=ds.horizon)
        tasks = [(s, ds.horizon, cfg.model, tcfg) for s in ds.series]
        if cfg.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_train_one, tasks))
        else:
            results = [_train_one(t) for t in tasks]
        ddir = out / _safe(ds.manifest.name)
        ds_summary = {}
        for name, result in results:
            stem = _safe(name)
            result.forecaster.save(
                ddir / f"{stem}.fzcv",
                epoch=result.best_epoch,
                best_val_loss=result.best_val_loss,
                meta={"dataset": ds.manifest.name, "series": name, "horizon": ds.horizon},
            )
            atomic_write_bytes(ddir / f"{stem}.log.csv", _trace_csv(result.trace))
            ds_summary[name] = {
                "best_epoch": result.best_epoch,
                "best_val_loss": result.best_val_loss,
                "final_val_loss": result.trace[-1]["val_loss"],
                "final_lr": result.trace[-1]["lr"],
            }
            log.info("%s/%s: best val %.6g at epoch %d", ds.manifest.name, name, result.best_val_loss, result.best_epoch)
        summary[ds.manifest.name] = ds_summary
    atomic_write_bytes(out / "train_summary.json", json.dumps(summary, indent=2, sort_keys=True).encode())
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_forecast(args) -> int:
    ckdir = Path(args.checkpoints)
    if not getattr(args, "config", None) and (ckdir / "config.json").exists():
        args.config = str(ckdir / "config.json")
    cfg = build_config(args)
    out = _out_dir(args)
    _echo_config(out, cfg, "forecast")
    expected = cfg.model.fingerprint()
    overall = {}
    for ds in _datasets(args, cfg):
        report = ForecastReport(fingerprint=expected, dataset=ds.manifest.name)
        for s in ds.series:
            path = ckdir / _safe(ds.manifest.name) / f"{_safe(s.name)}.fzcv"
            if not path.exists():
                raise DataError(f"no checkpoint for {ds.manifest.name}/{s.name} at {path}")
            forecaster = Forecaster.load(path)
            try:
                forecaster.to_checkpoint().require_fingerprint(expected)
            except CheckpointMismatch as exc:
                raise CheckpointMismatch(f"{path}: {exc}") from None
            if args.beyond_end:
                known, actual = s, None
            else:
                known, actual = holdout(s, ds.horizon)
            levels, clamps = forecast_levels(forecaster, known, ds.horizon)
            report.series.append(
                SeriesForecast(s.name, levels, actual, clamps, baselines(known, ds.horizon, ds.period))
            )
        path = out / f"{_safe(ds.manifest.name)}.forecast.csv"
        write_forecast(report, path)
        overall[ds.manifest.name] = {"mae": report.mae, "rmse": report.rmse, "clamp_count": report.clamp_count,
                                     "baselines": report.baseline_metrics()}
    print(json.dumps(overall, indent=2, sort_keys=True))
    return 0


def _read_ranks(path: Path):
    """``dataset,model,score`` rows (lower is better) -> scores matrix."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"dataset", "model", "score"}:
        raise DataError(f"{path}: expected header dataset,model,score")
    datasets = sorted({r["dataset"] for r in rows})
    models = sorted({r["model"] for r in rows})
    scores = np.full((len(datasets), len(models)), np.nan)
    for r in rows:
        scores[datasets.index(r["dataset"]), models.index(r["model"])] = float(r["score"])
    if np.isnan(scores).any():
        raise DataError(f"{path}: every model needs a score on every dataset")
    return datasets, models, scores


def cmd_evaluate(args) -> int:
    if not args.forecast and not args.ranks:
        raise ValidationError("evaluate needs --forecast and/or --ranks")
    doc = {}
    if args.forecast:
        per_series = {}
        preds, acts = [], []
        for name, (p, a) in read_forecast(args.forecast).items():
            if a is None:
                per_series[name] = None
                continue
            per_series[name] = {"mae": mae(p, a), "rmse": rmse(p, a)}
            preds.append(p)
            acts.append(a)
        doc["series"] = per_series
        if preds:
            doc["mae"] = mae(np.concatenate(preds), np.concatenate(acts))
            doc["rmse"] = rmse(np.concatenate(preds), np.concatenate(acts))
    if args.ranks:
        datasets, models, scores = _read_ranks(Path(args.ranks))
        ranks = average_ranks(scores)
        doc["ranks"] = dict(zip(models, ranks.tolist()))
        doc["critical_distance"] = nemenyi_cd(len(models), len(datasets), args.q_alpha)
        doc["n_datasets"] = len(datasets)
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        atomic_write_bytes(_out_dir(args) / "evaluation.json", text.encode())
    print(text)
    return 0


def _min_side_length(model_cfg: ModelConfig) -> int:
    for sl in range(1, 256):
        try:
            model_cfg.check_input(sl)
            return sl
        except ValidationError:
            continue
    raise ValidationError("no flank length up to 255 fits this model configuration")


def gradcheck_model(model_cfg: ModelConfig, seed: int = 0, batch: int = 3, freeze: bool = False, tolerance: float = 1e-4):
    sl = _min_side_length(model_cfg) + 1
    rng = np.random.default_rng(seed)
    net = ForecastNet(model_cfg, sl, seed=seed)
    if freeze:
        net.freeze()
    x = rng.normal(size=(batch, model_cfg.window_size, 2 * sl + 1))
    w = rng.normal(size=batch)

    def loss():
        return (net(x) * engine.Tensor(w)).sum()

    return grad_check(net, loss, tolerance)


def cmd_gradcheck(args) -> int:
    cfg = build_config(args)
    report = gradcheck_model(cfg.model, cfg.train.seed, freeze=args.freeze, tolerance=args.tolerance)
    doc = {"tolerance": report.tolerance, "passed": report.passed, "worst": report.worst,
           "deviations": report.deviations}
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        atomic_write_bytes(_out_dir(args) / "gradcheck.json", text.encode())
    print(text)
    return 0 if report.passed else 4


def flops_report(v: int, h: int, rows: int, cols: int, channels_in: int = 1, channels_out: int = 1) -> dict:
    """Dense ``v x h`` kernel vs its ``v x 1`` + ``1 x h`` decomposition on one
    ``rows x cols`` map: formula counts next to instrumented forward counts."""
    if rows < v or cols < h:
        raise ValidationError(f"kernel {v}x{h} does not fit a {rows}x{cols} map")
    counts = stage_macs(channels_in, channels_out, rows, cols, v, h)
    x = engine.Tensor(np.zeros((1, channels_in, rows, cols)))
    with engine.count_macs() as c_dense:
        engine.conv2d_valid(x, engine.Tensor(np.zeros((channels_out, channels_in, v, h))))
    with engine.count_macs() as c_dec:
        mid = engine.conv2d_valid(x, engine.Tensor(np.zeros((channels_out, channels_in, v, 1))))
        engine.conv2d_valid(mid, engine.Tensor(np.zeros((channels_out, channels_out, 1, h))))
    return {
        "kernel": [v, h],
        "input": [channels_in, rows, cols],
        "per_output_macs": {"dense": v * h, "decomposed": v + h},
        "ratio": f"{v * h}:{v + h}",
        "formula": counts,
        "instrumented": {"dense": c_dense["conv2d"], "decomposed": c_dec["conv2d"]},
        "match": counts["dense"] == c_dense["conv2d"] and counts["decomposed"] == c_dec["conv2d"],
    }


def cmd_flops(args) -> int:
    cfg = build_config(args)
    v = args.v_len if args.v_len is not None else cfg.model.v_len
    h = args.h_len if args.h_len is not None else cfg.model.h_len
    rows = args.rows or max(cfg.model.window_size, v)
    cols = args.cols or max(2 * h + 1, h)
    doc = flops_report(v, h, rows, cols, args.channels_in, args.channels_out)
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        atomic_write_bytes(_out_dir(args) / "flops.json", text.encode())
    print(text)
    return 0 if doc["match"] else 4


# -- argument parsing --------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", help="JSON config with 'model' and 'train' sections")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    if data:
        p.add_argument("--manifest", help="dataset manifest JSON, or a .csv/.tsf file")
        p.add_argument("--workers", type=int, default=1, help="series trained in parallel")
        p.add_argument("--horizon", type=int)
    m = p.add_argument_group("model overrides")
    m.add_argument("--window", type=int, help="sliding window size S")
    m.add_argument("--baa-k", type=int, help="dilated filter length")
    m.add_argument("--baa-stride", type=int, help="dilation stride")
    m.add_argument("--separate-filters", action="store_true", help="learn one dilated filter per flank")
    m.add_argument("--depth", type=_depth, help="stage count, or 'auto'")
    m.add_argument("--v-len", type=int, help="vertical filter length")
    m.add_argument("--h-len", type=int, help="horizontal filter length")
    m.add_argument("--growth", type=float, help="channel growth rate per stage")
    m.add_argument("--head-hidden", type=int, help="hidden width of the two-layer head")
    t = p.add_argument_group("training overrides")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--patience", type=int)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuzconv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="dump fuzzified windows as CSV")
    _add_common(p)
    p.set_defaults(func=cmd_preprocess, out="out")

    p = sub.add_parser("train", help="train one model per series")
    _add_common(p)
    p.set_defaults(func=cmd_train, out="out")

    p = sub.add_parser("forecast", help="roll out trained models and score them")
    _add_common(p)
    p.add_argument("--checkpoints", required=True, help="output directory of a train run")
    p.add_argument("--beyond-end", action="store_true", help="forecast past the last observation (no scoring)")
    p.set_defaults(func=cmd_forecast, out="out")

    p = sub.add_parser("evaluate", help="recompute metrics, rank models, Nemenyi CD")
    p.add_argument("--forecast", help="forecast CSV written by the forecast command")
    p.add_argument("--ranks", help="CSV dataset,model,score (lower is better)")
    p.add_argument("--q-alpha", type=float, help="critical value; defaults to the 0.05 table")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of the configured model")
    _add_common(p, data=False)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--freeze", action="store_true", help="freeze all parameters (empty report)")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("flops", help="multiply-accumulates of dense vs decomposed kernels")
    _add_common(p, data=False)
    p.add_argument("--rows", type=int)
    p.add_argument("--cols", type=int)
    p.add_argument("--channels-in", type=int, default=1)
    p.add_argument("--channels-out", type=int, default=1)
    p.set_defaults(func=cmd_flops)
    return parser


def _setup_logging() -> None:
    level = os.environ.get("FUZCONV_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv=None) -> int:
    _setup_logging()
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FuzconvError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
