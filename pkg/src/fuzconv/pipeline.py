"""End-to-end runs on one level series: hold out the horizon, train on the
rest, roll out and score on restored levels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SeriesTooShort
from .evaluator import SeriesForecast, persistence_baseline, seasonal_naive
from .model import ModelConfig
from .series import RawSeries, difference, restore
from .trainer import Forecaster, TrainConfig, TrainResult, rollout, train


@dataclass
class SeriesRun:
    result: TrainResult
    forecast: SeriesForecast


def holdout(series: RawSeries, horizon: int) -> tuple[RawSeries, np.ndarray]:
    """Known part and the final ``horizon`` actual levels."""
    if horizon >= len(series) - 2:
        raise SeriesTooShort(f"horizon {horizon} leaves too little history in {len(series)} points")
    return series.head(len(series) - horizon), series.values[len(series) - horizon :].copy()


def forecast_levels(forecaster: Forecaster, known: RawSeries, horizon: int) -> tuple[np.ndarray, int]:
    """Roll out ``horizon`` steps past the end of ``known``; return restored
    levels and the clamp count."""
    diff = difference(known)
    ro = rollout(forecaster, diff, horizon)
    return restore(diff, ro.predictions), ro.clamp_count


def baselines(known: RawSeries, horizon: int, period: int | None) -> dict[str, np.ndarray]:
    out = {"persistence": persistence_baseline(known.values, horizon)}
    if period and period > 1:
        out["seasonal_naive"] = seasonal_naive(known.values, horizon, period)
    return out


def run_series(
    series: RawSeries,
    horizon: int,
    model_cfg: ModelConfig | None = None,
    train_cfg: TrainConfig | None = None,
    period: int | None = None,
) -> SeriesRun:
    model_cfg = model_cfg or ModelConfig()
    train_cfg = train_cfg or TrainConfig(horizon=horizon)
    known, actual = holdout(series, horizon)
    result = train(difference(known), model_cfg, train_cfg, val_size=horizon)
    levels, clamps = forecast_levels(result.forecaster, known, horizon)
    fc = SeriesForecast(
        series=series.name,
        predicted=levels,
        actual=actual,
        clamp_count=clamps,
        baselines=baselines(known, horizon, period),
    )
    return SeriesRun(result, fc)
