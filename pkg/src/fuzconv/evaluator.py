"""Error metrics, naive baselines and the Nemenyi critical distance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import BadArity, EmptyInput, LengthMismatch

# Critical values q_0.05 of the Nemenyi test (studentized range at infinite
# degrees of freedom divided by sqrt(2)), k = 2..20. Values for k <= 10 as
# tabulated by Demsar (2006, JMLR 7, Table 5a); the rest computed from
# scipy.stats.studentized_range and rounded to three decimals.
Q_ALPHA_05 = {
    2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031,
    9: 3.102, 10: 3.164, 11: 3.219, 12: 3.268, 13: 3.313, 14: 3.354,
    15: 3.391, 16: 3.426, 17: 3.458, 18: 3.489, 19: 3.517, 20: 3.544,
}  # fmt: skip

# Seasonal period by frequency label (Monash archive conventions).
SEASONALITY = {
    "minutely": 1440,
    "10_minutes": 144,
    "half_hourly": 48,
    "hourly": 24,
    "daily": 7,
    "weekly": 52,
    "monthly": 12,
    "quarterly": 4,
    "yearly": 1,
}


def _pair(pred, actual) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if len(p) != len(a):
        raise LengthMismatch(f"{len(p)} predictions vs {len(a)} actual values")
    if len(p) == 0:
        raise EmptyInput("metrics need at least one point")
    return p, a


def mae(pred, actual) -> float:
    p, a = _pair(pred, actual)
    return float(np.mean(np.abs(p - a)))


def rmse(pred, actual) -> float:
    p, a = _pair(pred, actual)
    return float(np.sqrt(np.mean((p - a) ** 2)))


def nemenyi_cd(k: int, n_datasets: int, q_alpha: float | None = None) -> float:
    """Critical rank distance ``q * sqrt(k (k + 1) / (6 N))``.

    ``q_alpha`` defaults to the 0.05 table entry for ``k`` models.
    """
    if k < 2:
        raise BadArity(f"need at least two models, got k={k}")
    if n_datasets < 1:
        raise BadArity(f"need at least one dataset, got {n_datasets}")
    if q_alpha is None:
        if k not in Q_ALPHA_05:
            raise BadArity(f"no tabulated q_0.05 for k={k}; pass q_alpha explicitly")
        q_alpha = Q_ALPHA_05[k]
    if q_alpha <= 0:
        raise BadArity(f"q_alpha must be positive, got {q_alpha}")
    return q_alpha * math.sqrt(k * (k + 1) / (6.0 * n_datasets))


def average_ranks(scores: np.ndarray) -> np.ndarray:
    """Mean rank of each model (columns) across datasets (rows); rank 1 is
    the lowest score, ties share the average rank."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise BadArity("scores must be a datasets x models matrix with >= 2 models")
    return rankdata(scores, axis=1).mean(axis=0)


def persistence_baseline(levels, horizon: int) -> np.ndarray:
    """Repeat the last observed level."""
    levels = np.asarray(levels, dtype=np.float64)
    return np.full(horizon, levels[-1])


def seasonal_naive(levels, horizon: int, period: int) -> np.ndarray:
    """Repeat the last full period; falls back to persistence when the
    period is 1 or longer than the history."""
    levels = np.asarray(levels, dtype=np.float64)
    if period <= 1 or period > len(levels):
        return persistence_baseline(levels, horizon)
    last = levels[-period:]
    return np.array([last[h % period] for h in range(horizon)])


@dataclass
class SeriesForecast:
    series: str
    predicted: np.ndarray
    actual: np.ndarray | None = None
    clamp_count: int = 0
    baselines: dict[str, np.ndarray] = field(default_factory=dict)

    def metrics(self) -> dict[str, float] | None:
        if self.actual is None or len(self.actual) == 0:
            return None
        out = {"mae": mae(self.predicted, self.actual), "rmse": rmse(self.predicted, self.actual)}
        for name, pred in self.baselines.items():
            out[f"{name}_mae"] = mae(pred, self.actual)
            out[f"{name}_rmse"] = rmse(pred, self.actual)
        return out


@dataclass
class ForecastReport:
    series: list[SeriesForecast] = field(default_factory=list)
    fingerprint: str = ""
    dataset: str = ""

    @property
    def clamp_count(self) -> int:
        return sum(s.clamp_count for s in self.series)

    def _pooled(self, baseline: str | None = None):
        preds, acts = [], []
        for s in self.series:
            if s.actual is None:
                continue
            preds.append(s.baselines[baseline] if baseline else s.predicted)
            acts.append(s.actual)
        if not preds:
            return None
        return np.concatenate(preds), np.concatenate(acts)

    @property
    def mae(self) -> float | None:
        pooled = self._pooled()
        return None if pooled is None else mae(*pooled)

    @property
    def rmse(self) -> float | None:
        pooled = self._pooled()
        return None if pooled is None else rmse(*pooled)

    def baseline_metrics(self) -> dict[str, dict[str, float]]:
        names = set()
        for s in self.series:
            names.update(s.baselines)
        out = {}
        for name in sorted(names):
            pooled = self._pooled(baseline=name)
            if pooled is not None:
                out[name] = {"mae": mae(*pooled), "rmse": rmse(*pooled)}
        return out

    def summary(self) -> dict:
        return {
            "dataset": self.dataset,
            "model_fingerprint": self.fingerprint,
            "mae": self.mae,
            "rmse": self.rmse,
            "clamp_count": self.clamp_count,
            "baselines": self.baseline_metrics(),
            "series": {
                s.series: {"metrics": s.metrics(), "clamp_count": s.clamp_count, "steps": len(s.predicted)}
                for s in self.series
            },
        }
