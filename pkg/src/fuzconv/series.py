"""Raw series, first differencing and restoration of predicted differences."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteInput, NonMonotoneTimestamps, SeriesTooShort, ValidationError


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def unit_timestamps(n: int) -> np.ndarray:
    """Deterministic ticks 1..n for sources without explicit time coordinates."""
    return np.arange(1, n + 1, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class RawSeries:
    name: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = _frozen(self.timestamps)
        vs = _frozen(self.values)
        if ts.ndim != 1 or vs.ndim != 1 or ts.shape != vs.shape:
            raise SeriesTooShort(
                f"series {self.name!r}: timestamps and values must be 1-D of equal length"
            )
        if len(vs) < 2:
            raise SeriesTooShort(f"series {self.name!r} has {len(vs)} point(s), need >= 2")
        if not (np.all(np.isfinite(vs)) and np.all(np.isfinite(ts))):
            raise NonFiniteInput(f"series {self.name!r} contains NaN or Inf")
        if np.any(np.diff(ts) <= 0):
            raise NonMonotoneTimestamps(
                f"series {self.name!r}: timestamps must be strictly increasing"
            )
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vs)

    @classmethod
    def from_values(cls, values, name: str = "series") -> "RawSeries":
        values = np.asarray(values, dtype=np.float64)
        return cls(name, unit_timestamps(len(values)), values)

    def __len__(self) -> int:
        return len(self.values)

    def head(self, n: int) -> "RawSeries":
        return RawSeries(self.name, self.timestamps[:n], self.values[:n])


@dataclass(frozen=True, eq=False)
class DiffSeries:
    """First differences of a RawSeries plus the anchor level y_1.

    ``timestamps[i]`` is the later endpoint of the pair that produced
    ``values[i]``.
    """

    anchor: float
    timestamps: np.ndarray
    values: np.ndarray
    name: str = "series"

    def __post_init__(self):
        object.__setattr__(self, "timestamps", _frozen(self.timestamps))
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "anchor", float(self.anchor))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def last_level(self) -> float:
        """Level of the source series at the final known point."""
        return restore_levels(self.anchor, self.values)[-1] if len(self) else self.anchor

    def head(self, n: int) -> "DiffSeries":
        return DiffSeries(self.anchor, self.timestamps[:n], self.values[:n], self.name)


def difference(series: RawSeries) -> DiffSeries:
    if len(series) < 2:
        raise SeriesTooShort("differencing needs at least two observations")
    y = series.values
    return DiffSeries(
        anchor=y[0],
        timestamps=series.timestamps[1:],
        values=y[1:] - y[:-1],
        name=series.name,
    )


def restore_levels(start: float, diffs) -> np.ndarray:
    """Levels reached by accumulating ``diffs`` onto ``start``."""
    diffs = np.asarray(diffs, dtype=np.float64)
    # exact running sum (Shewchuk partials), rounded once per level; a plain
    # cumsum loses pointwise accuracy where a long walk passes near zero
    partials = [float(start)]
    out = np.empty(len(diffs))
    for i, x in enumerate(diffs.tolist()):
        kept = 0
        for p in partials:
            if abs(x) < abs(p):
                x, p = p, x
            hi = x + p
            lo = p - (hi - x)
            if lo:
                partials[kept] = lo
                kept += 1
            x = hi
        partials[kept:] = [x]
        out[i] = math.fsum(partials)
    return out


def restore(diff: DiffSeries, predicted_diffs, origin: int | None = None) -> np.ndarray:
    """Turn predicted differences into levels.

    The chain starts from the level reached after the first ``origin`` known
    differences (all of them by default) and accumulates the predictions, one
    level per predicted difference.
    """
    pred = np.asarray(predicted_diffs, dtype=np.float64)
    if pred.ndim != 1:
        raise NonFiniteInput("predicted differences must be a 1-D sequence")
    if not np.all(np.isfinite(pred)):
        raise NonFiniteInput("predicted differences contain NaN or Inf")
    if origin is None:
        origin = len(diff)
    if not 0 <= origin <= len(diff):
        raise ValidationError(f"origin {origin} outside [0, {len(diff)}]")
    base = diff.anchor
    if origin:
        base = float(restore_levels(diff.anchor, diff.values[:origin])[-1])
    if len(pred) == 0:
        return np.empty(0)
    return restore_levels(base, pred)
