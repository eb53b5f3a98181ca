"""Fuzzified window construction.

Each difference value is placed in an interval of a universe of discourse
built from the whole series, expanded into the grid points on either side
of it, and shifted by a tendency term computed inside its window. The
padding-crop policy then aligns the expanded vectors of a window into a
rectangular ``S x (2*SL + 1)`` matrix with the reconstructed values in the
middle column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateSeries, EmptyWindow, OutOfUniverse, SeriesTooShort, ShapeMismatch, ValidationError
from .series import DiffSeries
from .windowing import WindowSet, check_window_size, split


@dataclass(frozen=True)
class UniverseOfDiscourse:
    lower: float
    upper: float
    interval_count: int
    interval_width: float
    sigma: float

    @property
    def grid(self) -> np.ndarray:
        """Interval boundaries ``lower + m*width`` for m = 0..interval_count."""
        g = self.lower + np.arange(self.interval_count + 1) * self.interval_width
        g[-1] = self.upper
        return g

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def clamp(self, value: float) -> float:
        return min(max(value, self.lower), self.upper)

    def interval_index(self, value: float) -> int:
        """Half-open intervals ``[g_m, g_m+1)``; the top interval is closed."""
        m = int(np.searchsorted(self.grid, value, side="right")) - 1
        return min(max(m, 0), self.interval_count - 1)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "interval_count": self.interval_count,
            "interval_width": self.interval_width,
            "sigma": self.sigma,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UniverseOfDiscourse":
        return cls(
            float(d["lower"]),
            float(d["upper"]),
            int(d["interval_count"]),
            float(d["interval_width"]),
            float(d["sigma"]),
        )


@dataclass(frozen=True, eq=False)
class ExpandedElement:
    left: np.ndarray
    center: float
    right: np.ndarray
    tendency: float
    interval: int
    lower: float
    upper: float


@dataclass(frozen=True, eq=False)
class FuzzyWindowTensor:
    data: np.ndarray
    side_length: int

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def center_col(self) -> int:
        return self.side_length


def interval_count(n: int) -> int:
    return max(1, math.ceil(math.log2(n)))


def build_universe(diff: DiffSeries | np.ndarray) -> UniverseOfDiscourse:
    values = np.asarray(diff.values if isinstance(diff, DiffSeries) else diff, dtype=np.float64)
    n = len(values)
    if n < 2:
        raise SeriesTooShort("a universe of discourse needs at least two differences")
    sigma = float(np.std(values))  # population
    lo, hi = float(values.min()), float(values.max())
    if sigma == 0.0 and lo == hi:
        raise DegenerateSeries(
            f"difference series is constant ({lo!r}); the universe of discourse collapses"
        )
    lower, upper = lo - sigma, hi + sigma
    count = interval_count(n)
    width = (upper - lower) / count
    if not width > 0.0:
        # sigma can underflow for subnormal spreads
        raise DegenerateSeries(f"universe [{lower!r}, {upper!r}] too narrow for {count} intervals")
    return UniverseOfDiscourse(lower, upper, count, width, sigma)


def next_spacing(times: np.ndarray) -> np.ndarray:
    """Spacing from each time coordinate to its successor.

    The last coordinate has no successor and reuses the previous spacing.
    """
    times = np.asarray(times, dtype=np.float64)
    if len(times) < 2:
        raise SeriesTooShort("need two time coordinates to derive a spacing")
    dt = np.empty_like(times)
    dt[:-1] = np.diff(times)
    dt[-1] = dt[-2]
    return dt


def tendency_accumulation(values, times, index: int, spacing: float) -> float:
    """Slope-weighted mean change of ``values[index]`` against its in-window
    predecessors, divided by ``S - 1``; ``spacing`` is the gap from
    ``times[index]`` to the next time coordinate of the series."""
    values = np.asarray(values, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    size = len(values)
    check_window_size(size)
    if index == 0:
        return 0.0
    prev_v, prev_t = values[:index], times[:index]
    terms = (values[index] - prev_v) * spacing / (times[index] - prev_t)
    return float(np.sum(terms) / (size - 1))


def window_tendencies(values, times, spacings) -> np.ndarray:
    """Tendency for every element of one window."""
    return np.array(
        [tendency_accumulation(values, times, j, spacings[j]) for j in range(len(values))]
    )


def batch_tendencies(windows: np.ndarray, times: np.ndarray, spacings: np.ndarray) -> np.ndarray:
    """Vectorised tendencies for a stack of windows, shape ``(B, S)``."""
    B, S = windows.shape
    check_window_size(S)
    dv = windows[:, :, None] - windows[:, None, :]  # [b, p, q] = v_p - v_q
    dt = times[:, :, None] - times[:, None, :]
    mask = np.tril(np.ones((S, S), dtype=bool), k=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mask, dv / np.where(mask, dt, 1.0), 0.0)
    return ratio.sum(axis=2) * spacings / (S - 1)


def expand_element(u: UniverseOfDiscourse, value: float, tendency: float) -> ExpandedElement:
    if not u.contains(value):
        raise OutOfUniverse(f"value {value!r} outside universe [{u.lower!r}, {u.upper!r}]")
    grid = u.grid
    phi = u.interval_index(value)
    return ExpandedElement(
        left=grid[: phi + 1].copy(),
        center=float(value + tendency),
        right=grid[phi + 1 :].copy(),
        tendency=float(tendency),
        interval=phi,
        lower=u.lower,
        upper=u.upper,
    )


def _pad_side(side: np.ndarray, length: int, fill: float, outer_first: bool) -> np.ndarray:
    missing = length - len(side)
    if missing <= 0:
        return side
    pad = np.full(missing, fill)
    return np.concatenate([pad, side] if outer_first else [side, pad])


def pcp_align(
    elements: Sequence[ExpandedElement], side_length: int | None = None
) -> FuzzyWindowTensor:
    """Padding-crop policy.

    Pads the shorter flank of each element with the universe bound on its
    side until both flanks match, takes the shortest resulting flank length
    across elements and crops every flank to its innermost entries. A fixed
    ``side_length`` (shared across all windows of a series) may be given;
    flanks shorter than it are padded further with the same bound values.
    """
    if len(elements) == 0:
        raise EmptyWindow("padding-crop needs at least one expanded element")
    padded = []
    for e in elements:
        side = max(len(e.left), len(e.right))
        padded.append(
            (
                _pad_side(e.left, side, e.lower, outer_first=True),
                _pad_side(e.right, side, e.upper, outer_first=False),
            )
        )
    sl = min(len(l) for l, _ in padded) if side_length is None else int(side_length)
    if sl < 1:
        raise ValidationError(f"side length must be >= 1, got {sl}")
    rows = np.empty((len(elements), 2 * sl + 1))
    for i, (e, (left, right)) in enumerate(zip(elements, padded)):
        left = _pad_side(left, sl, e.lower, outer_first=True)
        right = _pad_side(right, sl, e.upper, outer_first=False)
        rows[i, :sl] = left[len(left) - sl :]
        rows[i, sl] = e.center
        rows[i, sl + 1 :] = right[:sl]
    return FuzzyWindowTensor(rows, sl)


def padded_side_length(u: UniverseOfDiscourse, value: float) -> int:
    """Flank length of ``value`` after the padding step."""
    phi = u.interval_index(value)
    return max(phi + 1, u.interval_count - phi)


class Fuzzifier:
    """Series-level fuzzification state: the universe and the shared side length.

    ``fit`` sees only the known (training) part of a series. The shared side
    length is the shortest padded flank over every element of that part, so
    every training window is cropped to the same width.
    """

    def __init__(self, universe: UniverseOfDiscourse, side_length: int, window_size: int):
        check_window_size(window_size)
        self.universe = universe
        self.side_length = int(side_length)
        self.window_size = int(window_size)

    @classmethod
    def fit(cls, diff: DiffSeries, window_size: int) -> "Fuzzifier":
        check_window_size(window_size, len(diff))
        u = build_universe(diff)
        sl = min(padded_side_length(u, v) for v in diff.values)
        return cls(u, sl, window_size)

    @property
    def width(self) -> int:
        return 2 * self.side_length + 1

    def _flank_table(self, values: np.ndarray) -> np.ndarray:
        """Aligned rows with a zero center for each value, shape ``(n, width)``."""
        u, sl = self.universe, self.side_length
        grid = u.grid
        N = u.interval_count
        idx = np.clip(np.searchsorted(grid, values, side="right") - 1, 0, N - 1)
        # flank offsets counted outward from the center: left k -> grid[phi-k], right k -> grid[phi+1+k]
        k = np.arange(sl)
        left_pos = idx[:, None] - k[None, :]
        right_pos = idx[:, None] + 1 + k[None, :]
        left = np.where(left_pos >= 0, grid[np.clip(left_pos, 0, N)], u.lower)[:, ::-1]
        right = np.where(right_pos <= N, grid[np.clip(right_pos, 0, N)], u.upper)
        out = np.zeros((len(values), self.width))
        out[:, :sl] = left
        out[:, sl + 1 :] = right
        return out

    def transform(self, windows: WindowSet | np.ndarray, times=None, spacings=None) -> np.ndarray:
        """Fuzzify a stack of windows into ``(B, S, width)``.

        ``spacings`` holds the gap to the next time coordinate for every
        window element, same shape as ``windows``.
        """
        if isinstance(windows, WindowSet):
            ws = windows
            windows, times = ws.windows, ws.times
        windows = np.atleast_2d(np.asarray(windows, dtype=np.float64))
        times = np.atleast_2d(np.asarray(times, dtype=np.float64))
        if spacings is None:
            raise ValidationError("spacings are required")
        spacings = np.atleast_2d(np.asarray(spacings, dtype=np.float64))
        B, S = windows.shape
        if S != self.window_size:
            raise ShapeMismatch(f"expected windows of size {self.window_size}, got {S}")
        u = self.universe
        if np.any(windows < u.lower) or np.any(windows > u.upper):
            raise OutOfUniverse("window values outside the universe of discourse")
        rho = batch_tendencies(windows, times, spacings)
        out = self._flank_table(windows.ravel()).reshape(B, S, self.width)
        out[:, :, self.side_length] = windows + rho
        return out

    def transform_series(self, diff: DiffSeries) -> np.ndarray:
        """Every stride-1 window of ``diff`` as a ``(B, S, width)`` stack."""
        ws = split(diff, self.window_size)
        spacing = next_spacing(diff.timestamps)
        spacings = sliding_window_view(spacing, self.window_size)
        return self.transform(ws.windows, ws.times, spacings)

    def window_tensor(self, values, times, spacings) -> FuzzyWindowTensor:
        """Reference path for one window through expand_element + pcp_align."""
        rho = window_tendencies(values, times, spacings)
        elems = [expand_element(self.universe, v, r) for v, r in zip(values, rho)]
        return pcp_align(elems, self.side_length)

    def to_dict(self) -> dict:
        return {
            "universe": self.universe.to_dict(),
            "side_length": self.side_length,
            "window_size": self.window_size,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Fuzzifier":
        return cls(UniverseOfDiscourse.from_dict(d["universe"]), d["side_length"], d["window_size"])
