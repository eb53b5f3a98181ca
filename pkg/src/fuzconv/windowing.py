"""Stride-1 sliding windows over a difference series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import WindowTooLarge, WindowTooSmall
from .series import DiffSeries


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Windows ``values[i:i+S]`` for every start ``i``; ``targets[i]`` is the
    difference right after window ``i`` (the last window has none)."""

    window_size: int
    windows: np.ndarray
    times: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return len(self.windows)

    @property
    def n_pairs(self) -> int:
        return len(self.targets)

    def target(self, i: int) -> float | None:
        return float(self.targets[i]) if i < len(self.targets) else None


def check_window_size(window_size: int, n: int | None = None) -> None:
    if window_size < 2:
        raise WindowTooSmall(
            f"window size {window_size} < 2: tendency accumulation divides by S-1"
        )
    if n is not None and window_size > n:
        raise WindowTooLarge(f"window size {window_size} exceeds series length {n}")


def split(diff: DiffSeries, window_size: int) -> WindowSet:
    n = len(diff)
    check_window_size(window_size, n)
    windows = sliding_window_view(diff.values, window_size)
    times = sliding_window_view(diff.timestamps, window_size)
    return WindowSet(
        window_size=window_size,
        windows=windows,
        times=times,
        targets=diff.values[window_size:],
    )
