"""Bilateral Atrous block.

Batch norm + rectifier over the fuzzified window, dilated filtering of the
two flanks on each side of the preserved center column, then a second
batch norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Tensor
from .errors import FlankTooShort, ShapeMismatch, ValidationError
from .nn import BatchNorm2d, Module, Parameter, uniform_init


@dataclass(frozen=True)
class BaaConfig:
    filter_length: int = 2
    stride: int = 2
    shared_filter: bool = True

    def __post_init__(self):
        if self.filter_length < 1:
            raise ValidationError(f"BAA filter length must be >= 1, got {self.filter_length}")
        if self.stride < 1:
            raise ValidationError(f"BAA stride must be >= 1, got {self.stride}")

    @property
    def span(self) -> int:
        return (self.filter_length - 1) * self.stride + 1

    def check_fits(self, side_length: int) -> None:
        if self.span > side_length:
            raise FlankTooShort(
                f"dilated filter span {self.span} (K={self.filter_length}, s={self.stride}) "
                f"exceeds flank length {side_length}"
            )

    def flank_out(self, side_length: int) -> int:
        self.check_fits(side_length)
        return side_length - self.span + 1

    def output_width(self, side_length: int) -> int:
        return 2 * self.flank_out(side_length) + 1


def bilateral_atrous(y: Tensor, side_length: int, left_filter: Tensor, right_filter: Tensor, stride: int) -> Tensor:
    """Filter both flanks around column ``side_length`` and keep that column.

    ``y`` has the window width on its last axis. Output layout is
    ``[filtered left | center | filtered right]``.
    """
    width = y.shape[-1]
    if width != 2 * side_length + 1:
        raise ShapeMismatch(f"width {width} != 2*{side_length}+1")
    left = engine.take_last(y, 0, side_length)
    center = engine.take_last(y, side_length, side_length + 1)
    right = engine.take_last(y, side_length + 1, width)
    return engine.concat_last(
        [
            engine.conv1d_dilated(left, left_filter, stride),
            center,
            engine.conv1d_dilated(right, right_filter, stride),
        ]
    )


class BilateralAtrous(Module):
    """Input ``(B, 1, S, 2*SL+1)``; output ``(B, 1, S, 2*(SL-span+1)+1)``."""

    def __init__(self, side_length: int, cfg: BaaConfig, rng: np.random.Generator, channels: int = 1):
        cfg.check_fits(side_length)
        self.cfg = cfg
        self.side_length = side_length
        self.bn_in = BatchNorm2d(channels)
        K = cfg.filter_length
        self.filter = Parameter(uniform_init(rng, (K,), K))
        if not cfg.shared_filter:
            self.filter_right = Parameter(uniform_init(rng, (K,), K))
        self.bn_out = BatchNorm2d(channels)

    @property
    def output_width(self) -> int:
        return self.cfg.output_width(self.side_length)

    @property
    def center_col(self) -> int:
        return self.cfg.flank_out(self.side_length)

    def activate(self, x: Tensor) -> Tensor:
        return engine.relu(self.bn_in(x))

    def atrous(self, y: Tensor) -> Tensor:
        right = self.filter if self.cfg.shared_filter else self.filter_right
        return bilateral_atrous(y, self.side_length, self.filter, right, self.cfg.stride)

    def forward(self, x: Tensor) -> Tensor:
        return self.bn_out(self.atrous(self.activate(x)))
