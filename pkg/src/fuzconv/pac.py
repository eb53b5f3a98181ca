"""Partially asymmetric convolution stack with a pooled residual branch.

Rows of the feature map are window elements and run along the vertical
filter; columns are positions in the global context and run along the
horizontal filter. A stage is a ``V x 1`` convolution followed by a
``1 x H`` convolution with no nonlinearity in between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Tensor
from .errors import SpatialUnderflow, ValidationError
from .nn import BatchNorm2d, BilinearHead, Module, Parameter, uniform_init


@dataclass(frozen=True)
class PacConfig:
    depth: int | str = 2
    v_len: int = 3
    h_len: int = 2
    growth: float = 2.0
    head_hidden: int = 64

    def __post_init__(self):
        if self.depth != "auto" and (not isinstance(self.depth, int) or self.depth < 1):
            raise ValidationError(f"depth must be a positive integer or 'auto', got {self.depth!r}")
        if self.v_len < 1 or self.h_len < 1:
            raise ValidationError("filter lengths must be >= 1")
        if self.growth < 1:
            raise ValidationError(f"growth rate must be >= 1, got {self.growth}")
        if self.head_hidden < 1:
            raise ValidationError("head_hidden must be >= 1")

    def resolve_depth(self, rows: int, cols: int) -> int:
        """Concrete stage count; ``auto`` picks the deepest stack that keeps
        both spatial dims >= 2."""
        if self.depth != "auto":
            return int(self.depth)
        if self.v_len == 1 and self.h_len == 1:
            return 1
        k = 0
        while rows - (k + 1) * (self.v_len - 1) >= 2 and cols - (k + 1) * (self.h_len - 1) >= 2:
            k += 1
        if k == 0:
            raise SpatialUnderflow(
                f"no stage count keeps a {rows}x{cols} map at >= 2x2 with V={self.v_len}, H={self.h_len}"
            )
        return k

    def channels(self, depth: int, in_channels: int = 1) -> list[int]:
        return [max(1, round(in_channels * self.growth**k)) for k in range(depth + 1)]

    def output_dims(self, rows: int, cols: int, depth: int) -> tuple[int, int]:
        out_r = rows - depth * (self.v_len - 1)
        out_c = cols - depth * (self.h_len - 1)
        if out_r < 1 or out_c < 1:
            raise SpatialUnderflow(
                f"{depth} stage(s) of {self.v_len}x1 / 1x{self.h_len} filters shrink a "
                f"{rows}x{cols} map to {out_r}x{out_c}"
            )
        return out_r, out_c

    def pool_kernel(self, depth: int) -> tuple[int, int]:
        return depth * (self.v_len - 1) + 1, depth * (self.h_len - 1) + 1


def stage_macs(channels_in: int, channels_out: int, rows: int, cols: int, v: int, h: int) -> dict[str, int]:
    """Exact multiply-accumulates of one vertical+horizontal pair and of the
    dense ``v x h`` kernel it stands in for, per sample."""
    mid_r = rows - v + 1
    out_c = cols - h + 1
    vertical = channels_out * channels_in * v * mid_r * cols
    horizontal = channels_out * channels_out * h * mid_r * out_c
    dense = channels_out * channels_in * v * h * mid_r * out_c
    return {"vertical": vertical, "horizontal": horizontal, "decomposed": vertical + horizontal, "dense": dense}


class PartiallyAsymmetricStack(Module):
    def __init__(self, in_channels: int, rows: int, cols: int, cfg: PacConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.depth = cfg.resolve_depth(rows, cols)
        self.out_rows, self.out_cols = cfg.output_dims(rows, cols, self.depth)
        chans = cfg.channels(self.depth, in_channels)
        self.channels = chans
        self.vertical: list[Parameter] = []
        self.horizontal: list[Parameter] = []
        for k in range(self.depth):
            c_in, c_out = chans[k], chans[k + 1]
            self.vertical.append(
                Parameter(uniform_init(rng, (c_out, c_in, cfg.v_len, 1), c_in * cfg.v_len))
            )
            self.horizontal.append(
                Parameter(uniform_init(rng, (c_out, c_out, 1, cfg.h_len), c_out * cfg.h_len))
            )

    def forward(self, x: Tensor) -> Tensor:
        for v, h in zip(self.vertical, self.horizontal):
            x = engine.conv2d_valid(engine.conv2d_valid(x, v), h)
        return x


class ResidualBranch(Module):
    """Average pool sized to match the stack's output, 1x1 conv, batch norm."""

    def __init__(self, in_channels: int, out_channels: int, pool: tuple[int, int], rng: np.random.Generator):
        self.pool = pool
        self.pointwise = Parameter(uniform_init(rng, (out_channels, in_channels, 1, 1), in_channels))
        self.bn = BatchNorm2d(out_channels)

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(engine.conv2d_valid(engine.avg_pool2d(x, *self.pool), self.pointwise))


def fuse(y1: Tensor, y2: Tensor) -> Tensor:
    if y1.shape != y2.shape:
        raise engine.ShapeMismatch(f"cannot fuse branches of shape {y1.shape} and {y2.shape}")
    return engine.add(y1, y2)


class PacBlock(Module):
    """Both branches, their element-wise sum and the two-layer head."""

    def __init__(self, in_channels: int, rows: int, cols: int, cfg: PacConfig, rng: np.random.Generator):
        self.stack = PartiallyAsymmetricStack(in_channels, rows, cols, cfg, rng)
        out_ch = self.stack.channels[-1]
        self.residual = ResidualBranch(in_channels, out_ch, cfg.pool_kernel(self.stack.depth), rng)
        self.head = BilinearHead(out_ch * self.stack.out_rows * self.stack.out_cols, cfg.head_hidden, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.head(engine.flatten(fuse(self.stack(x), self.residual(x))))
