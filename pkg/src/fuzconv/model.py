"""The full forecasting network and its configuration."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .baa import BaaConfig, BilateralAtrous
from .engine import Tensor
from .errors import ValidationError
from .nn import Module
from .pac import PacBlock, PacConfig
from .windowing import check_window_size


@dataclass(frozen=True)
class ModelConfig:
    window_size: int = 12
    baa_filter_length: int = 2
    baa_stride: int = 2
    baa_shared_filter: bool = True
    depth: int | str = 2
    v_len: int = 3
    h_len: int = 2
    growth: float = 2.0
    head_hidden: int = 64

    def __post_init__(self):
        try:
            check_window_size(self.window_size)
        except ValidationError as exc:
            raise ValidationError(f"window_size: {exc}") from None
        # constructing the sub-configs validates them
        self.baa
        self.pac

    @property
    def baa(self) -> BaaConfig:
        return BaaConfig(self.baa_filter_length, self.baa_stride, self.baa_shared_filter)

    @property
    def pac(self) -> PacConfig:
        return PacConfig(self.depth, self.v_len, self.h_len, self.growth, self.head_hidden)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown model settings: {sorted(unknown)}")
        return cls(**d)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def check_input(self, side_length: int) -> None:
        """Raise if a fuzzified window with this flank length cannot pass
        through the network."""
        self.baa.check_fits(side_length)
        cols = self.baa.output_width(side_length)
        pac = self.pac
        depth = pac.resolve_depth(self.window_size, cols)
        pac.output_dims(self.window_size, cols, depth)


class ForecastNet(Module):
    """Fuzzified window ``(B, S, 2*SL+1)`` -> predicted next difference ``(B,)``."""

    def __init__(self, cfg: ModelConfig, side_length: int, seed: int = 0):
        cfg.check_input(side_length)
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.side_length = side_length
        self.baa = BilateralAtrous(side_length, cfg.baa, rng)
        self.pac = PacBlock(1, cfg.window_size, self.baa.output_width, cfg.pac, rng)

    def forward(self, x) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.ndim == 3:
            x = x.reshape(x.shape[0], 1, x.shape[1], x.shape[2])
        return self.pac(self.baa(x))
