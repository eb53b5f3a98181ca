"""Training on window -> next-difference pairs and autoregressive rollout."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import checkpoint as ckpt_io
from . import engine
from .checkpoint import Checkpoint
from .errors import DivergedLoss, HorizonZero, NoTrainingPairs, ValidationError
from .fuzzify import Fuzzifier, next_spacing
from .model import ForecastNet, ModelConfig
from .optim import NAdam, ReduceLROnPlateau
from .series import DiffSeries

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    factor: float = 0.5
    patience: int = 5
    threshold: float = 1e-5
    eps: float = 1e-5
    batch_size: int = 32
    seed: int = 0
    horizon: int | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if not 0 < self.factor < 1:
            raise ValidationError(f"scheduler factor must be in (0, 1), got {self.factor}")
        if self.patience < 0:
            raise ValidationError(f"patience must be >= 0, got {self.patience}")
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.horizon is not None and self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown training settings: {sorted(unknown)}")
        return cls(**d)


@dataclass
class Forecaster:
    """A network together with the fuzzification state it was trained on."""

    net: ForecastNet
    fuzzifier: Fuzzifier
    config: ModelConfig

    def predict(self, x: np.ndarray) -> np.ndarray:
        self.net.eval()
        with engine.no_grad():
            return self.net(x).data.copy()

    def to_checkpoint(self, epoch: int = 0, best_val_loss: float | None = None, meta: dict | None = None) -> Checkpoint:
        return Checkpoint(
            fingerprint=self.config.fingerprint(),
            tensors=self.net.state_dict(),
            epoch=epoch,
            best_val_loss=best_val_loss,
            config=self.config.to_dict(),
            fuzzifier=self.fuzzifier.to_dict(),
            meta=meta or {},
        )

    @classmethod
    def from_checkpoint(cls, ck: Checkpoint) -> "Forecaster":
        cfg = ModelConfig.from_dict(ck.config)
        if cfg.fingerprint() != ck.fingerprint:
            raise ckpt_io.CheckpointFormatError("stored config does not match stored fingerprint")
        fz = Fuzzifier.from_dict(ck.fuzzifier)
        net = ForecastNet(cfg, fz.side_length)
        net.load_state_dict(ck.tensors)
        net.eval()
        return cls(net, fz, cfg)

    def save(self, path, **kwargs) -> None:
        ckpt_io.save(self.to_checkpoint(**kwargs), path)

    @classmethod
    def load(cls, path) -> "Forecaster":
        return cls.from_checkpoint(ckpt_io.load(path))


@dataclass
class TrainResult:
    forecaster: Forecaster
    trace: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf

    def checkpoint(self) -> Checkpoint:
        return self.forecaster.to_checkpoint(self.best_epoch, self.best_val_loss)


def supervised_pairs(diff: DiffSeries, fz: Fuzzifier) -> tuple[np.ndarray, np.ndarray]:
    """Fuzzified windows that have a next value, and those next values."""
    X = fz.transform_series(diff)
    y = np.asarray(diff.values[fz.window_size :])
    return X[: len(y)], y


def _eval_loss(net: ForecastNet, X: np.ndarray, y: np.ndarray) -> float:
    net.eval()
    with engine.no_grad():
        pred = net(X).data
    net.train()
    return float(np.mean(np.abs(pred - y)))


def train(
    diff: DiffSeries,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    val_size: int | None = None,
) -> TrainResult:
    """Fit a fresh network on every supervised pair of ``diff``.

    The last ``val_size`` pairs (default: the horizon) are held out to drive
    the plateau schedule and pick the best epoch; the full epoch budget is
    always run.
    """
    fz = Fuzzifier.fit(diff, model_cfg.window_size)
    X, y = supervised_pairs(diff, fz)
    if len(y) == 0:
        raise NoTrainingPairs(
            f"series of {len(diff)} differences gives no pairs for window size {model_cfg.window_size}"
        )
    if val_size is None:
        val_size = train_cfg.horizon or 0
    if val_size >= len(y):
        val_size = 0
    split_at = len(y) - val_size
    X_tr, y_tr = X[:split_at], y[:split_at]
    X_va, y_va = X[split_at:], y[split_at:]

    net = ForecastNet(model_cfg, fz.side_length, seed=train_cfg.seed)
    net.train()
    opt = NAdam(net.parameters(), lr=train_cfg.lr)
    sched = ReduceLROnPlateau(opt, train_cfg.factor, train_cfg.patience, train_cfg.threshold, train_cfg.eps)
    rng = np.random.default_rng(train_cfg.seed + 1)

    best_state = net.state_dict()
    best_loss = math.inf
    best_epoch = 0
    trace = []
    bs = train_cfg.batch_size
    for epoch in range(1, train_cfg.epochs + 1):
        order = rng.permutation(len(y_tr))
        total = 0.0
        for start in range(0, len(order), bs):
            idx = order[start : start + bs]
            loss = engine.l1_loss(net(X_tr[idx]), y_tr[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise DivergedLoss(f"training loss became {value} at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += value * len(idx)
        train_loss = total / len(y_tr)
        val_loss = _eval_loss(net, X_va, y_va) if val_size else _eval_loss(net, X_tr, y_tr)
        if not math.isfinite(val_loss):
            raise DivergedLoss(f"validation loss became {val_loss} at epoch {epoch}")
        trace.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": opt.lr})
        if val_loss < best_loss:
            best_loss, best_epoch = val_loss, epoch
            best_state = net.state_dict()
        sched.step(val_loss)
        log.debug("epoch %d train %.6g val %.6g lr %.3g", epoch, train_loss, val_loss, opt.lr)

    net.load_state_dict(best_state)
    net.eval()
    return TrainResult(Forecaster(net, fz, model_cfg), trace, best_epoch, best_loss)


@dataclass
class Rollout:
    predictions: np.ndarray
    clamp_count: int = 0


def rollout(forecaster: Forecaster, diff: DiffSeries, horizon: int, origin: int | None = None) -> Rollout:
    """Predict ``horizon`` differences past ``origin`` by feeding each
    prediction back in as the newest window element.

    Only ``diff.values[:origin]`` is read. Predictions outside the universe
    of discourse are clamped before they are fuzzified; the returned
    predictions are unclamped.
    """
    if horizon < 1:
        raise HorizonZero(f"horizon must be >= 1, got {horizon}")
    fz = forecaster.fuzzifier
    S = fz.window_size
    origin = len(diff) if origin is None else origin
    if origin < max(S, 2):
        raise NoTrainingPairs(f"need at least {max(S, 2)} known differences, have {origin}")
    hist_v = list(np.asarray(diff.values[origin - S : origin], dtype=np.float64))
    hist_t = list(np.asarray(diff.timestamps[max(origin - S - 1, 0) : origin], dtype=np.float64))
    step = hist_t[-1] - hist_t[-2]
    u = fz.universe
    hist_v = [u.clamp(v) for v in hist_v]
    preds = np.empty(horizon)
    clamps = 0
    for h in range(horizon):
        times = np.array(hist_t[-S:])
        spacing = next_spacing(np.append(times, times[-1] + step))[:S]
        x = fz.transform(np.array(hist_v[-S:])[None, :], times[None, :], spacing[None, :])
        p = float(forecaster.predict(x)[0])
        preds[h] = p
        fed = u.clamp(p)
        clamps += fed != p
        hist_v.append(fed)
        hist_t.append(hist_t[-1] + step)
    return Rollout(preds, int(clamps))
