"""Nesterov-accelerated Adam and a reduce-on-plateau learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonFiniteGrad, ShapeMismatch, ValidationError
from .nn import Parameter


@dataclass
class NadamState:
    step: int = 0
    mu_product: float = 1.0
    exp_avg: list[np.ndarray] = field(default_factory=list)
    exp_avg_sq: list[np.ndarray] = field(default_factory=list)


def nadam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: NadamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    momentum_decay: float = 4e-3,
) -> None:
    """One in-place NAdam update.

    Momentum warms up through ``mu_t = beta1 * (1 - 0.5 * 0.96**(t * momentum_decay))``.
    """
    if len(params) != len(grads):
        raise ShapeMismatch("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGrad("non-finite gradient")
    if not state.exp_avg:
        state.exp_avg = [np.zeros_like(p) for p in params]
        state.exp_avg_sq = [np.zeros_like(p) for p in params]
    beta1, beta2 = betas
    state.step += 1
    t = state.step
    mu = beta1 * (1.0 - 0.5 * 0.96 ** (t * momentum_decay))
    mu_next = beta1 * (1.0 - 0.5 * 0.96 ** ((t + 1) * momentum_decay))
    state.mu_product *= mu
    mu_product_next = state.mu_product * mu_next
    bias_correction2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.exp_avg, state.exp_avg_sq):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        denom = np.sqrt(v / bias_correction2) + eps
        p -= lr * (1.0 - mu) / (1.0 - state.mu_product) * g / denom
        p -= lr * mu_next / (1.0 - mu_product_next) * m / denom


class NAdam:
    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = NadamState()

    def step(self) -> None:
        # a parameter untouched by this step's loss still advances its moments
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        nadam_step([p.data for p in self.params], grads, self.state, self.lr, self.betas, self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


class ReduceLROnPlateau:
    """Relative-threshold plateau schedule for a minimised metric.

    A reduction whose size would be ``<= eps`` is skipped, so the rate stays
    above ``eps``.
    """

    def __init__(self, optimizer, factor: float = 0.5, patience: int = 5, threshold: float = 1e-5, eps: float = 1e-5):
        if not 0 < factor < 1:
            raise ValidationError(f"factor must be in (0, 1), got {factor}")
        if patience < 0:
            raise ValidationError(f"patience must be >= 0, got {patience}")
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.eps = eps
        self.best = math.inf
        self.num_bad = 0
        self.reductions = 0

    def step(self, metric: float) -> bool:
        """Record one epoch's metric; return True if the rate was reduced."""
        if math.isnan(metric):
            metric = math.inf
        if metric < self.best * (1.0 - self.threshold):
            self.best = metric
            self.num_bad = 0
        else:
            self.num_bad += 1
        if self.num_bad > self.patience:
            self.num_bad = 0
            old = self.optimizer.lr
            new = old * self.factor
            if old - new > self.eps:
                self.optimizer.lr = new
                self.reductions += 1
                return True
        return False
