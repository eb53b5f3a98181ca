"""Parameter containers on top of the engine, plus a finite-difference checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from . import engine
from .engine import BatchNormState, Tensor
from .errors import ShapeMismatch


class Parameter(Tensor):
    """A leaf tensor owned by a Module. ``requires_grad=False`` freezes it."""

    def __init__(self, data, requires_grad: bool = True, name: str | None = None):
        super().__init__(data, requires_grad=requires_grad, name=name)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


class Module:
    training: bool = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self.named_children():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def _own_parameters(self) -> Iterator[tuple[str, Parameter]]:
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        yield f"{name}.{i}", item

    def named_parameters(self, include_frozen: bool = True) -> Iterator[tuple[str, Parameter]]:
        for mod_name, mod in self.named_modules():
            for name, p in mod._own_parameters():
                if include_frozen or p.requires_grad:
                    yield (f"{mod_name}.{name}" if mod_name else name), p

    def parameters(self, include_frozen: bool = False) -> list[Parameter]:
        return [p for _, p in self.named_parameters(include_frozen)]

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for mod_name, mod in self.named_modules():
            for name, buf in mod._own_buffers():
                yield (f"{mod_name}.{name}" if mod_name else name), buf

    def _own_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(())

    def _set_buffer(self, name: str, value: np.ndarray) -> None:
        raise KeyError(name)

    def zero_grad(self) -> None:
        for p in self.parameters(include_frozen=True):
            p.grad = None

    def train(self, mode: bool = True) -> "Module":
        for _, mod in self.named_modules():
            mod.training = mode
            mod._on_mode_change(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def _on_mode_change(self, mode: bool) -> None:
        pass

    def freeze(self) -> "Module":
        for p in self.parameters(include_frozen=True):
            p.requires_grad = False
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {name: p.data.copy() for name, p in self.named_parameters()}
        out.update({name: np.array(b, copy=True) for name, b in self.named_buffers()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        expected = set(params) | set(buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            extra = sorted(set(state) - expected)
            raise KeyError(f"state mismatch: missing={missing} unexpected={extra}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeMismatch(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()
        modules = dict(self.named_modules())
        for name in buffers:
            mod_name, _, attr = name.rpartition(".")  # buffers are never list-held
            modules[mod_name]._set_buffer(attr, np.asarray(state[name], dtype=np.float64).copy())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters(include_frozen=True))


class BatchNorm2d(Module):
    def __init__(self, channels: int, epsilon: float = 1e-5, momentum: float = 0.1):
        self.state = BatchNormState.create(channels, epsilon, momentum)
        self.gamma = Parameter(self.state.gamma.data)
        self.beta = Parameter(self.state.beta.data)
        self.state.gamma, self.state.beta = self.gamma, self.beta

    def forward(self, x: Tensor) -> Tensor:
        return engine.batch_norm(x, self.state)

    def _own_buffers(self):
        yield "running_mean", self.state.running_mean
        yield "running_var", self.state.running_var

    def _set_buffer(self, name, value):
        if name not in ("running_mean", "running_var"):
            raise KeyError(name)
        setattr(self.state, name, value)

    def _on_mode_change(self, mode: bool) -> None:
        self.state.mode = "train" if mode else "eval"


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        self.weight = Parameter(uniform_init(rng, (in_features, out_features), in_features))
        self.bias = Parameter(uniform_init(rng, (out_features,), in_features))

    def forward(self, x: Tensor) -> Tensor:
        return engine.linear(x, self.weight, self.bias)


def bilinear_head(x: Tensor, w1, b1, w2, b2) -> Tensor:
    """Two stacked affine maps with a rectifier between them; returns shape (B,)."""
    hidden = engine.relu(engine.linear(x, w1, b1))
    out = engine.linear(hidden, w2, b2)
    return engine.reshape(out, (out.shape[0],))


class BilinearHead(Module):
    def __init__(self, in_features: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(in_features, hidden, rng)
        self.fc2 = Linear(hidden, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 2:
            x = engine.flatten(x)
        return bilinear_head(x, self.fc1.weight, self.fc1.bias, self.fc2.weight, self.fc2.bias)


# -- finite-difference checking ---------------------------------------------


@dataclass
class GradCheckReport:
    """Max relative deviation between analytic and central-difference
    gradients, keyed by dotted parameter name."""

    tolerance: float
    deviations: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(d <= self.tolerance for d in self.deviations.values())

    @property
    def worst(self) -> float:
        return max(self.deviations.values(), default=0.0)

    def by_layer(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for name, dev in self.deviations.items():
            layer = name.rpartition(".")[0] or name
            out[layer] = max(out.get(layer, 0.0), dev)
        return out

    def failures(self) -> dict[str, float]:
        return {k: v for k, v in self.deviations.items() if v > self.tolerance}


def relative_deviation(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise gap, relative to the larger gradient magnitude
    of the tensor. Zero when both are identically zero."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric)) / scale)


def grad_check(
    module: Module,
    loss_fn: Callable[[], Tensor],
    tolerance: float = 1e-4,
    step: float = 1e-4,
) -> GradCheckReport:
    """Compare backward() against central differences for every trainable
    parameter of ``module``. ``loss_fn`` must rebuild the scalar loss from
    scratch on each call. Batch-norm running statistics are restored
    afterwards."""
    report = GradCheckReport(tolerance)
    params = list(module.named_parameters(include_frozen=False))
    if not params:
        return report
    buffers = {name: np.array(b, copy=True) for name, b in module.named_buffers()}

    module.zero_grad()
    loss_fn().backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params}

    with engine.no_grad():
        for name, p in params:
            numeric = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            nflat = numeric.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                up = loss_fn().item()
                flat[i] = orig - step
                down = loss_fn().item()
                flat[i] = orig
                nflat[i] = (up - down) / (2 * step)
            report.deviations[name] = relative_deviation(analytic[name], numeric)

    if buffers:
        state = module.state_dict()
        state.update(buffers)
        module.load_state_dict(state)
    module.zero_grad()
    return report
