"""A small dense-tensor engine with reverse-mode differentiation.

Feature maps use a ``(batch, channels, height, width)`` layout. Tensors are
capped at rank 4 and only broadcast in the ways the network needs (bias
vectors, per-channel scales). Every op records a closure that maps the
output gradient to input gradients; ``Tensor.backward`` walks the recorded
graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import GraphCycle, InputTooShort, ShapeMismatch, UnrecordedTensor, ValidationError

MAX_RANK = 4

_grad_enabled = True
_mac_counters: list[Counter] = []


@contextlib.contextmanager
def no_grad():
    """Run ops without recording a graph."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def count_macs():
    """Collect multiply-accumulate counts of every op run inside the block.

    Keys are op names (``conv2d``, ``conv1d_dilated``, ``linear``, ...).
    """
    counter: Counter = Counter()
    _mac_counters.append(counter)
    try:
        yield counter
    finally:
        _mac_counters.remove(counter)


def _tally(op: str, macs: int) -> None:
    for c in _mac_counters:
        c[op] += int(macs)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim > MAX_RANK:
            raise ShapeMismatch(f"tensor rank {arr.ndim} exceeds {MAX_RANK}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- graph ----------------------------------------------------------------
    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf
        parameter that requires a gradient."""
        if not self.requires_grad:
            raise UnrecordedTensor("tensor does not require grad and has no recorded graph")
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.shape:
                raise ShapeMismatch(f"gradient shape {grad.shape} != tensor shape {self.shape}")

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- operator sugar ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def sum(self):
        return tsum(self)

    def mean(self):
        return mean(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _topological_order(root: Tensor) -> list[Tensor]:
    """Iterative DFS post-order; raises on a back edge."""
    order: list[Tensor] = []
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    while stack:
        node, i = stack.pop()
        key = id(node)
        if i == 0:
            if state.get(key) == 2:
                continue
            if state.get(key) == 1:
                raise GraphCycle("cycle detected in the recorded graph")
            state[key] = 1
        if i < len(node._parents):
            stack.append((node, i + 1))
            parent = node._parents[i]
            pstate = state.get(id(parent))
            if pstate == 1:
                raise GraphCycle("cycle detected in the recorded graph")
            if pstate is None and parent.requires_grad:
                stack.append((parent, 0))
        else:
            state[key] = 2
            order.append(node)
    return order


def _result(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise and structural ops -----------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch(f"cannot add shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return _result(a.data * c, (a,), lambda g: (g * c,))
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch(f"cannot multiply shapes {a.shape} and {b.shape}") from exc

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(data, (a, b), backward)


def tsum(a: Tensor) -> Tensor:
    return _result(np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Tensor) -> Tensor:
    n = a.data.size
    return _result(
        np.array(a.data.mean()), (a,), lambda g: (np.broadcast_to(g / n, a.shape).copy(),)
    )


def tabs(a: Tensor) -> Tensor:
    sign = np.sign(a.data)
    return _result(np.abs(a.data), (a,), lambda g: (g * sign,))


def reshape(a: Tensor, shape) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeMismatch(f"cannot reshape {a.shape} to {shape}") from exc
    if data.ndim > MAX_RANK:
        raise ShapeMismatch(f"tensor rank {data.ndim} exceeds {MAX_RANK}")
    return _result(data, (a,), lambda g: (g.reshape(a.shape),))


def flatten(a: Tensor) -> Tensor:
    """Keep the leading (batch) axis, flatten the rest."""
    return reshape(a, (a.shape[0], -1))


def take_last(a: Tensor, start: int, stop: int) -> Tensor:
    """Slice ``[..., start:stop]``."""
    data = a.data[..., start:stop]

    def backward(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        return (full,)

    return _result(data.copy(), (a,), backward)


def concat_last(parts: Sequence[Tensor]) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    lead = parts[0].shape[:-1]
    if any(p.shape[:-1] != lead for p in parts):
        raise ShapeMismatch("concat_last needs identical leading dimensions")
    data = np.concatenate([p.data for p in parts], axis=-1)
    bounds = np.cumsum([0] + [p.shape[-1] for p in parts])

    def backward(g):
        return tuple(g[..., bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _result(data, parts, backward)


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean absolute error."""
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    return mean(tabs(add(pred, Tensor(-target))))


# -- layer primitives ---------------------------------------------------------


def _as_batched(x: Tensor, rank: int) -> tuple[Tensor, bool]:
    if x.ndim == rank - 1:
        return reshape(x, (1,) + x.shape), True
    if x.ndim != rank:
        raise ShapeMismatch(f"expected rank {rank - 1} or {rank} input, got shape {x.shape}")
    return x, False


def conv2d_valid(x: Tensor, w: Tensor) -> Tensor:
    """Cross-correlation with no padding and stride 1.

    ``x`` is ``(B, C, H, W)`` or ``(C, H, W)``; ``w`` is ``(F, C, kh, kw)``.
    """
    x = _as_tensor(x)
    w = _as_tensor(w)
    xb, squeeze = _as_batched(x, 4)
    if w.ndim != 4:
        raise ShapeMismatch(f"kernel must be (F, C, kh, kw), got {w.shape}")
    B, C, H, W = xb.shape
    F, Cw, kh, kw = w.shape
    if Cw != C:
        raise ShapeMismatch(f"kernel expects {Cw} input channels, input has {C}")
    if kh > H or kw > W:
        raise ShapeMismatch(f"kernel {kh}x{kw} larger than input {H}x{W}")
    Ho, Wo = H - kh + 1, W - kw + 1
    win = sliding_window_view(xb.data, (kh, kw), axis=(2, 3))  # B C Ho Wo kh kw
    out = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3]))  # B Ho Wo F
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    _tally("conv2d", B * F * C * kh * kw * Ho * Wo)

    def backward(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # F C kh kw
        gx = np.zeros_like(xb.data)
        for i in range(kh):
            for j in range(kw):
                gx[:, :, i : i + Ho, j : j + Wo] += np.einsum("bfhw,fc->bchw", g, w.data[:, :, i, j])
        return gx, gw

    res = _result(out, (xb, w), backward)
    return reshape(res, res.shape[1:]) if squeeze else res


def conv1d_dilated(x: Tensor, f: Tensor, stride: int) -> Tensor:
    """Dilated filtering along the last axis: ``out[i] = sum_k x[i + s*k] * f[k]``."""
    x = _as_tensor(x)
    f = _as_tensor(f)
    s = int(stride)
    if s < 1:
        raise ShapeMismatch(f"dilation stride must be >= 1, got {s}")
    if f.ndim != 1 or f.shape[0] < 1:
        raise ShapeMismatch(f"filter must be a non-empty vector, got {f.shape}")
    K = f.shape[0]
    L = x.shape[-1]
    span = (K - 1) * s + 1
    if L < span:
        raise InputTooShort(f"input length {L} shorter than dilated filter span {span}")
    Lo = L - span + 1
    out = np.zeros(x.shape[:-1] + (Lo,))
    for k in range(K):
        out += x.data[..., s * k : s * k + Lo] * f.data[k]
    _tally("conv1d_dilated", out.size * K)

    def backward(g):
        gx = np.zeros_like(x.data)
        gf = np.empty(K)
        for k in range(K):
            gx[..., s * k : s * k + Lo] += g * f.data[k]
            gf[k] = np.sum(g * x.data[..., s * k : s * k + Lo])
        return gx, gf

    return _result(out, (x, f), backward)


def avg_pool2d(x: Tensor, kh: int, kw: int) -> Tensor:
    """Stride-1 mean pooling with no padding."""
    x = _as_tensor(x)
    xb, squeeze = _as_batched(x, 4)
    B, C, H, W = xb.shape
    if not (1 <= kh <= H and 1 <= kw <= W):
        raise ShapeMismatch(f"pool kernel {kh}x{kw} does not fit input {H}x{W}")
    Ho, Wo = H - kh + 1, W - kw + 1
    out = sliding_window_view(xb.data, (kh, kw), axis=(2, 3)).mean(axis=(4, 5))
    scale = 1.0 / (kh * kw)

    def backward(g):
        gx = np.zeros_like(xb.data)
        gs = g * scale
        for i in range(kh):
            for j in range(kw):
                gx[:, :, i : i + Ho, j : j + Wo] += gs
        return (gx,)

    res = _result(out, (xb,), backward)
    return reshape(res, res.shape[1:]) if squeeze else res


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` with ``x`` of shape (B, D) and ``w`` of shape (D, H)."""
    x = _as_tensor(x)
    w = _as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"linear: input {x.shape} incompatible with weight {w.shape}")
    out = x.data @ w.data
    _tally("linear", x.shape[0] * w.shape[0] * w.shape[1])
    parents: tuple[Tensor, ...] = (x, w)
    if b is not None:
        b = _as_tensor(b)
        if b.shape != (w.shape[1],):
            raise ShapeMismatch(f"bias shape {b.shape} != ({w.shape[1]},)")
        out = out + b.data
        parents = (x, w, b)

    def backward(g):
        grads = [g @ w.data.T, x.data.T @ g]
        if b is not None:
            grads.append(g.sum(axis=0))
        return grads

    return _result(out, parents, backward)


@dataclass
class BatchNormState:
    """Per-channel affine parameters and running statistics."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.1
    mode: str = "train"

    @classmethod
    def create(cls, channels: int, epsilon: float = 1e-5, momentum: float = 0.1) -> "BatchNormState":
        if epsilon <= 0:
            raise ValidationError("epsilon must be positive")
        return cls(
            gamma=Tensor(np.ones(channels), requires_grad=True),
            beta=Tensor(np.zeros(channels), requires_grad=True),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
            epsilon=epsilon,
            momentum=momentum,
        )

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


def batch_norm(x: Tensor, state: BatchNormState) -> Tensor:
    """Normalise every channel (axis 1) over all remaining axes."""
    x = _as_tensor(x)
    if x.ndim < 2 or x.shape[1] != state.channels:
        raise ShapeMismatch(
            f"batch norm over {state.channels} channels got input of shape {x.shape}"
        )
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, -1) + (1,) * (x.ndim - 2)
    gamma, beta = state.gamma, state.beta
    g_b = gamma.data.reshape(bshape)

    if state.mode == "train":
        m = x.data.size // state.channels
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        invstd = 1.0 / np.sqrt(var + state.epsilon)
        xhat = (x.data - mu.reshape(bshape)) * invstd.reshape(bshape)
        unbiased = var * m / (m - 1) if m > 1 else var
        mom = state.momentum
        state.running_mean = (1 - mom) * state.running_mean + mom * mu
        state.running_var = (1 - mom) * state.running_var + mom * unbiased

        def backward(g):
            dxhat = g * g_b
            s1 = dxhat.sum(axis=axes).reshape(bshape)
            s2 = (dxhat * xhat).sum(axis=axes).reshape(bshape)
            dx = invstd.reshape(bshape) / m * (m * dxhat - s1 - xhat * s2)
            return dx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    else:
        invstd = 1.0 / np.sqrt(state.running_var + state.epsilon)
        xhat = (x.data - state.running_mean.reshape(bshape)) * invstd.reshape(bshape)

        def backward(g):
            return (
                g * g_b * invstd.reshape(bshape),
                (g * xhat).sum(axis=axes),
                g.sum(axis=axes),
            )

    out = xhat * g_b + beta.data.reshape(bshape)
    return _result(out, (x, gamma, beta), backward)
