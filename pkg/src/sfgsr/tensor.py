"""Dense tensors with tape-based reverse-mode autodiff.

Tensors wrap row-major numpy arrays (float32 by default, float64 for
gradient checking). Operations record themselves on the currently active
Tape; backward() replays the tape in reverse and accumulates gradients
into every tensor that has requires_grad set.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ConfigurationError(ValueError):
    """A configuration value violates a precondition."""


class UsageError(RuntimeError):
    """An API contract was violated (e.g. backward on a non-scalar)."""


_FLOAT_DTYPES = (np.float32, np.float64)

# Test hook: when set, gelu's backward rule is deliberately perturbed so the
# gradient-check harness can prove it detects broken rules.
_FAULT_INJECT = {"gelu_backward": False}


def _as_array(value, dtype=None) -> np.ndarray:
    a = np.asarray(value)
    if a.dtype not in _FLOAT_DTYPES:
        a = a.astype(np.float64 if a.dtype == np.float64 else np.float32)
    if dtype is not None:
        a = a.astype(dtype, copy=False)
    return a


class Tensor:
    """N-dimensional float array, optionally tracked for autodiff."""

    __slots__ = ("data", "requires_grad", "grad", "_tracked")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._tracked = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def zero_grad(self):
        self.grad = None

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        return add(self, _coerce(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _coerce(other, self.dtype))

    def __rsub__(self, other):
        return sub(_coerce(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, _coerce(other, self.dtype))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _coerce(other, self.dtype))

    def __rtruediv__(self, other):
        return div(_coerce(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _coerce(other, self.dtype))

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)


def _coerce(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


# -- tape ------------------------------------------------------------------


class _Node:
    __slots__ = ("outputs", "inputs", "bwd")

    def __init__(self, outputs, inputs, bwd):
        self.outputs = outputs
        self.inputs = inputs
        self.bwd = bwd


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of operations; single-owner during recording."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False

    def reset(self):
        self._nodes.clear()
        self._consumed = False

    def backward(self, loss: Tensor):
        backward(self, loss)


def _active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _apply(inputs: Sequence[Tensor], out_data, bwd: Callable) -> Tensor:
    """Build the output tensor and record the op if a tape is listening."""
    out = Tensor(out_data)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad or t._tracked for t in inputs):
        out._tracked = True
        tape._nodes.append(_Node([out], list(inputs), bwd))
    return out


def _apply_multi(inputs: Sequence[Tensor], out_datas, bwd: Callable) -> tuple:
    outs = tuple(Tensor(d) for d in out_datas)
    tape = _active_tape()
    if tape is not None and any(t.requires_grad or t._tracked for t in inputs):
        for o in outs:
            o._tracked = True
        tape._nodes.append(_Node(list(outs), list(inputs), bwd))
    return outs


def backward(tape: Tape, loss: Tensor):
    """Accumulate dLoss/dt into .grad of every requires_grad tensor on the tape.

    The tape is consumed; call tape.reset() before reusing it.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward expects a scalar loss, got shape {loss.shape}")
    if tape._consumed:
        raise UsageError("tape already consumed by backward; call reset() first")
    tape._consumed = True

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape._nodes):
        out_grads = [grads.get(id(o)) for o in node.outputs]
        if all(g is None for g in out_grads):
            continue
        out_grads = [
            g if g is not None else np.zeros_like(o.data)
            for g, o in zip(out_grads, node.outputs)
        ]
        in_grads = node.bwd(*out_grads)
        for t, g in zip(node.inputs, in_grads):
            if g is None:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + g
            else:
                grads[key] = g
    # write leaf gradients
    seen = set()
    for node in tape._nodes:
        for t in node.inputs:
            if t.requires_grad and id(t) not in seen and id(t) in grads:
                seen.add(id(t))
                g = grads[id(t)].astype(t.data.dtype, copy=False)
                t.grad = g if t.grad is None else t.grad + g
    if loss.requires_grad and id(loss) not in seen:
        loss.grad = np.ones_like(loss.data)


# -- broadcasting helpers ---------------------------------------------------


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape` (undo numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise binary ------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return _apply(
        (a, b),
        a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _apply(
        (a, b),
        a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    return _apply(
        (a, b),
        ad * bd,
        lambda g: (_unbroadcast(g * bd, a.shape), _unbroadcast(g * ad, b.shape)),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data
    out = ad / bd

    def bwd(g):
        return (
            _unbroadcast(g / bd, a.shape),
            _unbroadcast(-g * ad / (bd * bd), b.shape),
        )

    return _apply((a, b), out, bwd)


# -- elementwise unary --------------------------------------------------------


def neg(a: Tensor) -> Tensor:
    return _apply((a,), -a.data, lambda g: (-g,))


def texp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _apply((a,), out, lambda g: (g * out,))


def tlog(a: Tensor) -> Tensor:
    ad = a.data
    return _apply((a,), np.log(ad), lambda g: (g / ad,))


def tsqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _apply((a,), out, lambda g: (g * (0.5 / out),))


def tsin(a: Tensor) -> Tensor:
    ad = a.data
    return _apply((a,), np.sin(ad), lambda g: (g * np.cos(ad),))


def tabs(a: Tensor) -> Tensor:
    ad = a.data
    # subgradient 0 at zero
    return _apply((a,), np.abs(ad), lambda g: (g * np.sign(ad),))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _apply((a,), ad * ad, lambda g: (g * (2.0 * ad),))


def clamp_max(a: Tensor, limit: float) -> Tensor:
    ad = a.data
    mask = (ad <= limit).astype(ad.dtype)
    return _apply((a,), np.minimum(ad, limit), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    ad = a.data
    out = np.empty_like(ad)
    pos = ad >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-ad[pos]))
    ex = np.exp(ad[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _apply((a,), out, lambda g: (g * out * (1.0 - out),))


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(a: Tensor) -> Tensor:
    """Exact GELU x*Phi(x) via the error function (not the tanh approximation)."""
    ad = a.data
    cdf = 0.5 * (1.0 + erf(ad * _INV_SQRT2))
    out = ad * cdf

    def bwd(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * ad * ad)
        d = cdf + ad * pdf
        if _FAULT_INJECT["gelu_backward"]:
            d = d * 1.01
        return (g * d,)

    return _apply((a,), out, bwd)


# -- reductions ----------------------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ad = a.data
    out = ad.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(np.asarray(g), ad.shape).copy(),)
        g2 = g
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(a_ % ad.ndim for a_ in axes):
                g2 = np.expand_dims(g2, ax)
        return (np.broadcast_to(g2, ad.shape).copy(),)

    return _apply((a,), out, bwd)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    ad = a.data
    if axis is None:
        n = ad.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= ad.shape[ax]
    s = tsum(a, axis=axis, keepdims=keepdims)
    return mul(s, Tensor(np.asarray(1.0 / n, dtype=ad.dtype)))


# -- shape ops -------------------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _apply((a,), a.data.reshape(shape), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _apply((a,), a.data.transpose(axes), lambda g: (g.transpose(inv),))


def roll2d(a: Tensor, shift_h: int, shift_w: int, axes=(-2, -1)) -> Tensor:
    """Toroidal roll along two axes; exact inverse is the negated shift."""
    out = np.roll(a.data, (shift_h, shift_w), axis=axes)
    return _apply(
        (a,), out, lambda g: (np.roll(g, (-shift_h, -shift_w), axis=axes),)
    )


def take_rows(a: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows of a 2-D tensor; backward scatter-adds."""
    idx = np.asarray(index)
    rows = a.shape[0]

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx.reshape(-1), g.reshape(-1, a.shape[1]))
        return (ga,)

    if a.ndim != 2:
        raise ShapeError(f"take_rows expects 2-D input, got {a.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        raise ShapeError(f"index out of range for {rows} rows")
    return _apply((a,), a.data[idx], bwd)


def tslice(a: Tensor, key) -> Tensor:
    """Basic (non-overlapping) slicing; backward scatters into zeros."""
    out = a.data[key]

    def bwd(g):
        ga = np.zeros_like(a.data)
        ga[key] = g
        return (ga,)

    return _apply((a,), out.copy(), bwd)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    datas = [t.data for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _apply(tuple(tensors), np.concatenate(datas, axis=axis), bwd)


def split(a: Tensor, sections: int, axis: int) -> tuple:
    parts = np.split(a.data, sections, axis=axis)

    def bwd(*gs):
        return (np.concatenate(gs, axis=axis),)

    return _apply_multi((a,), parts, bwd)


# -- linear algebra ----------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix multiply with numpy broadcasting over leading dims."""
    ad, bd = a.data, b.data
    if ad.shape[-1] != bd.shape[-2 if bd.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dims mismatch: {ad.shape} @ {bd.shape}")
    out = ad @ bd

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape)
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape)
        return ga, gb

    return _apply((a, b), out, bwd)


def linear(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """y[..., j] = sum_i x[..., i] * w[i, j] + b[j]."""
    xd, wd = x.data, w.data
    if xd.shape[-1] != wd.shape[0]:
        raise ShapeError(
            f"linear: input last dim {xd.shape} incompatible with weight {wd.shape}"
        )
    out = xd @ wd
    if b is not None:
        if b.shape != (wd.shape[1],):
            raise ShapeError(f"linear: bias {b.shape} vs weight {wd.shape}")
        out = out + b.data

    def bwd(g):
        gx = g @ wd.T
        gw = xd.reshape(-1, xd.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = None
        if b is not None:
            gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return (gx, gw, gb) if b is not None else (gx, gw)

    inputs = (x, w, b) if b is not None else (x, w)
    return _apply(inputs, out, bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtracted)."""
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _apply((x,), out, bwd)


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last dim, then scale/shift."""
    xd = x.data
    c = xd.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(
            f"layernorm: gamma {gamma.shape} / beta {beta.shape} vs channels {c}"
        )
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bwd(g):
        gg = g * gamma.data
        gxhat_mean = gg.mean(axis=-1, keepdims=True)
        gxhat_xhat_mean = (gg * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gg - gxhat_mean - xhat * gxhat_xhat_mean)
        ggamma = (g * xhat).reshape(-1, c).sum(axis=0)
        gbeta = g.reshape(-1, c).sum(axis=0)
        return gx, ggamma, gbeta

    return _apply((x, gamma, beta), out, bwd)


# -- gradient checking -----------------------------------------------------------


class GradCheckReport:
    def __init__(self, max_rel_err: float, tol: float):
        self.max_rel_err = max_rel_err
        self.tol = tol
        self.passed = max_rel_err <= tol

    def __repr__(self):
        return f"GradCheckReport(max_rel_err={self.max_rel_err:.3e}, pass={self.passed})"


def grad_check(f, x: Tensor, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar f(x) against central differences.

    Runs in float64; error metric is max |g_a - g_fd| / max(1, |g_fd|).
    """
    x64 = Tensor(x.data.astype(np.float64), requires_grad=True)
    with Tape() as tape:
        loss = f(x64)
    backward(tape, loss)
    g_analytic = x64.grad
    if g_analytic is None:
        g_analytic = np.zeros_like(x64.data)

    flat = x64.data.reshape(-1)
    g_fd = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(Tensor(x64.data.copy())).item()
        flat[i] = orig - h
        fm = f(Tensor(x64.data.copy())).item()
        flat[i] = orig
        g_fd[i] = (fp - fm) / (2.0 * h)
    g_fd = g_fd.reshape(x64.shape)

    err = np.abs(g_analytic - g_fd) / np.maximum(1.0, np.abs(g_fd))
    return GradCheckReport(float(err.max()) if err.size else 0.0, tol)
