"""Parameter-tree utilities: dotted-name walking and initialization helpers."""

from __future__ import annotations

import dataclasses

import numpy as np

from sfgsr.rng import CounterRng, trunc_normal
from sfgsr.tensor import Tensor


def named_tensors(obj, prefix: str = "") -> list[tuple[str, Tensor]]:
    """Depth-first (name, Tensor) pairs of a dataclass/list/Tensor tree.

    Names are dotted paths; list elements use their index. Non-tensor
    leaves (ints, floats, strings) are skipped.
    """
    out: list[tuple[str, Tensor]] = []
    if isinstance(obj, Tensor):
        out.append((prefix or "value", obj))
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            child = getattr(obj, f.name)
            name = f"{prefix}.{f.name}" if prefix else f.name
            out.extend(named_tensors(child, name))
    elif isinstance(obj, (list, tuple)):
        for i, child in enumerate(obj):
            name = f"{prefix}.{i}" if prefix else str(i)
            out.extend(named_tensors(child, name))
    return out


def param(rng: CounterRng, shape, std: float = 0.02, dtype=np.float32) -> Tensor:
    """Truncated-normal (+-2 std) trainable tensor."""
    n = int(np.prod(shape))
    data = trunc_normal(rng, n, std).reshape(shape).astype(dtype)
    return Tensor(data, requires_grad=True)


def zeros_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones_param(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


def const_param(value: np.ndarray, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(value, dtype=dtype), requires_grad=True)


def cast_tree(obj, dtype):
    """In-place cast of every tensor in a parameter tree (f32 <-> f64)."""
    for _, t in named_tensors(obj):
        t.data = t.data.astype(dtype)
        t.grad = None
    return obj
