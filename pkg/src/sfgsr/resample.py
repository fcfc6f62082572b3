"""Bicubic resampling with the Catmull-Rom kernel (a = -0.5).

Half-pixel-center coordinate convention with edge clamping; separable,
implemented as two dense weight-matrix products. Deterministic and not
part of any gradient path.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from sfgsr.tensor import ConfigurationError, Tensor

_A = -0.5


def cubic_weight(t: np.ndarray) -> np.ndarray:
    """Catmull-Rom cubic kernel evaluated at offsets t."""
    t = np.abs(t)
    t2 = t * t
    t3 = t2 * t
    w = np.where(
        t <= 1.0,
        (_A + 2.0) * t3 - (_A + 3.0) * t2 + 1.0,
        np.where(t < 2.0, _A * t3 - 5.0 * _A * t2 + 8.0 * _A * t - 4.0 * _A, 0.0),
    )
    return w


def _axis_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense [n_out, n_in] resampling matrix with clamped 4-tap cubic rows."""
    ratio = n_in / n_out
    dst = np.arange(n_out)
    src = (dst + 0.5) * ratio - 0.5
    base = np.floor(src).astype(np.int64)
    mat = np.zeros((n_out, n_in))
    for tap in range(-1, 3):
        idx = base + tap
        w = cubic_weight(src - idx)
        idx = np.clip(idx, 0, n_in - 1)
        np.add.at(mat, (dst, idx), w)
    return mat


def bicubic_resize(x, scale) -> Tensor:
    """Resize the last two dims by `scale` (float or Fraction).

    Accepts [H,W], [C,H,W] or [B,C,H,W] tensors/arrays.
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    h, w = data.shape[-2], data.shape[-1]
    frac = Fraction(scale).limit_denominator(10**6)
    h_out = int(h * frac)
    w_out = int(w * frac)
    if h_out <= 0 or w_out <= 0:
        raise ConfigurationError(f"bicubic_resize: target dims {h_out}x{w_out}")
    if h_out == h and w_out == w:
        return Tensor(data.copy())
    mh = _axis_matrix(h, h_out).astype(data.dtype)
    mw = _axis_matrix(w, w_out).astype(data.dtype)
    flat = data.reshape(-1, h, w)
    out = np.einsum("oh,nhw,pw->nop", mh, flat, mw, optimize=True)
    return Tensor(out.reshape(data.shape[:-2] + (h_out, w_out)))
