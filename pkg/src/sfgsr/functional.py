"""Spatial operators on tensors: convolutions, padding, pixel shuffle, DFT.

Everything here is differentiable through the autodiff tape except where
noted. Convolutions are correlations (no kernel flip), matching the usual
deep-learning convention.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from sfgsr import fft
from sfgsr.tensor import (
    ConfigurationError,
    ShapeError,
    Tensor,
    _apply,
    _apply_multi,
)


def _fold_axis(grad: np.ndarray, idx: np.ndarray, axis: int, out_len: int) -> np.ndarray:
    """Scatter-add grad rows mapped by idx back onto an axis of length out_len."""
    moved = np.moveaxis(grad, axis, 0)
    out = np.zeros((out_len,) + moved.shape[1:], dtype=grad.dtype)
    np.add.at(out, idx, moved)
    return np.moveaxis(out, 0, axis)


def _pad_indices(n: int, pad: int, mode: str) -> np.ndarray:
    i = np.arange(-pad, n + pad)
    if mode == "replicate":
        return np.clip(i, 0, n - 1)
    if mode == "reflect":
        if n == 1:
            return np.zeros_like(i)
        period = 2 * n - 2
        m = np.mod(i, period)
        return np.where(m < n, m, period - m)
    raise ConfigurationError(f"unknown pad mode {mode!r}")


def _pad2d_data(x: np.ndarray, pad: int, mode: str) -> np.ndarray:
    if pad == 0:
        return x
    if mode == "zero":
        cfg = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (pad, pad)]
        return np.pad(x, cfg)
    ri = _pad_indices(x.shape[-2], pad, mode)
    ci = _pad_indices(x.shape[-1], pad, mode)
    return x[..., ri, :][..., ci]


def _unpad2d_grad(g: np.ndarray, pad: int, mode: str, h: int, w: int) -> np.ndarray:
    if pad == 0:
        return g
    if mode == "zero":
        return g[..., pad:pad + h, pad:pad + w]
    ri = _pad_indices(h, pad, mode)
    ci = _pad_indices(w, pad, mode)
    g = _fold_axis(g, ri, g.ndim - 2, h)
    return _fold_axis(g, ci, g.ndim - 1, w)


def pad2d(x: Tensor, pad_hw, mode: str = "reflect") -> Tensor:
    """Pad the last two dims by (pad_bottom, pad_right) amounts (top/left = 0)."""
    pb, pr = pad_hw
    h, w = x.shape[-2], x.shape[-1]
    ri = np.concatenate([np.arange(h), _pad_indices(h, pb, mode)[h + pb:]]) if pb else np.arange(h)
    ci = np.concatenate([np.arange(w), _pad_indices(w, pr, mode)[w + pr:]]) if pr else np.arange(w)
    out = x.data[..., ri, :][..., ci]

    def bwd(g):
        g = _fold_axis(g, ri, g.ndim - 2, h)
        return (_fold_axis(g, ci, g.ndim - 1, w),)

    return _apply((x,), out, bwd)


def crop2d(x: Tensor, h: int, w: int) -> Tensor:
    """Keep the top-left h x w region of the last two dims."""
    hh, ww = x.shape[-2], x.shape[-1]

    def bwd(g):
        cfg = [(0, 0)] * (g.ndim - 2) + [(0, hh - h), (0, ww - w)]
        return (np.pad(g, cfg),)

    return _apply((x,), x.data[..., :h, :w].copy(), bwd)


# -- convolutions -------------------------------------------------------------


def depthwise_conv2d(
    x: Tensor, kernel: Tensor, pad_mode: str = "zero", bias: Optional[Tensor] = None
) -> Tensor:
    """Per-channel 2D correlation with same-size output.

    x: [B, C, H, W], kernel: [C, k, k], k odd, padding k//2 using
    pad_mode in {zero, replicate}. pad_mode "valid" skips padding and
    shrinks the output (used by windowed statistics internally).
    """
    xd, kd = x.data, kernel.data
    if xd.ndim != 4 or kd.ndim != 3:
        raise ShapeError(f"depthwise_conv2d: x {xd.shape}, kernel {kd.shape}")
    if xd.shape[1] != kd.shape[0]:
        raise ShapeError(
            f"depthwise_conv2d: channels {xd.shape} vs kernel {kd.shape}"
        )
    k = kd.shape[-1]
    if kd.shape[-2] != k or k % 2 == 0:
        raise ConfigurationError(f"depthwise kernel must be odd square, got {kd.shape}")
    b, c, h, w = xd.shape
    pad = 0 if pad_mode == "valid" else k // 2
    xp = _pad2d_data(xd, pad, pad_mode) if pad_mode != "valid" else xd
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    out = np.einsum("bchwuv,cuv->bchw", win, kd, optimize=True)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def bwd(g):
        gk = np.einsum("bchwuv,bchw->cuv", win, g, optimize=True)
        gp = np.pad(g, [(0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)])
        gwin = sliding_window_view(gp, (k, k), axis=(2, 3))
        gxp = np.einsum("bchwuv,cuv->bchw", gwin, kd[:, ::-1, ::-1], optimize=True)
        if pad_mode == "valid":
            gx = gxp
        else:
            gx = _unpad2d_grad(gxp, pad, pad_mode, h, w)
        if bias is not None:
            return gx, gk, g.sum(axis=(0, 2, 3))
        return gx, gk

    inputs = (x, kernel, bias) if bias is not None else (x, kernel)
    return _apply(inputs, out, bwd)


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Cross-channel 2D correlation, zero padding k//2, same-size output.

    x: [B, Cin, H, W], kernel: [Cout, Cin, k, k] with k odd.
    """
    xd, kd = x.data, kernel.data
    if xd.ndim != 4 or kd.ndim != 4:
        raise ShapeError(f"conv2d: x {xd.shape}, kernel {kd.shape}")
    if xd.shape[1] != kd.shape[1]:
        raise ShapeError(f"conv2d: input channels {xd.shape} vs kernel {kd.shape}")
    k = kd.shape[-1]
    if kd.shape[-2] != k or k % 2 == 0:
        raise ConfigurationError(f"conv kernel must be odd square, got {kd.shape}")
    b, cin, h, w = xd.shape
    pad = k // 2
    xp = _pad2d_data(xd, pad, "zero")
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    out = np.einsum("bihwuv,oiuv->bohw", win, kd, optimize=True)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    def bwd(g):
        gk = np.einsum("bihwuv,bohw->oiuv", win, g, optimize=True)
        gp = np.pad(g, [(0, 0), (0, 0), (k - 1, k - 1), (k - 1, k - 1)])
        gwin = sliding_window_view(gp, (k, k), axis=(2, 3))
        gxp = np.einsum("bohwuv,oiuv->bihw", gwin, kd[:, :, ::-1, ::-1], optimize=True)
        gx = gxp[:, :, pad:pad + h, pad:pad + w]
        if bias is not None:
            return gx, gk, g.sum(axis=(0, 2, 3))
        return gx, gk

    inputs = (x, kernel, bias) if bias is not None else (x, kernel)
    return _apply(inputs, out, bwd)


# -- pixel shuffle -------------------------------------------------------------


def pixel_shuffle(x: Tensor, s: int) -> Tensor:
    """Rearrange [B, C*s^2, H, W] -> [B, C, s*H, s*W].

    out[b, c, s*i+di, s*j+dj] = in[b, c*s^2 + di*s + dj, i, j].
    """
    xd = x.data
    b, cs2, h, w = xd.shape
    if cs2 % (s * s) != 0:
        raise ShapeError(f"pixel_shuffle: {cs2} channels not divisible by s^2={s * s}")
    c = cs2 // (s * s)
    out = (
        xd.reshape(b, c, s, s, h, w)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(b, c, h * s, w * s)
    )

    def bwd(g):
        gx = (
            g.reshape(b, c, h, s, w, s)
            .transpose(0, 1, 3, 5, 2, 4)
            .reshape(b, cs2, h, w)
        )
        return (gx,)

    return _apply((x,), out, bwd)


def pixel_unshuffle_index(s: int, h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """Index maps (rows, cols) inverting pixel_shuffle; identity check helper."""
    i = np.arange(h * s)
    j = np.arange(w * s)
    return i, j


# -- Fourier transform ----------------------------------------------------------


def dft2(x: Tensor) -> tuple[Tensor, Tensor]:
    """Unnormalized forward 2D DFT over the last two dims of a real tensor.

    Returns (re, im). Dimensions must be powers of two (radix-2 FFT).
    The transform is linear, so the backward pass is its adjoint: the
    real part of the forward transform of the conjugated output gradient.
    """
    xd = x.data
    h, w = xd.shape[-2], xd.shape[-1]
    if not (fft._is_pow2(h) and fft._is_pow2(w)):
        raise ConfigurationError(f"dft2 needs power-of-two dims, got {h}x{w}")
    re, im = fft.fft2_pair(xd, np.zeros_like(xd))

    def bwd(g_re, g_im):
        dre, _ = fft.fft2_pair(g_re, -g_im)
        return (dre,)

    return _apply_multi((x,), (re, im), bwd)


# -- stochastic regularizers ------------------------------------------------------


def dropout(x: Tensor, rate: float, rng) -> Tensor:
    """Inverted dropout; pass rate=0 or rng=None to disable."""
    if rate <= 0.0 or rng is None:
        return x
    keep = 1.0 - rate
    mask = (rng.uniform(x.size).reshape(x.shape) >= rate).astype(x.dtype) / keep
    return x * Tensor(mask)


def drop_path(x: Tensor, rate: float, rng) -> Tensor:
    """Stochastic depth over the batch dim; kept paths scaled by 1/keep."""
    if rate <= 0.0 or rng is None:
        return x
    if rate >= 1.0:
        return x * Tensor(np.zeros((x.shape[0],) + (1,) * (x.ndim - 1), dtype=x.dtype))
    keep = 1.0 - rate
    mask = (rng.uniform(x.shape[0]) >= rate).astype(x.dtype) / keep
    return x * Tensor(mask.reshape((x.shape[0],) + (1,) * (x.ndim - 1)))
