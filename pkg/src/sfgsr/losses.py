"""Composite training loss (L1 + SSIM + edge + frequency) and image metrics.

Loss functions take [B, C, H, W] tensors and return scalar tensors that
are differentiable through the tape. Metric helpers (psnr, mae, ssim
score) accept tensors or plain arrays and return floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sfgsr import functional as F
from sfgsr.degrade import gaussian_kernel
from sfgsr.tensor import (
    ConfigurationError,
    ShapeError,
    Tensor,
    tabs,
    tmean,
    tsqrt,
    tslice,
    tsum,
)

FREQ_EPS = 1e-12
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass
class LossWeights:
    lambda_l1: float = 1.0
    lambda_ssim: float = 0.1
    lambda_edge: float = 0.1
    lambda_freq: float = 0.05
    use_l1: bool = True
    use_ssim: bool = True
    use_edge: bool = True
    use_freq: bool = True

    @classmethod
    def only(cls, *terms: str) -> "LossWeights":
        """Ablation helper: enable just the named terms (l1/ssim/edge/freq)."""
        w = cls(use_l1=False, use_ssim=False, use_edge=False, use_freq=False)
        for t in terms:
            setattr(w, f"use_{t}", True)
        return w


def _check_pair(sr: Tensor, hr: Tensor):
    if sr.shape != hr.shape:
        raise ShapeError(f"shape mismatch: sr {sr.shape} vs hr {hr.shape}")


def l1_loss(sr: Tensor, hr: Tensor) -> Tensor:
    """Mean absolute difference over all elements."""
    _check_pair(sr, hr)
    return tmean(tabs(sr - hr))


def ssim(sr: Tensor, hr: Tensor) -> Tensor:
    """Structural similarity with the standard 11x11 sigma=1.5 window.

    Valid-region windowed statistics, L=1.0; channels averaged equally.
    Differentiable; returns a scalar tensor in [-1, 1].
    """
    _check_pair(sr, hr)
    if sr.ndim != 4:
        raise ShapeError(f"ssim expects [B,C,H,W], got {sr.shape}")
    b, c, h, w = sr.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ConfigurationError(
            f"ssim: image {h}x{w} smaller than window {SSIM_WINDOW}"
        )
    win = gaussian_kernel(SSIM_SIGMA, SSIM_WINDOW).astype(sr.dtype)
    kernel = Tensor(np.broadcast_to(win, (c,) + win.shape).copy())

    def smooth(t):
        return F.depthwise_conv2d(t, kernel, pad_mode="valid")

    c1 = float(SSIM_K1**2)
    c2 = float(SSIM_K2**2)
    mu1 = smooth(sr)
    mu2 = smooth(hr)
    mu1_sq = mu1 * mu1
    mu2_sq = mu2 * mu2
    mu12 = mu1 * mu2
    sigma1 = smooth(sr * sr) - mu1_sq
    sigma2 = smooth(hr * hr) - mu2_sq
    sigma12 = smooth(sr * hr) - mu12
    num = (mu12 * 2.0 + c1) * (sigma12 * 2.0 + c2)
    den = (mu1_sq + mu2_sq + c1) * (sigma1 + sigma2 + c2)
    return tmean(num / den)


def ssim_loss(sr: Tensor, hr: Tensor) -> Tensor:
    return 1.0 - ssim(sr, hr)


def edge_loss(sr: Tensor, hr: Tensor) -> Tensor:
    """Mean L1 gap between forward-difference gradient fields."""
    _check_pair(sr, hr)
    diff = sr - hr  # gradients are linear, so difference first
    gh = tslice(diff, np.s_[..., :, 1:]) - tslice(diff, np.s_[..., :, :-1])
    gv = tslice(diff, np.s_[..., 1:, :]) - tslice(diff, np.s_[..., :-1, :])
    n = gh.size + gv.size
    return (tsum(tabs(gh)) + tsum(tabs(gv))) * (1.0 / n)


def _next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def freq_loss(
    sr: Tensor, hr: Tensor, mode: str = "complex", allow_pad: bool = True
) -> Tensor:
    """Mean modulus of the spectrum difference, per channel.

    mode="complex" compares complex spectra (|F(sr) - F(hr)| per bin);
    mode="amplitude" compares modulus spectra. Moduli are smoothed as
    sqrt(re^2 + im^2 + 1e-12). Non-power-of-two images are
    reflection-padded to the next power of two when allow_pad is set,
    otherwise rejected.
    """
    _check_pair(sr, hr)
    h, w = sr.shape[-2], sr.shape[-1]
    ph, pw = _next_pow2(h), _next_pow2(w)
    if (ph, pw) != (h, w):
        if not allow_pad:
            raise ConfigurationError(
                f"freq_loss: {h}x{w} not powers of two and padding disabled"
            )
        sr = F.pad2d(sr, (ph - h, pw - w), mode="reflect")
        hr = F.pad2d(hr, (ph - h, pw - w), mode="reflect")

    eps = Tensor(np.asarray(FREQ_EPS, dtype=sr.dtype))
    sre, sim = F.dft2(sr)
    hre, him = F.dft2(hr)
    if mode == "complex":
        dre = sre - hre
        dim = sim - him
        mod = tsqrt(dre * dre + dim * dim + eps)
    elif mode == "amplitude":
        amp_s = tsqrt(sre * sre + sim * sim + eps)
        amp_h = tsqrt(hre * hre + him * him + eps)
        mod = tabs(amp_s - amp_h)
    else:
        raise ConfigurationError(f"freq_loss: unknown mode {mode!r}")
    return tmean(mod)


def total_loss(sr: Tensor, hr: Tensor, weights: LossWeights):
    """Weighted sum of the enabled terms; returns (scalar, breakdown dict).

    Disabled terms are not evaluated and report 0.0 in the breakdown.
    """
    terms = {}
    total = None
    specs = (
        ("l1", weights.use_l1, weights.lambda_l1, l1_loss),
        ("ssim", weights.use_ssim, weights.lambda_ssim, ssim_loss),
        ("edge", weights.use_edge, weights.lambda_edge, edge_loss),
        ("freq", weights.use_freq, weights.lambda_freq, freq_loss),
    )
    for name, enabled, lam, fn in specs:
        if not enabled:
            terms[name] = 0.0
            continue
        value = fn(sr, hr)
        terms[name] = float(value.data)
        contrib = value * lam
        total = contrib if total is None else total + contrib
    if total is None:
        total = Tensor(np.asarray(0.0, dtype=sr.dtype))
    return total, terms


# -- metrics ---------------------------------------------------------------------


def _np(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def mae(sr, hr) -> float:
    """Mean absolute error (same functional as the L1 loss)."""
    a, b = _np(sr), _np(hr)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def psnr(sr, hr, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB; +inf when the images are identical."""
    a, b = _np(sr), _np(hr)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim_score(sr, hr) -> float:
    """SSIM as a float metric; accepts [C,H,W] or [B,C,H,W]."""
    a, b = _np(sr), _np(hr)
    if a.ndim == 3:
        a, b = a[None], b[None]
    return float(ssim(Tensor(a), Tensor(b)).data)
