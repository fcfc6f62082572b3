"""Spatial-frequency gated feed-forward network and the plain MLP it replaces.

The gated FFN expands tokens, splits the feature map into a low-frequency
part (trainable depthwise blur, uniform 1/k^2 at init) and the
high-frequency remainder, refines the remainder with a small depthwise
conv, and injects it back through a sigmoid bottleneck gate before the
output projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from sfgsr import functional as F
from sfgsr.params import param, zeros_param
from sfgsr.rng import CounterRng
from sfgsr.tensor import (
    ConfigurationError,
    ShapeError,
    Tensor,
    gelu,
    linear,
    reshape,
    sigmoid,
    sub,
    transpose,
)


@dataclass
class SfgFfnParams:
    w1: Tensor
    b1: Tensor
    blur_kernel: Tensor          # [C_h, k, k]
    refine_kernel: Tensor        # [C_h, 3, 3]
    refine_bias: Tensor
    gate_w1: Tensor              # [C_h, C_g], applied per pixel (1x1 conv)
    gate_b1: Tensor
    gate_w2: Tensor              # [C_g, C_h]
    gate_b2: Tensor
    w2: Tensor
    b2: Tensor
    dropout_rate: float = 0.0


@dataclass
class BaselineMlpParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    dropout_rate: float = 0.0


def hidden_dims(c: int, r: float, rho: int) -> tuple[int, int]:
    """(C_h, C_g) = (floor(C*r), max(C_h // rho, 16))."""
    c_h = int(c * r)
    c_g = max(c_h // rho, 16)
    return c_h, c_g


def sfg_ffn_init(
    c: int, r: float, k: int, rho: int, seed: int, dropout_rate: float = 0.0
) -> SfgFfnParams:
    """Initialize: uniform 1/k^2 blur, truncated-normal (std 0.02) elsewhere."""
    if c < 1 or r <= 0 or rho < 1:
        raise ConfigurationError(f"sfg_ffn_init: C={c}, r={r}, rho={rho}")
    if k % 2 == 0:
        raise ConfigurationError(f"sfg_ffn_init: blur kernel size {k} must be odd")
    c_h, c_g = hidden_dims(c, r, rho)
    rng = CounterRng(seed)
    return SfgFfnParams(
        w1=param(rng, (c, c_h)),
        b1=zeros_param((c_h,)),
        blur_kernel=Tensor(
            np.full((c_h, k, k), 1.0 / (k * k), dtype=np.float32), requires_grad=True
        ),
        refine_kernel=param(rng, (c_h, 3, 3)),
        refine_bias=zeros_param((c_h,)),
        gate_w1=param(rng, (c_h, c_g)),
        gate_b1=zeros_param((c_g,)),
        gate_w2=param(rng, (c_g, c_h)),
        gate_b2=zeros_param((c_h,)),
        w2=param(rng, (c_h, c)),
        b2=zeros_param((c,)),
        dropout_rate=dropout_rate,
    )


def baseline_mlp_init(
    c: int, r: float, seed: int, dropout_rate: float = 0.0
) -> BaselineMlpParams:
    c_h = int(c * r)
    rng = CounterRng(seed)
    return BaselineMlpParams(
        w1=param(rng, (c, c_h)),
        b1=zeros_param((c_h,)),
        w2=param(rng, (c_h, c)),
        b2=zeros_param((c,)),
        dropout_rate=dropout_rate,
    )


def decompose(feat: Tensor, blur_kernel: Tensor) -> tuple[Tensor, Tensor]:
    """Split [B, C_h, H, W] into (low, high) with high = feat - blur(feat).

    Replicate padding keeps a normalized kernel DC-preserving at the
    borders; high is defined as the exact difference feat - low, so the
    parts recombine to the input at machine precision.
    """
    low = F.depthwise_conv2d(feat, blur_kernel, pad_mode="replicate")
    high = sub(feat, low)
    return low, high


def refine(high: Tensor, refine_kernel: Tensor, refine_bias: Tensor) -> Tensor:
    """GELU(DWConv3x3(high)), zero padding."""
    return gelu(
        F.depthwise_conv2d(high, refine_kernel, pad_mode="zero", bias=refine_bias)
    )


def gate(refined: Tensor, p: SfgFfnParams) -> Tensor:
    """Per-pixel bottleneck gate C_h -> C_g -> C_h, sigmoid output in (0,1)."""
    b, c_h, h, w = refined.shape
    tok = transpose(reshape(refined, (b, c_h, h * w)), (0, 2, 1))
    g = linear(gelu(linear(tok, p.gate_w1, p.gate_b1)), p.gate_w2, p.gate_b2)
    g = sigmoid(g)
    return reshape(transpose(g, (0, 2, 1)), (b, c_h, h, w))


def _tokens_to_map(z: Tensor, h: int, w: int) -> Tensor:
    b, n, c = z.shape
    return reshape(transpose(z, (0, 2, 1)), (b, c, h, w))


def _map_to_tokens(feat: Tensor) -> Tensor:
    b, c, h, w = feat.shape
    return transpose(reshape(feat, (b, c, h * w)), (0, 2, 1))


def sfg_ffn_forward(
    x: Tensor, p: SfgFfnParams, h: int, w: int, training: bool = False, rng=None
) -> Tensor:
    """Full gated FFN on tokens [B, H*W, C]; dropout only when training."""
    if x.ndim != 3 or x.shape[1] != h * w:
        raise ShapeError(f"sfg_ffn_forward: tokens {x.shape} vs H*W={h}*{w}")
    z = gelu(linear(x, p.w1, p.b1))
    feat = _tokens_to_map(z, h, w)
    _, high = decompose(feat, p.blur_kernel)
    refined = refine(high, p.refine_kernel, p.refine_bias)
    g = gate(refined, p)
    fused = feat + g * refined
    out = linear(_map_to_tokens(fused), p.w2, p.b2)
    if training:
        out = F.dropout(out, p.dropout_rate, rng)
    return out


def baseline_mlp_forward(
    x: Tensor, p: BaselineMlpParams, training: bool = False, rng=None
) -> Tensor:
    """Dropout(W2 * GELU(W1 * x + b1) + b2)."""
    if x.ndim != 3 or x.shape[-1] != p.w1.shape[0]:
        raise ShapeError(f"baseline_mlp_forward: tokens {x.shape} vs W1 {p.w1.shape}")
    out = linear(gelu(linear(x, p.w1, p.b1)), p.w2, p.b2)
    if training:
        out = F.dropout(out, p.dropout_rate, rng)
    return out
