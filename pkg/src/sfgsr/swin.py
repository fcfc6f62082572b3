"""Shifted-window multi-head self-attention and the residual-post-norm block.

Attention follows the Swin-v2 recipe: per-head scaled cosine similarity
with a clamped learned temperature, plus a relative position bias from
either a small MLP over log-spaced coordinates ("cpb") or a learned
table ("table"). Layer norm is applied to each sublayer output before
the residual add (post-norm).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from sfgsr import functional as F
from sfgsr.params import param, zeros_param, ones_param
from sfgsr.rng import CounterRng, derive_seed
from sfgsr.sfg_ffn import (
    BaselineMlpParams,
    SfgFfnParams,
    baseline_mlp_forward,
    baseline_mlp_init,
    sfg_ffn_forward,
    sfg_ffn_init,
)
from sfgsr.tensor import (
    ConfigurationError,
    ShapeError,
    Tensor,
    clamp_max,
    layernorm,
    linear,
    matmul,
    reshape,
    roll2d,
    sigmoid,
    softmax,
    split,
    square,
    take_rows,
    texp,
    transpose,
    tsqrt,
    tsum,
    gelu,
)

LOGIT_SCALE_MAX = math.log(100.0)
MASK_FILL = -100.0
NORM_EPS = 1e-6


@dataclass
class CpbParams:
    """Two-layer map from log-spaced relative coordinates to per-head bias."""

    w1: Tensor  # [2, hidden]
    b1: Tensor
    w2: Tensor  # [hidden, heads]
    b2: Tensor


@dataclass
class BiasTableParams:
    """Directly learned per-offset bias table [(2w-1)^2, heads]."""

    table: Tensor


@dataclass
class SwinBlockParams:
    qkv_w: Tensor
    qkv_b: Tensor
    proj_w: Tensor
    proj_b: Tensor
    logit_scale: Tensor  # [heads], exponentiated and clamped to ln(100)
    pos: Union[CpbParams, BiasTableParams]
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor
    ffn: Union[SfgFfnParams, BaselineMlpParams]
    num_heads: int = 1
    window: int = 8
    shift_size: int = 0
    drop_path_rate: float = 0.0


# -- windows -------------------------------------------------------------------


def window_partition(x: Tensor, w: int) -> Tensor:
    """[B, H, W, C] -> [B * nW, w*w, C], non-overlapping w x w windows."""
    b, h, wd, c = x.shape
    if h % w or wd % w:
        raise ShapeError(f"window_partition: {h}x{wd} not divisible by window {w}")
    t = reshape(x, (b, h // w, w, wd // w, w, c))
    t = transpose(t, (0, 1, 3, 2, 4, 5))
    return reshape(t, (b * (h // w) * (wd // w), w * w, c))


def window_reverse(windows: Tensor, w: int, h: int, wd: int) -> Tensor:
    """Exact inverse of window_partition."""
    nw = (h // w) * (wd // w)
    b = windows.shape[0] // nw
    t = reshape(windows, (b, h // w, wd // w, w, w, windows.shape[-1]))
    t = transpose(t, (0, 1, 3, 2, 4, 5))
    return reshape(t, (b, h, wd, windows.shape[-1]))


def cyclic_shift(x: Tensor, s: int) -> Tensor:
    """Toroidal roll of [B, H, W, C] by (-s, -s); undo with -s."""
    if s == 0:
        return x
    return roll2d(x, -s, -s, axes=(1, 2))


def attention_mask(h: int, wd: int, window: int, shift: int) -> Optional[np.ndarray]:
    """Additive per-window mask [nW, w^2, w^2]: 0 intra-region, -100 across.

    Zero shift needs no mask (all pairs live in the same pre-shift region).
    """
    if shift == 0:
        return None
    img = np.zeros((h, wd))
    region = 0
    spans = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    for hs in spans:
        for ws in spans:
            img[hs, ws] = region
            region += 1
    ids = (
        img.reshape(h // window, window, wd // window, window)
        .transpose(0, 2, 1, 3)
        .reshape(-1, window * window)
    )
    mask = np.where(ids[:, :, None] != ids[:, None, :], MASK_FILL, 0.0)
    return mask.astype(np.float64)


def relative_position_index(window: int) -> np.ndarray:
    """[w^2 * w^2] flat indices into the (2w-1)^2 relative-offset table."""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij"))
    flat = coords.reshape(2, -1)
    rel = flat[:, :, None] - flat[:, None, :]  # [2, N, N]
    rel = rel + (window - 1)
    idx = rel[0] * (2 * window - 1) + rel[1]
    return idx.reshape(-1)


def log_spaced_coords(window: int) -> np.ndarray:
    """[(2w-1)^2, 2] sign-preserving log-spaced relative coordinates."""
    r = np.arange(-(window - 1), window, dtype=np.float64)
    gy, gx = np.meshgrid(r, r, indexing="ij")
    table = np.stack([gy, gx], axis=-1).reshape(-1, 2)
    if window > 1:
        table = table * (8.0 / (window - 1))
    return np.sign(table) * np.log2(1.0 + np.abs(table)) / np.log2(8.0)


def position_bias(p: SwinBlockParams) -> Tensor:
    """Per-head additive bias [heads, w^2, w^2] for every token pair."""
    w = p.window
    idx = relative_position_index(w)
    if isinstance(p.pos, CpbParams):
        coords = Tensor(log_spaced_coords(w).astype(p.pos.w1.dtype))
        hidden = gelu(linear(coords, p.pos.w1, p.pos.b1))
        table = sigmoid(linear(hidden, p.pos.w2, p.pos.b2)) * 16.0
    else:
        table = p.pos.table
    n = w * w
    heads = table.shape[-1]
    bias = take_rows(table, idx)
    return transpose(reshape(bias, (n, n, heads)), (2, 0, 1))


def _l2_normalize(t: Tensor) -> Tensor:
    # eps floors the norm at ~1e-6
    denom = tsqrt(tsum(square(t), axis=-1, keepdims=True) + Tensor(np.asarray(NORM_EPS**2, dtype=t.dtype)))
    return t / denom


def wmsa_forward(
    tokens: Tensor,
    p: SwinBlockParams,
    mask: Optional[np.ndarray] = None,
    return_attn: bool = False,
):
    """Scaled-cosine window attention over [nWin, w^2, C] token groups."""
    nw, n, c = tokens.shape
    heads = p.num_heads
    if c % heads:
        raise ConfigurationError(f"wmsa: channels {c} not divisible by {heads} heads")
    d = c // heads

    qkv = linear(tokens, p.qkv_w, p.qkv_b)
    q, k, v = split(qkv, 3, axis=-1)
    q = transpose(reshape(q, (nw, n, heads, d)), (0, 2, 1, 3))
    k = transpose(reshape(k, (nw, n, heads, d)), (0, 2, 1, 3))
    v = transpose(reshape(v, (nw, n, heads, d)), (0, 2, 1, 3))

    qn = _l2_normalize(q)
    kn = _l2_normalize(k)
    scale = texp(clamp_max(p.logit_scale, LOGIT_SCALE_MAX))
    logits = matmul(qn, transpose(kn, (0, 1, 3, 2))) * reshape(scale, (1, heads, 1, 1))
    logits = logits + position_bias(p)
    if mask is not None:
        nw_mask = mask.shape[0]
        b = nw // nw_mask
        logits = reshape(logits, (b, nw_mask, heads, n, n))
        logits = logits + Tensor(mask[None, :, None].astype(tokens.dtype))
        logits = reshape(logits, (nw, heads, n, n))

    attn = softmax(logits, axis=-1)
    out = matmul(attn, v)
    out = reshape(transpose(out, (0, 2, 1, 3)), (nw, n, c))
    out = linear(out, p.proj_w, p.proj_b)
    if return_attn:
        return out, attn
    return out


def swin_block_forward(
    x: Tensor,
    p: SwinBlockParams,
    h: int,
    w: int,
    training: bool = False,
    rng=None,
) -> Tensor:
    """Post-norm residual block: attention sublayer then FFN sublayer."""
    b, n, c = x.shape
    if n != h * w:
        raise ShapeError(f"swin_block_forward: tokens {x.shape} vs H*W={h}*{w}")
    win = p.window
    shift = p.shift_size if min(h, w) > p.window else 0

    grid = reshape(x, (b, h, w, c))
    grid = cyclic_shift(grid, shift)
    windows = window_partition(grid, win)
    mask = attention_mask(h, w, win, shift)
    attended = wmsa_forward(windows, p, mask)
    grid = window_reverse(attended, win, h, w)
    grid = cyclic_shift(grid, -shift)
    branch = reshape(grid, (b, n, c))
    branch = layernorm(branch, p.ln1_gamma, p.ln1_beta)
    if training:
        branch = F.drop_path(branch, p.drop_path_rate, rng)
    x = x + branch

    if isinstance(p.ffn, SfgFfnParams):
        branch = sfg_ffn_forward(x, p.ffn, h, w, training=training, rng=rng)
    else:
        branch = baseline_mlp_forward(x, p.ffn, training=training, rng=rng)
    branch = layernorm(branch, p.ln2_gamma, p.ln2_beta)
    if training:
        branch = F.drop_path(branch, p.drop_path_rate, rng)
    return x + branch


def swin_block_init(
    c: int,
    heads: int,
    window: int,
    shift: int,
    seed: int,
    ffn_kind: str = "sfg",
    mlp_ratio: float = 2.0,
    blur_k: int = 5,
    gate_rho: int = 8,
    pos_bias: str = "cpb",
    cpb_hidden: int = 512,
    dropout: float = 0.0,
    drop_path: float = 0.0,
) -> SwinBlockParams:
    if c % heads:
        raise ConfigurationError(f"swin_block_init: C={c} not divisible by heads={heads}")
    if shift not in (0, window // 2):
        raise ConfigurationError(f"swin_block_init: shift {shift} not in {{0, {window // 2}}}")
    rng = CounterRng(seed)
    if pos_bias == "cpb":
        pos = CpbParams(
            w1=param(rng, (2, cpb_hidden)),
            b1=zeros_param((cpb_hidden,)),
            w2=param(rng, (cpb_hidden, heads)),
            b2=zeros_param((heads,)),
        )
    elif pos_bias == "table":
        pos = BiasTableParams(table=param(rng, ((2 * window - 1) ** 2, heads)))
    else:
        raise ConfigurationError(f"unknown pos_bias mode {pos_bias!r}")
    if ffn_kind == "sfg":
        ffn = sfg_ffn_init(
            c, mlp_ratio, blur_k, gate_rho, derive_seed(seed, 1), dropout_rate=dropout
        )
    elif ffn_kind == "baseline":
        ffn = baseline_mlp_init(c, mlp_ratio, derive_seed(seed, 1), dropout_rate=dropout)
    else:
        raise ConfigurationError(f"unknown ffn_kind {ffn_kind!r}")
    return SwinBlockParams(
        qkv_w=param(rng, (c, 3 * c)),
        qkv_b=zeros_param((3 * c,)),
        proj_w=param(rng, (c, c)),
        proj_b=zeros_param((c,)),
        logit_scale=Tensor(
            np.full((heads,), math.log(10.0), dtype=np.float32), requires_grad=True
        ),
        pos=pos,
        ln1_gamma=ones_param((c,)),
        ln1_beta=zeros_param((c,)),
        ln2_gamma=ones_param((c,)),
        ln2_beta=zeros_param((c,)),
        ffn=ffn,
        num_heads=heads,
        window=window,
        shift_size=shift,
        drop_path_rate=drop_path,
    )
