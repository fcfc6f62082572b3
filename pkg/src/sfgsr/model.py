"""Full super-resolution network: shallow embedding, residual window-attention
stages, global residual, and pixel-shuffle reconstruction, plus analytic
parameter and FLOP counters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from sfgsr import functional as F
from sfgsr.params import named_tensors, param, zeros_param
from sfgsr.rng import CounterRng, derive_seed
from sfgsr.sfg_ffn import hidden_dims
from sfgsr.swin import SwinBlockParams, swin_block_forward, swin_block_init
from sfgsr.tensor import ConfigurationError, ShapeError, Tensor, gelu, reshape, transpose


@dataclass
class ModelConfig:
    scale: int = 2
    bands: int = 3
    embed_dim: int = 180
    depths: list = field(default_factory=lambda: [6, 6, 6, 6, 6, 6])
    heads: list = field(default_factory=lambda: [6, 6, 6, 6, 6, 6])
    window: int = 8
    mlp_ratio: float = 2.0
    ffn_kind: str = "sfg"  # sfg | baseline
    blur_k: int = 5
    gate_rho: int = 8
    dropout: float = 0.0
    drop_path: float = 0.0
    pos_bias: str = "cpb"  # cpb | table
    cpb_hidden: int = 512
    upsample_dim: int = 64
    seed: int = 42

    def validate(self):
        if len(self.depths) != len(self.heads):
            raise ConfigurationError(
                f"depths ({len(self.depths)}) and heads ({len(self.heads)}) differ in length"
            )
        if self.scale < 1 or self.scale & (self.scale - 1):
            raise ConfigurationError(f"scale {self.scale} is not a power of two")
        if self.bands < 1:
            raise ConfigurationError(f"bands {self.bands} must be >= 1")
        for h in self.heads:
            if self.embed_dim % h:
                raise ConfigurationError(
                    f"embed_dim {self.embed_dim} not divisible by head count {h}"
                )
        if self.blur_k % 2 == 0:
            raise ConfigurationError(f"blur_k {self.blur_k} must be odd")
        if self.ffn_kind not in ("sfg", "baseline"):
            raise ConfigurationError(f"unknown ffn_kind {self.ffn_kind!r}")


def full_config(ffn_kind: str = "sfg", bands: int = 3, scale: int = 2) -> ModelConfig:
    """Reference full-size configuration (C=180, 6x6 blocks, window 8)."""
    return ModelConfig(ffn_kind=ffn_kind, bands=bands, scale=scale)


def tiny_config(ffn_kind: str = "sfg", seed: int = 42) -> ModelConfig:
    """Desk-scale configuration for tests and the toy trainer."""
    return ModelConfig(
        scale=2,
        bands=3,
        embed_dim=16,
        depths=[2, 2],
        heads=[2, 2],
        window=8,
        ffn_kind=ffn_kind,
        pos_bias="table",
        cpb_hidden=32,
        upsample_dim=16,
        seed=seed,
    )


@dataclass
class ConvParams:
    weight: Tensor
    bias: Tensor


@dataclass
class StageParams:
    blocks: list
    conv: ConvParams


@dataclass
class Model:
    config: ModelConfig
    shallow: ConvParams
    stages: list
    body_conv: ConvParams
    pre_up: ConvParams
    up_convs: list
    final_conv: ConvParams


def _conv_init(rng: CounterRng, c_out: int, c_in: int, k: int) -> ConvParams:
    return ConvParams(weight=param(rng, (c_out, c_in, k, k)), bias=zeros_param((c_out,)))


def build_model(config: ModelConfig) -> Model:
    """Deterministic build from config.seed; blur kernels start at 1/k^2."""
    config.validate()
    c = config.embed_dim
    rng = CounterRng(config.seed)
    shallow = _conv_init(rng, c, config.bands, 3)

    stages = []
    block_counter = 0
    for stage_i, (depth, heads) in enumerate(zip(config.depths, config.heads)):
        blocks = []
        for block_i in range(depth):
            shift = 0 if block_i % 2 == 0 else config.window // 2
            blocks.append(
                swin_block_init(
                    c,
                    heads,
                    config.window,
                    shift,
                    seed=derive_seed(config.seed, 1000 + block_counter),
                    ffn_kind=config.ffn_kind,
                    mlp_ratio=config.mlp_ratio,
                    blur_k=config.blur_k,
                    gate_rho=config.gate_rho,
                    pos_bias=config.pos_bias,
                    cpb_hidden=config.cpb_hidden,
                    dropout=config.dropout,
                    drop_path=config.drop_path,
                )
            )
            block_counter += 1
        stages.append(StageParams(blocks=blocks, conv=_conv_init(rng, c, c, 3)))

    body_conv = _conv_init(rng, c, c, 3)
    u = config.upsample_dim
    pre_up = _conv_init(rng, u, c, 3)
    n_steps = max(int(np.log2(config.scale)), 0)
    up_convs = [_conv_init(rng, 4 * u, u, 3) for _ in range(n_steps)]
    final_conv = _conv_init(rng, config.bands, u, 3)
    return Model(
        config=config,
        shallow=shallow,
        stages=stages,
        body_conv=body_conv,
        pre_up=pre_up,
        up_convs=up_convs,
        final_conv=final_conv,
    )


def _to_tokens(feat: Tensor) -> Tensor:
    b, c, h, w = feat.shape
    return transpose(reshape(feat, (b, c, h * w)), (0, 2, 1))


def _to_map(tokens: Tensor, h: int, w: int) -> Tensor:
    b, n, c = tokens.shape
    return reshape(transpose(tokens, (0, 2, 1)), (b, c, h, w))


def forward(model: Model, x: Tensor, training: bool = False, rng=None) -> Tensor:
    """Map [B, bands, H, W] in [0,1] to [B, bands, s*H, s*W].

    Inputs are reflection-padded to window multiples and the output is
    cropped back, so any H, W >= 2 works.
    """
    cfg = model.config
    if x.ndim != 4 or x.shape[1] != cfg.bands:
        raise ShapeError(f"forward: input {x.shape} vs configured bands {cfg.bands}")
    b, _, h, w = x.shape
    win = cfg.window
    pad_h = (win - h % win) % win
    pad_w = (win - w % win) % win
    if pad_h or pad_w:
        x = F.pad2d(x, (pad_h, pad_w), mode="reflect")
    hp, wp = h + pad_h, w + pad_w

    feat0 = F.conv2d(x, model.shallow.weight, model.shallow.bias)
    tokens = _to_tokens(feat0)
    for stage in model.stages:
        t0 = tokens
        for block in stage.blocks:
            tokens = swin_block_forward(tokens, block, hp, wp, training=training, rng=rng)
        feat = F.conv2d(_to_map(tokens, hp, wp), stage.conv.weight, stage.conv.bias)
        tokens = t0 + _to_tokens(feat)

    feat = F.conv2d(_to_map(tokens, hp, wp), model.body_conv.weight, model.body_conv.bias)
    feat = feat + feat0

    y = gelu(F.conv2d(feat, model.pre_up.weight, model.pre_up.bias))
    for up in model.up_convs:
        y = F.pixel_shuffle(F.conv2d(y, up.weight, up.bias), 2)
    y = F.conv2d(y, model.final_conv.weight, model.final_conv.bias)
    if pad_h or pad_w:
        y = F.crop2d(y, cfg.scale * h, cfg.scale * w)
    return y


def model_params(model: Model) -> list[tuple[str, Tensor]]:
    """Unique dotted name -> tensor for every trainable parameter."""
    return [(n, t) for n, t in named_tensors(model) if t.requires_grad]


def count_params(model: Model) -> int:
    """Exact scalar parameter count."""
    return int(sum(t.size for _, t in model_params(model)))


def flops_breakdown(config: ModelConfig, input_hw=(64, 64)) -> dict:
    """Analytic forward FLOPs (2 per multiply-add) for one LR input.

    Counts convolutions, linear projections, and the two attention
    matmuls; softmax, norms, activations, and the position-bias MLP are
    excluded by convention.
    """
    c = config.embed_dim
    h, w = input_hw
    win = config.window
    hp = h + (win - h % win) % win
    wp = w + (win - w % win) % win
    n = hp * wp
    c_h, c_g = hidden_dims(c, config.mlp_ratio, config.gate_rho)

    shallow = 2 * 9 * config.bands * c * n

    attn = 0.0
    ffn = 0.0
    for depth, _heads in zip(config.depths, config.heads):
        per_block_attn = (
            2 * n * c * 3 * c          # qkv
            + 2 * n * (win * win) * c  # q @ k^T
            + 2 * n * (win * win) * c  # attn @ v
            + 2 * n * c * c            # output projection
        )
        per_block_ffn = 2 * n * c * c_h * 2  # the two channel projections
        if config.ffn_kind == "sfg":
            per_block_ffn += (
                2 * config.blur_k**2 * c_h * n  # depthwise blur
                + 2 * 9 * c_h * n               # depthwise refine
                + 2 * n * c_h * c_g * 2         # bottleneck gate
            )
        attn += depth * per_block_attn
        ffn += depth * per_block_ffn

    stage_convs = len(config.depths) * 2 * 9 * c * c * n + 2 * 9 * c * c * n

    u = config.upsample_dim
    recon = 2 * 9 * c * u * n
    cur_n = n
    for _ in range(max(int(np.log2(config.scale)), 0)):
        recon += 2 * 9 * u * 4 * u * cur_n
        cur_n *= 4
    recon += 2 * 9 * u * config.bands * cur_n

    total = shallow + attn + ffn + stage_convs + recon
    return {
        "shallow": float(shallow),
        "attention": float(attn),
        "ffn": float(ffn),
        "stage_convs": float(stage_convs),
        "reconstruction": float(recon),
        "total": float(total),
    }


def estimate_flops(model: Model, input_hw=(64, 64)) -> float:
    """Total analytic FLOPs for one forward pass at the given LR size."""
    return flops_breakdown(model.config, input_hw)["total"]
