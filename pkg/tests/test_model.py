"""Full model: shapes, determinism, config validation, param/FLOP ledgers."""

import numpy as np
import pytest

from sfgsr.model import (
    ModelConfig,
    build_model,
    count_params,
    estimate_flops,
    flops_breakdown,
    forward,
    model_params,
    full_config,
    tiny_config,
)
from sfgsr.rng import CounterRng
from sfgsr.sfg_ffn import hidden_dims
from sfgsr.tensor import ConfigurationError, ShapeError, Tensor


def ledger_param_count(cfg: ModelConfig) -> int:
    """Independent arithmetic ledger of every parameter tensor."""
    c = cfg.embed_dim
    c_h, c_g = hidden_dims(c, cfg.mlp_ratio, cfg.gate_rho)

    def conv(co, ci, k):
        return co * ci * k * k + co

    total = conv(c, cfg.bands, 3)  # shallow
    for depth, heads in zip(cfg.depths, cfg.heads):
        per_block = (
            c * 3 * c + 3 * c        # qkv
            + c * c + c              # output projection
            + heads                  # logit scales
            + 4 * c                  # two layernorms
        )
        if cfg.pos_bias == "cpb":
            per_block += 2 * cfg.cpb_hidden + cfg.cpb_hidden
            per_block += cfg.cpb_hidden * heads + heads
        else:
            per_block += (2 * cfg.window - 1) ** 2 * heads
        per_block += c * c_h + c_h + c_h * c + c  # the two projections
        if cfg.ffn_kind == "sfg":
            per_block += c_h * cfg.blur_k**2          # blur
            per_block += c_h * 9 + c_h                # refine
            per_block += c_h * c_g + c_g + c_g * c_h + c_h  # gate
        total += depth * per_block
        total += conv(c, c, 3)  # stage trailing conv
    total += conv(c, c, 3)  # body conv
    u = cfg.upsample_dim
    total += conv(u, c, 3)
    total += int(np.log2(cfg.scale)) * conv(4 * u, u, 3)
    total += conv(cfg.bands, u, 3)
    return total


@pytest.mark.parametrize("make", [tiny_config, full_config], ids=["tiny", "full"])
@pytest.mark.parametrize("ffn_kind", ["sfg", "baseline"])
def test_param_count_matches_hand_ledger(make, ffn_kind):
    cfg = make(ffn_kind)
    assert count_params(build_model(cfg)) == ledger_param_count(cfg)


def test_frozen_reference_counts():
    assert count_params(build_model(full_config("sfg"))) == 13504067
    assert count_params(build_model(full_config("baseline"))) == 11869487
    assert count_params(build_model(tiny_config("sfg"))) == 38915


def test_flops_reference_values():
    # 3x64x64 input, 2 FLOPs per multiply-add, analytic
    assert estimate_flops(build_model(full_config("sfg"))) == pytest.approx(115.28e9, rel=0.01)
    assert estimate_flops(build_model(full_config("baseline"))) == pytest.approx(102.11e9, rel=0.01)


def test_flops_breakdown_sums_to_total():
    parts = flops_breakdown(full_config("sfg"))
    total = sum(v for k, v in parts.items() if k != "total")
    assert total == parts["total"]
    assert all(v > 0 for v in parts.values())


def test_flops_scale_with_input_area():
    cfg = tiny_config()
    a = flops_breakdown(cfg, (32, 32))["attention"]
    b = flops_breakdown(cfg, (64, 64))["attention"]
    assert b == pytest.approx(4 * a)


def test_param_names_unique():
    model = build_model(tiny_config())
    names = [n for n, _ in model_params(model)]
    assert len(names) == len(set(names))
    assert any("blur_kernel" in n for n in names)


def test_forward_output_shape():
    model = build_model(tiny_config())
    x = Tensor(CounterRng(1).uniform(2 * 3 * 16 * 16).reshape(2, 3, 16, 16).astype(np.float32))
    y = forward(model, x)
    assert y.shape == (2, 3, 32, 32)
    assert y.dtype == np.float32


def test_forward_pads_non_window_multiples():
    model = build_model(tiny_config())
    x = Tensor(CounterRng(2).uniform(1 * 3 * 11 * 13).reshape(1, 3, 11, 13).astype(np.float32))
    y = forward(model, x)
    assert y.shape == (1, 3, 22, 26)
    assert np.all(np.isfinite(y.data))


def test_forward_band_mismatch():
    model = build_model(tiny_config())
    with pytest.raises(ShapeError):
        forward(model, Tensor(np.ones((1, 4, 16, 16), dtype=np.float32)))


def test_forward_is_deterministic():
    x = Tensor(CounterRng(3).uniform(1 * 3 * 16 * 16).reshape(1, 3, 16, 16).astype(np.float32))
    a = forward(build_model(tiny_config(seed=5)), x).data
    b = forward(build_model(tiny_config(seed=5)), x).data
    assert np.array_equal(a, b)
    c = forward(build_model(tiny_config(seed=6)), x).data
    assert not np.array_equal(a, c)


def test_multispectral_bands_supported():
    cfg = tiny_config()
    cfg.bands = 4
    model = build_model(cfg)
    x = Tensor(CounterRng(4).uniform(1 * 4 * 8 * 8).reshape(1, 4, 8, 8).astype(np.float32))
    assert forward(model, x).shape == (1, 4, 16, 16)


def test_config_validation():
    bad = tiny_config()
    bad.scale = 3
    with pytest.raises(ConfigurationError):
        bad.validate()
    bad = tiny_config()
    bad.heads = [2]
    with pytest.raises(ConfigurationError):
        bad.validate()
    bad = tiny_config()
    bad.heads = [3, 3]  # 16 not divisible by 3
    with pytest.raises(ConfigurationError):
        bad.validate()
    bad = tiny_config()
    bad.blur_k = 4
    with pytest.raises(ConfigurationError):
        bad.validate()
    bad = tiny_config()
    bad.ffn_kind = "dense"
    with pytest.raises(ConfigurationError):
        bad.validate()
