"""Windowed attention: partition/shift/mask machinery plus block gradients."""

import numpy as np
import pytest

from sfgsr import swin
from sfgsr.params import cast_tree, named_tensors
from sfgsr.rng import CounterRng
from sfgsr.tensor import (
    ConfigurationError,
    ShapeError,
    Tape,
    Tensor,
    backward,
    grad_check,
    tabs,
    tsum,
)


def randn(rng, *shape):
    return rng.normal(int(np.prod(shape))).reshape(shape)


def make_block(seed=0, shift=0, ffn_kind="sfg", window=4, c=8, heads=2):
    return swin.swin_block_init(
        c, heads, window, shift, seed, ffn_kind=ffn_kind, blur_k=3, pos_bias="table"
    )


# -- partition / shift -------------------------------------------------------------


def test_window_partition_reverse_roundtrip():
    rng = CounterRng(1)
    x = Tensor(randn(rng, 2, 8, 12, 5))
    wins = swin.window_partition(x, 4)
    assert wins.shape == (2 * 2 * 3, 16, 5)
    back = swin.window_reverse(wins, 4, 8, 12)
    assert np.array_equal(back.data, x.data)


def test_window_partition_contents():
    h = w = 4
    x = np.arange(h * w, dtype=np.float64).reshape(1, h, w, 1)
    wins = swin.window_partition(Tensor(x), 2).data[..., 0]
    assert np.array_equal(wins[0], [0, 1, 4, 5])      # top-left window, row-major
    assert np.array_equal(wins[1], [2, 3, 6, 7])
    assert np.array_equal(wins[3], [10, 11, 14, 15])


def test_window_partition_requires_divisibility():
    with pytest.raises(ShapeError):
        swin.window_partition(Tensor(np.ones((1, 6, 8, 2))), 4)


def test_cyclic_shift_inverse():
    rng = CounterRng(2)
    x = Tensor(randn(rng, 1, 8, 8, 3))
    shifted = swin.cyclic_shift(x, 2)
    assert not np.array_equal(shifted.data, x.data)
    assert np.array_equal(swin.cyclic_shift(shifted, -2).data, x.data)
    assert swin.cyclic_shift(x, 0) is x


# -- attention mask ------------------------------------------------------------------


def test_attention_mask_zero_shift_is_none():
    assert swin.attention_mask(8, 8, 4, 0) is None


def test_attention_mask_values_and_symmetry():
    mask = swin.attention_mask(8, 8, 4, 2)
    assert mask.shape == (4, 16, 16)
    assert set(np.unique(mask)) == {-100.0, 0.0}
    assert np.array_equal(mask, mask.transpose(0, 2, 1))  # same-region is symmetric
    assert np.all(np.diagonal(mask, axis1=1, axis2=2) == 0.0)  # self-pairs allowed
    # the window far from the wrap boundary sees one region only
    assert np.all(mask[0] == 0.0)
    # wrapped windows must block some pairs
    assert np.any(mask[1] == -100.0)
    assert np.any(mask[3] == -100.0)


def test_attention_mask_region_structure():
    # 9-region labeling: the corner window mixes 4 regions of sizes 2x2
    mask = swin.attention_mask(8, 8, 4, 2)
    blocked = (mask[3] == -100.0).sum()
    # 4 regions of 4 tokens each: allowed pairs 4 * 16 = 64 of 256
    assert blocked == 256 - 64


# -- position bias --------------------------------------------------------------------


def test_relative_position_index_properties():
    idx = swin.relative_position_index(4)
    assert idx.shape == (256,)
    assert idx.min() >= 0 and idx.max() < 49  # (2*4-1)^2 table entries
    n = idx.reshape(16, 16)
    center = (2 * 4 - 1) ** 2 // 2
    assert np.all(np.diag(n) == center)  # zero offset maps to the table center


def test_log_spaced_coords_bounds():
    c = swin.log_spaced_coords(8)
    assert c.shape == (225, 2)
    # extreme offset +-(w-1) rescales to +-8, then log2(1+8)/log2(8)
    assert np.isclose(np.abs(c).max(), np.log2(9.0) / 3.0)
    assert np.allclose(c[c.shape[0] // 2], 0.0)


def test_cpb_bias_bounded_by_16():
    p = swin.swin_block_init(8, 2, 4, 0, 3, ffn_kind="baseline", pos_bias="cpb",
                             cpb_hidden=16)
    bias = swin.position_bias(p).data
    assert bias.shape == (2, 16, 16)
    assert np.all(bias > 0.0) and np.all(bias < 16.0)  # 16 * sigmoid


# -- attention forward -----------------------------------------------------------------


def test_attention_rows_are_distributions():
    p = make_block(seed=4)
    rng = CounterRng(5)
    tok = Tensor(randn(rng, 3, 16, 8).astype(np.float32))
    _, attn = swin.wmsa_forward(tok, p, return_attn=True)
    assert attn.shape == (3, 2, 16, 16)
    assert np.allclose(attn.data.sum(axis=-1), 1.0, atol=1e-5)
    assert np.all(attn.data >= 0.0)


def test_masked_pairs_get_no_attention():
    p = make_block(seed=6, shift=2)
    mask = swin.attention_mask(8, 8, 4, 2)
    rng = CounterRng(7)
    tok = Tensor(randn(rng, 4, 16, 8).astype(np.float32))
    _, attn = swin.wmsa_forward(tok, p, mask=mask, return_attn=True)
    blocked = np.broadcast_to(mask[:, None] < 0, attn.shape)
    assert attn.data[blocked].max() < 1e-5


def test_logit_scale_is_clamped():
    p = make_block(seed=8)
    p.logit_scale.data[:] = 50.0  # way beyond ln(100)
    rng = CounterRng(9)
    tok = Tensor(randn(rng, 1, 16, 8).astype(np.float32))
    out, attn = swin.wmsa_forward(tok, p, return_attn=True)
    assert np.all(np.isfinite(out.data))
    # cosine similarities in [-1,1] scaled by <=100, so softmax stays sane
    assert attn.data.max() <= 1.0


def test_wmsa_rejects_bad_heads():
    p = make_block(seed=10)
    with pytest.raises(ConfigurationError):
        swin.wmsa_forward(Tensor(np.ones((1, 16, 9), dtype=np.float32)), p)


# -- full block -------------------------------------------------------------------------


def test_block_shapes_and_token_check():
    p = make_block(seed=11)
    rng = CounterRng(12)
    x = Tensor(randn(rng, 2, 64, 8).astype(np.float32))
    out = swin.swin_block_forward(x, p, 8, 8)
    assert out.shape == (2, 64, 8)
    with pytest.raises(ShapeError):
        swin.swin_block_forward(x, p, 8, 7)


def test_shift_disabled_on_small_maps():
    # min(H, W) <= window: shifted and unshifted blocks agree up to the mask
    p_shift = make_block(seed=13, shift=2)
    p_plain = make_block(seed=13, shift=0)
    rng = CounterRng(14)
    x = Tensor(randn(rng, 1, 16, 8).astype(np.float32))
    a = swin.swin_block_forward(x, p_shift, 4, 4)
    b = swin.swin_block_forward(x, p_plain, 4, 4)
    assert np.array_equal(a.data, b.data)


@pytest.mark.parametrize("shift,ffn_kind", [(0, "sfg"), (2, "sfg"), (0, "baseline")])
def test_block_gradient(shift, ffn_kind):
    p = cast_tree(make_block(seed=15, shift=shift, ffn_kind=ffn_kind), np.float64)
    rng = CounterRng(16)
    x = Tensor(randn(rng, 1, 64, 8) * 0.5)
    report = grad_check(lambda t: tsum(tabs(swin.swin_block_forward(t, p, 8, 8))), x)
    assert report.passed, report


def test_block_parameters_all_reached():
    p = make_block(seed=17, shift=2)
    rng = CounterRng(18)
    x = Tensor(randn(rng, 1, 64, 8).astype(np.float32))
    with Tape() as tape:
        loss = tsum(tabs(swin.swin_block_forward(x, p, 8, 8)))
    backward(tape, loss)
    for name, t in named_tensors(p):
        assert t.grad is not None, f"no gradient reached {name}"
