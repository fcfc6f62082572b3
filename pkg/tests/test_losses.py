"""Loss terms against independent naive oracles, plus metric closed forms."""

import math

import numpy as np
import pytest

from sfgsr.degrade import gaussian_kernel
from sfgsr.losses import (
    LossWeights,
    edge_loss,
    freq_loss,
    l1_loss,
    mae,
    psnr,
    ssim,
    ssim_loss,
    ssim_score,
    total_loss,
)
from sfgsr.rng import CounterRng
from sfgsr.tensor import ConfigurationError, ShapeError, Tensor


def random_pair(seed, b=1, c=1, h=16, w=16, amp=1.0):
    rng = CounterRng(seed)
    sr = rng.uniform(b * c * h * w).reshape(b, c, h, w)
    hr = np.clip(sr + amp * 0.1 * rng.normal(sr.size).reshape(sr.shape), 0, 1)
    return Tensor(sr), Tensor(hr)


# -- naive oracles -------------------------------------------------------------------


def naive_l1(sr, hr):
    return float(np.abs(sr - hr).mean())


def naive_ssim(sr, hr):
    """Loop-over-windows SSIM oracle, valid region, L=1."""
    win = gaussian_kernel(1.5, 11)
    c1, c2 = 0.01**2, 0.03**2
    b, c, h, w = sr.shape
    vals = []
    for bi in range(b):
        for ci in range(c):
            x, y = sr[bi, ci], hr[bi, ci]
            for i in range(h - 10):
                for j in range(w - 10):
                    px, py = x[i:i + 11, j:j + 11], y[i:i + 11, j:j + 11]
                    mx, my = (win * px).sum(), (win * py).sum()
                    vx = (win * px * px).sum() - mx * mx
                    vy = (win * py * py).sum() - my * my
                    cov = (win * px * py).sum() - mx * my
                    vals.append(
                        ((2 * mx * my + c1) * (2 * cov + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2))
                    )
    return float(np.mean(vals))


def naive_edge(sr, hr):
    d = sr - hr
    gh = d[..., :, 1:] - d[..., :, :-1]
    gv = d[..., 1:, :] - d[..., :-1, :]
    return float((np.abs(gh).sum() + np.abs(gv).sum()) / (gh.size + gv.size))


def naive_freq(sr, hr):
    diff = np.fft.fft2(sr) - np.fft.fft2(hr)
    return float(np.sqrt(diff.real**2 + diff.imag**2 + 1e-12).mean())


# -- loss-term oracle agreement ---------------------------------------------------------


def test_l1_matches_oracle():
    sr, hr = random_pair(1)
    assert float(l1_loss(sr, hr).data) == pytest.approx(naive_l1(sr.data, hr.data), rel=1e-12)


def test_ssim_matches_loop_oracle():
    sr, hr = random_pair(2)
    got = float(ssim(sr, hr).data)
    want = naive_ssim(sr.data, hr.data)
    assert abs(got - want) / abs(want) <= 1e-5


def test_edge_matches_oracle():
    sr, hr = random_pair(3)
    got = float(edge_loss(sr, hr).data)
    assert got == pytest.approx(naive_edge(sr.data, hr.data), rel=1e-10)


def test_freq_matches_oracle():
    sr, hr = random_pair(4)
    got = float(freq_loss(sr, hr).data)
    assert got == pytest.approx(naive_freq(sr.data, hr.data), rel=1e-9)


def test_freq_amplitude_mode():
    sr, hr = random_pair(5)
    amp_s = np.abs(np.fft.fft2(sr.data))
    amp_h = np.abs(np.fft.fft2(hr.data))
    got = float(freq_loss(sr, hr, mode="amplitude").data)
    assert got == pytest.approx(float(np.abs(amp_s - amp_h).mean()), rel=1e-5)
    with pytest.raises(ConfigurationError):
        freq_loss(sr, hr, mode="phase")


def test_freq_pads_non_pow2():
    rng = CounterRng(6)
    sr = Tensor(rng.uniform(1 * 1 * 12 * 12).reshape(1, 1, 12, 12))
    hr = Tensor(rng.uniform(sr.size).reshape(sr.shape))
    assert np.isfinite(float(freq_loss(sr, hr).data))
    with pytest.raises(ConfigurationError):
        freq_loss(sr, hr, allow_pad=False)


# -- composite behavior -----------------------------------------------------------------


def test_total_recombines_exactly():
    sr, hr = random_pair(7)
    w = LossWeights()
    total, terms = total_loss(sr, hr, w)
    want = (
        1.0 * terms["l1"] + 0.1 * terms["ssim"] + 0.1 * terms["edge"] + 0.05 * terms["freq"]
    )
    assert float(total.data) == pytest.approx(want, rel=1e-12)


def test_total_zero_on_identical_inputs():
    sr, _ = random_pair(8)
    total, terms = total_loss(sr, Tensor(sr.data.copy()), LossWeights())
    assert terms["l1"] == 0.0
    assert terms["edge"] == 0.0
    assert terms["ssim"] == pytest.approx(0.0, abs=1e-9)
    assert terms["freq"] == pytest.approx(0.0, abs=1e-5)  # sqrt(eps) floor per bin
    assert float(total.data) == pytest.approx(0.0, abs=1e-5)


def test_each_term_monotone_in_noise_amplitude():
    rng = CounterRng(9)
    base = rng.uniform(1 * 1 * 16 * 16).reshape(1, 1, 16, 16) * 0.6 + 0.2
    noise = rng.normal(base.size).reshape(base.shape)
    hr = Tensor(base)
    values = {"l1": [], "ssim": [], "edge": [], "freq": []}
    for amp in (0.01, 0.03, 0.1):
        sr = Tensor(base + amp * noise)
        values["l1"].append(float(l1_loss(sr, hr).data))
        values["ssim"].append(float(ssim_loss(sr, hr).data))
        values["edge"].append(float(edge_loss(sr, hr).data))
        values["freq"].append(float(freq_loss(sr, hr).data))
    for name, seq in values.items():
        assert seq[0] < seq[1] < seq[2], f"{name} not monotone: {seq}"


def test_disabled_terms_report_zero():
    sr, hr = random_pair(10)
    total, terms = total_loss(sr, hr, LossWeights.only("l1"))
    assert terms["ssim"] == 0.0 and terms["edge"] == 0.0 and terms["freq"] == 0.0
    assert float(total.data) == pytest.approx(terms["l1"], rel=1e-12)


def test_loss_shape_checks():
    with pytest.raises(ShapeError):
        l1_loss(Tensor(np.ones((1, 1, 8, 8))), Tensor(np.ones((1, 1, 8, 9))))
    with pytest.raises(ConfigurationError):
        ssim(Tensor(np.ones((1, 1, 8, 8))), Tensor(np.ones((1, 1, 8, 8))))  # < window


# -- metrics ------------------------------------------------------------------------------


def test_psnr_closed_form():
    # MSE 0.01 -> 20 dB exactly
    sr = np.zeros((1, 1, 10, 10))
    hr = np.full_like(sr, 0.1)
    assert psnr(sr, hr) == pytest.approx(20.0, abs=1e-6)
    assert psnr(sr, sr) == math.inf
    assert psnr(sr, hr, peak=2.0) == pytest.approx(20.0 + 20.0 * math.log10(2.0), abs=1e-6)


def test_ssim_self_is_one():
    sr, _ = random_pair(11)
    assert abs(ssim_score(sr, sr) - 1.0) <= 1e-9


def test_mae_offset_exact():
    sr = np.zeros((3, 8, 8))
    hr = np.full_like(sr, 0.25)
    assert mae(sr, hr) == 0.25


def test_metric_shape_checks():
    with pytest.raises(ShapeError):
        psnr(np.ones((1, 2, 2)), np.ones((1, 2, 3)))
    with pytest.raises(ShapeError):
        mae(np.ones((1, 2, 2)), np.ones((1, 2, 3)))


# -- differentiability ---------------------------------------------------------------------


def test_total_loss_gradient():
    from sfgsr.tensor import grad_check

    rng = CounterRng(12)
    base = rng.uniform(1 * 1 * 12 * 12).reshape(1, 1, 12, 12)
    hr = Tensor(np.clip(base + 0.05 * rng.normal(base.size).reshape(base.shape), 0, 1))

    def f(t):
        total, _ = total_loss(t, hr, LossWeights())
        return total

    assert grad_check(f, Tensor(base), tol=1e-4).passed
