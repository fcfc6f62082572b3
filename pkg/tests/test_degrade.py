"""HR -> LR simulation: determinism, noise statistics, patch alignment."""

import numpy as np
import pytest

from sfgsr.degrade import (
    DegradationConfig,
    degrade,
    extract_patch_pairs,
    gaussian_kernel,
)
from sfgsr.rng import CounterRng
from sfgsr.tensor import ConfigurationError, ShapeError


def make_hr(seed=0, bands=3, size=32):
    return CounterRng(seed).uniform(bands * size * size).reshape(bands, size, size).astype(np.float32)


def test_gaussian_kernel_properties():
    k = gaussian_kernel(1.0, 7)
    assert k.shape == (7, 7)
    assert np.isclose(k.sum(), 1.0, atol=1e-15)
    assert np.array_equal(k, k.T)
    assert np.array_equal(k, k[::-1, ::-1])
    assert k[3, 3] == k.max()
    with pytest.raises(ConfigurationError):
        gaussian_kernel(1.0, 6)


def test_gaussian_kernel_matches_closed_form():
    sigma, k = 1.5, 5
    r = np.arange(k) - 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    want = np.outer(g, g) / np.outer(g, g).sum()
    assert np.allclose(gaussian_kernel(sigma, k), want, atol=1e-15)


def test_degrade_shapes_and_range():
    hr = make_hr()
    lr = degrade(hr, DegradationConfig())
    assert lr.shape == (3, 16, 16)
    assert lr.dtype == np.float32
    assert lr.min() >= 0.0 and lr.max() <= 1.0


def test_degrade_is_bitwise_deterministic():
    hr = make_hr(1)
    cfg = DegradationConfig(seed=7)
    a = degrade(hr, cfg, image_index=3)
    b = degrade(hr, cfg, image_index=3)
    assert np.array_equal(a, b)
    c = degrade(hr, cfg, image_index=4)
    assert not np.array_equal(a, c)  # per-image noise streams differ


def test_degrade_noise_statistics():
    # flat mid-gray image: the post-resample residual is pure configured noise
    hr = np.full((1, 256, 256), 0.5, dtype=np.float32)
    sigma = 8.0 / 255.0
    cfg = DegradationConfig(noise_sigma=sigma, seed=3)
    lr = degrade(hr, cfg)
    clean = degrade(hr, DegradationConfig(noise_sigma=0.0))
    noise = (lr - clean).ravel()
    assert noise.size >= 10_000
    assert abs(noise.std() - sigma) / sigma < 0.1


def test_degrade_zero_noise_is_blur_downsample_only():
    hr = make_hr(2)
    a = degrade(hr, DegradationConfig(noise_sigma=0.0, seed=1))
    b = degrade(hr, DegradationConfig(noise_sigma=0.0, seed=2))
    assert np.array_equal(a, b)  # seed is irrelevant without noise


def test_degrade_constant_image_stays_constant():
    hr = np.full((3, 16, 16), 0.25, dtype=np.float32)
    lr = degrade(hr, DegradationConfig(noise_sigma=0.0))
    assert np.allclose(lr, 0.25, atol=1e-6)


def test_degrade_input_validation():
    with pytest.raises(ShapeError):
        degrade(np.ones((16, 16), dtype=np.float32), DegradationConfig())
    with pytest.raises(ShapeError):
        degrade(np.ones((3, 15, 16), dtype=np.float32), DegradationConfig())
    with pytest.raises(ConfigurationError):
        degrade(make_hr(), DegradationConfig(blur_kernel_size=6))
    with pytest.raises(ConfigurationError):
        degrade(make_hr(), DegradationConfig(noise_sigma=-0.1))


def test_extract_patch_pairs_alignment():
    hr = make_hr(3, size=32)
    lr = degrade(hr, DegradationConfig())
    pairs = extract_patch_pairs(hr, lr, lr_patch=8, scale=2, count=5, seed=11)
    assert len(pairs) == 5
    for lp, hp in pairs:
        assert lp.shape == (3, 8, 8)
        assert hp.shape == (3, 16, 16)
    # determinism
    again = extract_patch_pairs(hr, lr, lr_patch=8, scale=2, count=5, seed=11)
    for (a, b), (c, d) in zip(pairs, again):
        assert np.array_equal(a, c) and np.array_equal(b, d)


def test_extract_patch_pairs_origin_mapping():
    # encode coordinates in the images so alignment is directly checkable
    h = w = 16
    lr = np.arange(h * w, dtype=np.float32).reshape(1, h, w)
    hr = np.kron(lr, np.ones((2, 2), dtype=np.float32))[None][0].reshape(1, 2 * h, 2 * w)
    pairs = extract_patch_pairs(hr, lr, lr_patch=4, scale=2, count=3, seed=5)
    for lp, hp in pairs:
        # every HR patch pixel block matches the LR pixel it upsamples
        assert np.array_equal(hp[0][::2, ::2], lp[0])


def test_extract_patch_pairs_errors():
    hr, lr = make_hr(4, size=32), make_hr(4, size=16)
    with pytest.raises(ShapeError):
        extract_patch_pairs(hr, make_hr(4, size=15), 4, 2, 1, 0)
    with pytest.raises(ConfigurationError):
        extract_patch_pairs(hr, lr, lr_patch=17, scale=2, count=1, seed=0)
