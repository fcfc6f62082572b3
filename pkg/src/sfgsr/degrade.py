"""Sensor-style HR -> LR simulation: Gaussian blur, bicubic downsample,
seeded Gaussian noise, plus aligned patch-pair extraction.

All randomness comes from the counter-based generator, so a given
(image, config, seed) always produces bitwise-identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sfgsr import functional as F
from sfgsr.resample import bicubic_resize
from sfgsr.rng import CounterRng, derive_seed
from sfgsr.tensor import ConfigurationError, ShapeError, Tensor


@dataclass
class DegradationConfig:
    blur_sigma: float = 1.0
    blur_kernel_size: int = 7
    scale: int = 2
    noise_sigma: float = 2.0 / 255.0
    seed: int = 42

    def validate(self):
        if self.blur_kernel_size % 2 == 0:
            raise ConfigurationError(
                f"blur_kernel_size {self.blur_kernel_size} must be odd"
            )
        if self.scale < 1:
            raise ConfigurationError(f"scale {self.scale} must be >= 1")
        if self.noise_sigma < 0:
            raise ConfigurationError(f"noise_sigma {self.noise_sigma} must be >= 0")


def gaussian_kernel(sigma: float, k: int) -> np.ndarray:
    """Normalized discrete k x k Gaussian (float64)."""
    if k % 2 == 0:
        raise ConfigurationError(f"gaussian_kernel: size {k} must be odd")
    r = np.arange(k, dtype=np.float64) - (k - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    kern = np.outer(g, g)
    return kern / kern.sum()


def degrade(hr, config: DegradationConfig, image_index: int = 0) -> np.ndarray:
    """Blur (replicate pad) -> bicubic 1/scale -> add noise -> clamp to [0,1].

    hr: [bands, H, W] with values in [0,1]; H, W divisible by scale.
    The noise stream is keyed by (config.seed, image_index).
    """
    config.validate()
    data = (hr.data if isinstance(hr, Tensor) else np.asarray(hr)).astype(np.float32)
    if data.ndim != 3:
        raise ShapeError(f"degrade expects [bands, H, W], got {data.shape}")
    b, h, w = data.shape
    if h % config.scale or w % config.scale:
        raise ShapeError(f"degrade: {h}x{w} not divisible by scale {config.scale}")

    kern = gaussian_kernel(config.blur_sigma, config.blur_kernel_size).astype(np.float32)
    kernel = Tensor(np.broadcast_to(kern, (b,) + kern.shape).copy())
    blurred = F.depthwise_conv2d(Tensor(data[None]), kernel, pad_mode="replicate").data[0]

    lr = bicubic_resize(blurred, 1.0 / config.scale).data.astype(np.float32)

    if config.noise_sigma > 0:
        rng = CounterRng(derive_seed(config.seed, image_index))
        noise = rng.normal(lr.size).reshape(lr.shape).astype(np.float32)
        lr = lr + np.float32(config.noise_sigma) * noise
    return np.clip(lr, 0.0, 1.0)


def extract_patch_pairs(
    hr, lr, lr_patch: int, scale: int, count: int, seed: int
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Random aligned (lr_patch, hr_patch) crops; hr origin = scale * lr origin."""
    hr_d = hr.data if isinstance(hr, Tensor) else np.asarray(hr)
    lr_d = lr.data if isinstance(lr, Tensor) else np.asarray(lr)
    if hr_d.shape[-2:] != (scale * lr_d.shape[-2], scale * lr_d.shape[-1]):
        raise ShapeError(f"hr {hr_d.shape} is not scale={scale} times lr {lr_d.shape}")
    h, w = lr_d.shape[-2:]
    if lr_patch > h or lr_patch > w:
        raise ConfigurationError(f"patch {lr_patch} larger than LR image {h}x{w}")
    rng = CounterRng(seed)
    rows = rng.integers(count, h - lr_patch + 1)
    cols = rng.integers(count, w - lr_patch + 1)
    pairs = []
    for i, j in zip(rows, cols):
        i, j = int(i), int(j)
        lp = lr_d[..., i:i + lr_patch, j:j + lr_patch].copy()
        hp = hr_d[
            ...,
            scale * i:scale * (i + lr_patch),
            scale * j:scale * (j + lr_patch),
        ].copy()
        pairs.append((lp, hp))
    return pairs
