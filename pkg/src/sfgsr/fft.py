"""Radix-2 FFT over the last axis, vectorized across leading dims.

Unnormalized forward transform on (real, imag) array pairs; lengths must
be powers of two.
"""

from __future__ import annotations

import numpy as np

from sfgsr.tensor import ConfigurationError


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft1_pair(re: np.ndarray, im: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Iterative decimation-in-time radix-2 FFT along the last axis."""
    n = re.shape[-1]
    if not _is_pow2(n):
        raise ConfigurationError(f"fft length {n} is not a power of two")
    if n == 1:
        return re.copy(), im.copy()
    rev = _bit_reverse_indices(n)
    re = np.ascontiguousarray(re[..., rev])
    im = np.ascontiguousarray(im[..., rev])
    size = 2
    while size <= n:
        half = size // 2
        ang = -2.0 * np.pi * np.arange(half) / size
        wr = np.cos(ang).astype(re.dtype)
        wi = np.sin(ang).astype(re.dtype)
        rv = re.reshape(re.shape[:-1] + (n // size, size))
        iv = im.reshape(im.shape[:-1] + (n // size, size))
        er = rv[..., :half].copy()
        ei = iv[..., :half].copy()
        orr = rv[..., half:]
        oi = iv[..., half:]
        tr = orr * wr - oi * wi
        ti = orr * wi + oi * wr
        rv[..., :half] = er + tr
        rv[..., half:] = er - tr
        iv[..., :half] = ei + ti
        iv[..., half:] = ei - ti
        size *= 2
    return re, im


def fft2_pair(re: np.ndarray, im: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2D FFT over the last two axes (rows then columns)."""
    re, im = fft1_pair(re, im)
    re = np.swapaxes(re, -1, -2)
    im = np.swapaxes(im, -1, -2)
    re, im = fft1_pair(re, im)
    return np.swapaxes(re, -1, -2), np.swapaxes(im, -1, -2)


def dft2_naive(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """O(N^2) reference DFT of a real 2D array; oracle for tests."""
    h, w = x.shape
    u = np.arange(h)
    v = np.arange(w)
    row_ang = -2.0 * np.pi * np.outer(u, u) / h
    col_ang = -2.0 * np.pi * np.outer(v, v) / w
    fr_row = np.cos(row_ang) + 1j * np.sin(row_ang)
    fr_col = np.cos(col_ang) + 1j * np.sin(col_ang)
    y = fr_row @ x.astype(np.complex128) @ fr_col
    return y.real, y.imag
