"""Unitary discrete Fourier transform as a differentiable dense linear map."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import tensor as T
from .tensor import Tensor, as_tensor


@dataclass
class ComplexTensor:
    re: Tensor
    im: Tensor

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise T.ShapeError(f"re/im shape mismatch: {self.re.shape} vs {self.im.shape}")

    @property
    def shape(self) -> tuple:
        return self.re.shape

    def abs(self) -> Tensor:
        return T.sqrt(self.re * self.re + self.im * self.im)

    def angle(self) -> Tensor:
        return T.atan2(self.im, self.re)

    def to_numpy(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data


@lru_cache(maxsize=64)
def dft_matrices(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Real and imaginary parts of the n x n unitary DFT matrix.

    Entry (k, t) is ``exp(-2j*pi*k*t/n) / sqrt(n)``.  Angles are reduced mod n
    before evaluation and exact quarter turns are snapped so that, e.g., the
    Nyquist row has an imaginary part of exactly zero.
    """
    if n < 1:
        raise ValueError("DFT length must be >= 1")
    k = np.arange(n)
    m = np.outer(k, k) % n
    ang = 2.0 * np.pi * m / n
    c, s = np.cos(ang), np.sin(ang)
    quarter = (4 * m) % n == 0
    q = (4 * m // n) % 4
    c = np.where(quarter, np.choose(q, [1.0, 0.0, -1.0, 0.0]), c)
    s = np.where(quarter, np.choose(q, [0.0, 1.0, 0.0, -1.0]), s)
    scale = 1.0 / np.sqrt(n)
    c, s = c * scale + 0.0, -s * scale + 0.0
    c.setflags(write=False)
    s.setflags(write=False)
    return c, s


def _apply(mat: np.ndarray, x: Tensor, axis: int) -> Tensor:
    # mat is symmetric, so x @ mat and mat @ x are both the transform
    if x.ndim == 1:
        return (x.reshape(1, -1) @ Tensor(mat)).reshape(-1)
    axis = axis % x.ndim
    if axis == x.ndim - 1:
        return x @ Tensor(mat)
    if axis == x.ndim - 2:
        return Tensor(mat) @ x
    return _apply(mat, x.swapaxes(axis, -1), -1).swapaxes(axis, -1)


def dft(x: Tensor | ComplexTensor, axis: int = -1) -> ComplexTensor:
    """Forward DFT with 1/sqrt(n) normalisation along ``axis``."""
    if isinstance(x, ComplexTensor):
        n = x.shape[axis]
        c, s = dft_matrices(n)
        re = _apply(c, x.re, axis) - _apply(s, x.im, axis)
        im = _apply(s, x.re, axis) + _apply(c, x.im, axis)
        return ComplexTensor(re, im)
    x = as_tensor(x)
    c, s = dft_matrices(x.shape[axis])
    return ComplexTensor(_apply(c, x, axis), _apply(s, x, axis))


def idft_complex(f: ComplexTensor, axis: int = -1) -> ComplexTensor:
    """Inverse unitary DFT returning both real and imaginary parts."""
    c, s = dft_matrices(f.shape[axis])
    re = _apply(c, f.re, axis) + _apply(s, f.im, axis)
    im = _apply(c, f.im, axis) - _apply(s, f.re, axis)
    return ComplexTensor(re, im)


def idft(f: ComplexTensor, axis: int = -1) -> Tensor:
    """Real part of the inverse unitary DFT."""
    c, s = dft_matrices(f.shape[axis])
    return _apply(c, f.re, axis) + _apply(s, f.im, axis)
