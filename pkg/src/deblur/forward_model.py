"""Truncated linear convolution, size planning and the bounded shift symmetry.

Index convention: ``k`` is applied as a true convolution, so the output is

    y(i, j) = sum_{a, b} k(a, b) * x(i + n_k - 1 - a, j + m_k - 1 - b)

which is the "valid" part of the full linear convolution ``k * x``. A delta
kernel at ``(a0, b0)`` therefore returns the crop of ``x`` starting at
``(n_k - 1 - a0, m_k - 1 - b0)``, and kernel and image contents can move in
opposite directions without changing ``y``.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import signal
import torch

from .errors import DimensionError, InvalidSpecificationError, OutOfSupportError

__all__ = [
    "SizingPlan",
    "plan_sizes",
    "convolve_truncated",
    "convolve_truncated_torch",
    "shift_array",
    "shift_pair",
]


@dataclass(frozen=True)
class SizingPlan:
    """Observation, kernel and latent canvas sizes, each as ``(rows, cols)``."""

    y_size: tuple
    k_size: tuple
    x_size: tuple

    def to_dict(self):
        return {"y_size": list(self.y_size), "k_size": list(self.k_size),
                "x_size": list(self.x_size)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["y_size"]), tuple(d["k_size"]), tuple(d["x_size"]))


def plan_sizes(y_size, k_size=None):
    """Plan kernel and latent-image canvas sizes for an observation.

    Without a kernel size the kernel canvas is half the observation in each
    direction (rounded up). The latent canvas is the region of the scene that
    can reach the observation through the kernel: ``n_y + n_k - 1`` rows by
    ``m_y + m_k - 1`` columns.
    """
    n_y, m_y = (int(v) for v in y_size)
    if n_y < 1 or m_y < 1:
        raise InvalidSpecificationError(f"observation size must be positive, got {y_size}")
    if k_size is None:
        n_k, m_k = math.ceil(n_y / 2), math.ceil(m_y / 2)
    else:
        n_k, m_k = (int(v) for v in k_size)
        if n_k < 1 or m_k < 1:
            raise InvalidSpecificationError(f"kernel size must be positive, got {k_size}")
        if n_k > n_y or m_k > m_y:
            raise InvalidSpecificationError(
                f"kernel size {k_size} exceeds observation size {y_size}; "
                "the latent image would be under-determined")
    return SizingPlan((n_y, m_y), (n_k, m_k), (n_y + n_k - 1, m_y + m_k - 1))


def convolve_truncated(x, k, y_size=None):
    """Valid-region convolution of an image canvas with a kernel.

    ``x`` is ``(H, W)`` or ``(H, W, C)``; every channel is blurred with the
    same kernel. If ``y_size`` is given the output size is checked against it.
    """
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2:
        raise DimensionError(f"kernel must be 2-D, got shape {k.shape}")
    if x.ndim not in (2, 3):
        raise DimensionError(f"image must be 2-D or 3-D, got shape {x.shape}")
    n_x, m_x = x.shape[:2]
    n_k, m_k = k.shape
    if n_k > n_x or m_k > m_x:
        raise DimensionError(f"kernel {k.shape} larger than image canvas {x.shape[:2]}")
    out_size = (n_x - n_k + 1, m_x - m_k + 1)
    if y_size is not None and tuple(y_size) != out_size:
        raise DimensionError(
            f"canvas {x.shape[:2]} and kernel {k.shape} give {out_size}, expected {tuple(y_size)}")
    if x.ndim == 2:
        return signal.convolve(x, k, mode="valid")
    return np.stack([signal.convolve(x[..., c], k, mode="valid")
                     for c in range(x.shape[2])], axis=-1)


def convolve_truncated_torch(x, k):
    """Differentiable counterpart of :func:`convolve_truncated`.

    ``x`` has shape ``(N, C, H, W)`` and ``k`` shape ``(h, w)``. Uses a
    circular FFT of the canvas size; wrap-around only pollutes the rows and
    columns that the valid crop discards.
    """
    n_x, m_x = x.shape[-2:]
    n_k, m_k = k.shape
    if n_k > n_x or m_k > m_x:
        raise DimensionError(f"kernel {tuple(k.shape)} larger than image canvas {(n_x, m_x)}")
    size = (n_x, m_x)
    full = torch.fft.irfft2(torch.fft.rfft2(x, s=size) * torch.fft.rfft2(k, s=size), s=size)
    return full[..., n_k - 1:, m_k - 1:]


def shift_array(a, offset, strict=True):
    """Translate ``a`` by ``offset`` along its first two axes, zero filling.

    With ``strict`` a shift that pushes nonzero entries off the canvas raises
    :class:`OutOfSupportError`; otherwise those entries are dropped.
    """
    a = np.asarray(a)
    dr, dc = (int(v) for v in offset)
    rows, cols = a.shape[:2]
    out = np.zeros_like(a)
    if abs(dr) >= rows or abs(dc) >= cols:
        if strict and np.any(a != 0):
            raise OutOfSupportError(f"shift {offset} moves all content off a {a.shape[:2]} canvas")
        return out
    src_r = slice(max(0, -dr), rows - max(0, dr))
    src_c = slice(max(0, -dc), cols - max(0, dc))
    dst_r = slice(max(0, dr), rows - max(0, -dr))
    dst_c = slice(max(0, dc), cols - max(0, -dc))
    kept = a[src_r, src_c]
    if strict and np.count_nonzero(kept) != np.count_nonzero(a):
        raise OutOfSupportError(f"shift {offset} moves nonzero content off the canvas")
    out[dst_r, dst_c] = kept
    return out


def shift_pair(k, x, tau):
    """Shift the kernel by ``-tau`` and the image by ``+tau``.

    For admissible shifts the truncated convolution of the pair is unchanged.
    """
    tau = tuple(int(v) for v in tau)
    return shift_array(k, (-tau[0], -tau[1])), shift_array(x, tau)
