"""Locating the observed field of view inside an overspecified canvas.

Both canvases are only known up to opposite shifts. The image estimate is
located by sliding the observation over the canvas and keeping the window of
highest SSIM; the kernel is then moved by the same displacement (relative to
the centred placement) so that the pair stays consistent.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch

from .errors import DimensionError
from .forward_model import shift_array

__all__ = ["Placement", "ssim", "ssim_scan", "locate_image", "locate_kernel", "centered_offset"]

WINDOW = 11
WINDOW_SIGMA = 1.5
K1, K2 = 0.01, 0.03


@dataclass(frozen=True)
class Placement:
    offset: tuple
    score: float


def _gaussian(size, sigma=WINDOW_SIGMA):
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-r ** 2 / (2 * sigma ** 2))
    return torch.as_tensor(g / g.sum(), dtype=torch.float64)


def _chw(a):
    a = torch.as_tensor(np.asarray(a, dtype=np.float64))
    if a.ndim == 2:
        return a[None]
    if a.ndim == 3:
        return a.permute(2, 0, 1)
    raise DimensionError(f"expected a 2-D or 3-D image, got shape {tuple(a.shape)}")


def _window_size(shape):
    # Images smaller than the window fall back to the largest odd window that fits.
    w = min(WINDOW, *shape)
    return w if w % 2 else w - 1


@lru_cache(maxsize=32)
def _band(n, win):
    """``(n - win + 1, n)`` matrix whose rows are the shifted Gaussian window."""
    g = _gaussian(win)
    band = torch.zeros(n - win + 1, n, dtype=torch.float64)
    for i in range(n - win + 1):
        band[i, i:i + win] = g
    return band


def _filter(t, win):
    """Valid Gaussian filtering of ``(B, H, W)`` stacks.

    Written as two dense banded matrix products, which runs far faster than
    a direct separable convolution for these sizes.
    """
    return _band(t.shape[-2], win) @ t @ _band(t.shape[-1], win).T


def _ssim_from_stats(mu_a, mu_b, e_aa, e_bb, e_ab):
    c1, c2 = K1 ** 2, K2 ** 2
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    return ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))


def ssim(a, b):
    """Mean SSIM with an 11x11 Gaussian window (std 1.5), dynamic range 1.

    The map covers window positions that lie fully inside the image; colour
    images are averaged over channels.
    """
    a, b = _chw(a), _chw(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    win = _window_size(a.shape[1:])
    m = _ssim_from_stats(_filter(a, win), _filter(b, win), _filter(a * a, win),
                         _filter(b * b, win), _filter(a * b, win))
    return float(m.mean())


def ssim_scan(canvas, template, chunk=128):
    """SSIM between ``template`` and every stride-1 window of ``canvas``.

    Returns an array of shape ``(n_x - n_y + 1, m_x - m_y + 1)``. Local
    statistics of the canvas are filtered once; only the cross term is
    recomputed per window.
    """
    c, t = _chw(canvas), _chw(template)
    if c.shape[0] != t.shape[0]:
        raise DimensionError("canvas and template have different channel counts")
    ch, n_x, m_x = c.shape
    _, n_y, m_y = t.shape
    if n_x < n_y or m_x < m_y:
        raise DimensionError(f"canvas {(n_x, m_x)} smaller than template {(n_y, m_y)}")
    win = _window_size((n_y, m_y))
    mh, mw = n_y - win + 1, m_y - win + 1
    mu_c = _filter(c, win).unfold(1, mh, 1).unfold(2, mw, 1)
    e_cc = _filter(c * c, win).unfold(1, mh, 1).unfold(2, mw, 1)
    mu_t, e_tt = _filter(t, win), _filter(t * t, win)
    windows = c.unfold(1, n_y, 1).unfold(2, m_y, 1)
    rows, cols = windows.shape[1:3]
    offsets = [(r, q) for r in range(rows) for q in range(cols)]
    scores = np.empty(len(offsets))
    for start in range(0, len(offsets), chunk):
        idx = offsets[start:start + chunk]
        r = torch.tensor([o[0] for o in idx])
        q = torch.tensor([o[1] for o in idx])
        w = windows[:, r, q]                                  # (C, B, n_y, m_y)
        e_ct = _filter((w * t[:, None]).reshape(-1, n_y, m_y), win).view(ch, len(idx), mh, mw)
        m = _ssim_from_stats(mu_c[:, r, q], mu_t[:, None], e_cc[:, r, q], e_tt[:, None], e_ct)
        scores[start:start + len(idx)] = m.mean(dim=(0, 2, 3)).numpy()
    return scores.reshape(rows, cols)


def locate_image(x_canvas, y):
    """Crop the window of ``x_canvas`` most similar (SSIM) to ``y``.

    Ties go to the smallest row, then the smallest column offset.
    """
    x_canvas = np.asarray(x_canvas)
    y = np.asarray(y)
    if x_canvas.shape[0] < y.shape[0] or x_canvas.shape[1] < y.shape[1]:
        raise DimensionError(f"canvas {x_canvas.shape[:2]} smaller than template {y.shape[:2]}")
    scores = ssim_scan(x_canvas, y)
    r, q = divmod(int(np.argmax(scores)), scores.shape[1])
    crop = x_canvas[r:r + y.shape[0], q:q + y.shape[1]]
    return crop.copy(), Placement((r, q), float(scores[r, q]))


def centered_offset(plan):
    """Offset of the centred observation window inside the latent canvas."""
    return ((plan.x_size[0] - plan.y_size[0]) // 2, (plan.x_size[1] - plan.y_size[1]) // 2)


def locate_kernel(k_canvas, placement, plan):
    """Move the kernel canvas to match a located image window.

    The image content sits ``d = offset - centred_offset`` away from the
    centre, which means the kernel content sits ``d`` away from its own
    centre in the other direction; shifting the kernel by ``+d`` undoes it.
    Mass pushed off the canvas is dropped and the rest renormalized.
    """
    k_canvas = np.asarray(k_canvas, dtype=np.float64)
    c = centered_offset(plan)
    d = (placement.offset[0] - c[0], placement.offset[1] - c[1])
    k = shift_array(k_canvas, d, strict=False)
    total, before = k.sum(), k_canvas.sum()
    if total > 0 and not np.isclose(total, before, rtol=0, atol=1e-12):
        k = k * (before / total)
    return k
