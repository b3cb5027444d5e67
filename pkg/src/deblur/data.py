"""Synthetic scenes and blur kernels for desk-scale experiments."""

import numpy as np
from scipy import ndimage
from skimage import data as skdata
from skimage.transform import resize

from .degradation import add_gaussian
from .errors import ParameterError
from .forward_model import convolve_truncated

__all__ = ["scene", "motion_kernel", "gaussian_kernel", "delta_kernel", "center_crop", "desk_case"]

_SCENES = {
    "camera": lambda: skdata.camera() / 255.0,
    "astronaut": lambda: skdata.astronaut() / 255.0,
    "coffee": lambda: skdata.coffee() / 255.0,
    "chelsea": lambda: skdata.chelsea() / 255.0,
}


def scene(size, name="camera", channels=1):
    """A natural test image resized to ``size`` with values in [0, 1]."""
    if name not in _SCENES:
        raise ParameterError(f"unknown scene {name!r}; choose from {sorted(_SCENES)}")
    img = _SCENES[name]()
    if img.ndim == 3 and channels == 1:
        img = img @ np.array([0.299, 0.587, 0.114])
    elif img.ndim == 2 and channels == 3:
        img = np.repeat(img[..., None], 3, axis=2)
    side = min(img.shape[:2])
    img = img[:side, :side]
    out = resize(img, tuple(size), anti_aliasing=True, order=3)
    return np.clip(out, 0, 1)


def motion_kernel(size, seed=0, length=None, steps=400):
    """Random camera-shake trajectory rasterized onto a ``size`` grid.

    The trajectory is a random walk with momentum; it is splatted bilinearly,
    normalized to sum one and shifted so its centroid sits on the centre
    pixel.
    """
    n, m = size
    rng = np.random.default_rng(seed)
    length = length if length is not None else 1.2 * min(n, m)
    angle = rng.uniform(0, 2 * np.pi)
    pos = np.zeros(2)
    vel = np.array([np.cos(angle), np.sin(angle)])
    pts = [pos.copy()]
    for _ in range(steps):
        vel = vel + 0.06 * rng.standard_normal(2)
        vel /= np.linalg.norm(vel)
        pos = pos + vel * length / steps
        pts.append(pos.copy())
    pts = np.array(pts)
    pts -= pts.mean(axis=0)
    extent = np.abs(pts).max(axis=0)
    limit = np.array([(n - 3) / 2, (m - 3) / 2])
    pts *= min(1.0, *(limit / np.maximum(extent, 1e-9)))
    pts += np.array([(n - 1) / 2, (m - 1) / 2])
    k = np.zeros((n, m))
    for r, c in pts:
        r0, c0 = int(np.floor(r)), int(np.floor(c))
        fr, fc = r - r0, c - c0
        for dr, wr in ((0, 1 - fr), (1, fr)):
            for dc, wc in ((0, 1 - fc), (1, fc)):
                k[r0 + dr, c0 + dc] += wr * wc
    k = ndimage.gaussian_filter(k, 0.5)
    k /= k.sum()
    com = np.array(ndimage.center_of_mass(k))
    shift = np.round(np.array([(n - 1) / 2, (m - 1) / 2]) - com).astype(int)
    k = ndimage.shift(k, shift, order=0, mode="constant")
    return k / k.sum()


def gaussian_kernel(size, sigma):
    r = np.arange(size[0]) - (size[0] - 1) / 2
    c = np.arange(size[1]) - (size[1] - 1) / 2
    k = np.exp(-(r[:, None] ** 2 + c[None, :] ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def delta_kernel(size, position=None):
    k = np.zeros(size)
    k[position if position is not None else (size[0] // 2, size[1] // 2)] = 1.0
    return k


def center_crop(x, size):
    r = (x.shape[0] - size[0]) // 2
    c = (x.shape[1] - size[1]) // 2
    return x[r:r + size[0], c:c + size[1]]


def desk_case(size=128, k_size=(13, 13), sigma=0.01, kernel_seed=0, noise_seed=100,
              blur=True, name="camera"):
    """Small synthetic blind-deblurring case ``(y, x_true, k_true)``.

    The scene is rendered ``k_size - 1`` pixels larger than ``size`` and blurred
    with a random motion kernel (valid region), so ``y`` has shape ``size``.
    The groundtruth is the scene window that the centred kernel maps onto
    ``y``. Without ``blur`` the kernel is a delta and ``y`` is the noisy scene.
    """
    size = (size, size) if np.isscalar(size) else tuple(size)
    if not blur:
        x = scene(size, name)
        return add_gaussian(x, sigma, noise_seed), x, delta_kernel((1, 1))
    full = (size[0] + k_size[0] - 1, size[1] + k_size[1] - 1)
    x = scene(full, name)
    k = motion_kernel(k_size, seed=kernel_seed)
    y = add_gaussian(convolve_truncated(x, k), sigma, noise_seed)
    r, c = (k_size[0] - 1) - k_size[0] // 2, (k_size[1] - 1) - k_size[1] // 2
    return y, x[r:r + size[0], c:c + size[1]], k
