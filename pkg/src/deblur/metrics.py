"""Reference-based image and kernel quality metrics."""

from dataclasses import dataclass, field
import csv
import json
import math

import numpy as np
from scipy import signal

from .errors import DimensionError
from .localization import ssim

__all__ = ["MetricReport", "psnr", "ssim", "vif", "fbe", "evaluate_pair",
           "write_reports_csv", "REPORT_SCHEMA", "VIF_PARAMS", "FBE_BANDS"]

REPORT_SCHEMA = "deblur-report/1"
PSNR_CAP = 100.0
VIF_PARAMS = {"variant": "pixel-domain multiscale", "scales": 4, "noise_variance": 2.0,
              "intensity_scale": 255.0, "luma": [0.299, 0.587, 0.114]}
FBE_BANDS = 5


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """PSNR in dB for dynamic range 1, capped at 100 dB."""
    a, b = _pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse < 1e-10:
        return PSNR_CAP
    return float(-10 * np.log10(mse))


def _luma(a):
    if a.ndim == 3 and a.shape[2] == 3:
        return a @ np.asarray(VIF_PARAMS["luma"])
    return a[..., 0] if a.ndim == 3 else a


def _gauss2d(n):
    sd = n / 5.0
    r = np.arange(n) - (n - 1) / 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sd * sd))
    return g / g.sum()


def vif(ref, dist):
    """Pixel-domain visual information fidelity over four Gaussian-pyramid scales.

    Intensities are rescaled to [0, 255] so the observation-noise variance of
    2 has its usual meaning. Scales whose valid filtered region is empty (small
    images) are skipped.
    """
    ref, dist = _pair(ref, dist)
    ref = _luma(ref) * VIF_PARAMS["intensity_scale"]
    dist = _luma(dist) * VIF_PARAMS["intensity_scale"]
    sigma_nsq = VIF_PARAMS["noise_variance"]
    eps = 1e-10
    num = den = 0.0
    for scale in range(1, VIF_PARAMS["scales"] + 1):
        n = 2 ** (VIF_PARAMS["scales"] - scale + 1) + 1
        win = _gauss2d(n)
        if scale > 1:
            if min(ref.shape) < n:
                break
            ref = signal.convolve2d(ref, win, mode="valid")[::2, ::2]
            dist = signal.convolve2d(dist, win, mode="valid")[::2, ::2]
        if min(ref.shape) < n:
            break
        mu1 = signal.convolve2d(ref, win, mode="valid")
        mu2 = signal.convolve2d(dist, win, mode="valid")
        s1 = np.maximum(signal.convolve2d(ref * ref, win, mode="valid") - mu1 * mu1, 0)
        s2 = np.maximum(signal.convolve2d(dist * dist, win, mode="valid") - mu2 * mu2, 0)
        s12 = signal.convolve2d(ref * dist, win, mode="valid") - mu1 * mu2

        g = s12 / (s1 + eps)
        sv = s2 - g * s12
        flat_ref = s1 < eps
        g[flat_ref] = 0
        sv[flat_ref] = s2[flat_ref]
        s1 = np.where(flat_ref, 0, s1)
        flat_dist = s2 < eps
        g[flat_dist] = 0
        sv[flat_dist] = 0
        neg = g < 0
        sv[neg] = s2[neg]
        g[neg] = 0
        sv = np.maximum(sv, eps)

        num += np.sum(np.log10(1 + g * g * s1 / (sv + sigma_nsq)))
        den += np.sum(np.log10(1 + s1 / sigma_nsq))
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return float(num / den)


def _pad_to(k, shape):
    out = np.zeros(shape)
    out[:k.shape[0], :k.shape[1]] = k
    return out


def band_index(shape, bands=FBE_BANDS):
    """Radial band of every DFT bin of an array of ``shape``.

    Radii are in cycles per sample, split into ``bands`` equal-width rings
    up to the Nyquist radius 0.5; corner bins beyond it join the last ring.
    """
    fr = np.fft.fftfreq(shape[0])[:, None]
    fc = np.fft.fftfreq(shape[1])[None, :]
    radius = np.sqrt(fr ** 2 + fc ** 2)
    return np.minimum((radius / 0.5 * bands).astype(int), bands - 1)


def fbe(k_true, k_est, bands=FBE_BANDS):
    """Frequency band error: per-band mean of ``|F(k) - F(k_est)| / |F(k)|``.

    Kernels of different size are zero-padded at the bottom/right to the
    larger size.
    """
    k_true = np.asarray(k_true, dtype=np.float64)
    k_est = np.asarray(k_est, dtype=np.float64)
    shape = (max(k_true.shape[0], k_est.shape[0]), max(k_true.shape[1], k_est.shape[1]))
    ft = np.fft.fft2(_pad_to(k_true, shape))
    fe = np.fft.fft2(_pad_to(k_est, shape))
    rel = np.abs(ft - fe) / np.maximum(np.abs(ft), 1e-12)
    idx = band_index(shape, bands)
    return np.array([rel[idx == b].mean() if np.any(idx == b) else 0.0 for b in range(bands)])


@dataclass
class MetricReport:
    psnr: float = None
    ssim: float = None
    vif: float = None
    fbe: list = None
    provenance: dict = field(default_factory=lambda: {
        "psnr_cap_db": PSNR_CAP, "ssim": {"window": 11, "sigma": 1.5, "K1": 0.01, "K2": 0.03},
        "vif": VIF_PARAMS, "fbe_bands": FBE_BANDS})

    def to_dict(self):
        d = {"schema": REPORT_SCHEMA}
        for name in ("psnr", "ssim", "vif", "fbe"):
            value = getattr(self, name)
            if value is not None:
                d[name] = value
        d["provenance"] = self.provenance
        return d

    def to_json(self, path=None, **extra):
        d = {**self.to_dict(), **extra}
        text = json.dumps(d, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("psnr"), d.get("ssim"), d.get("vif"), d.get("fbe"),
                   d.get("provenance", {}))


def evaluate_pair(x_hat, x_true, k_hat=None, k_true=None):
    """Image metrics for a located estimate, plus FBE when both kernels are given."""
    x_hat, x_true = _pair(x_hat, x_true)
    report = MetricReport(psnr(x_hat, x_true), ssim(x_hat, x_true), vif(x_true, x_hat))
    if k_hat is not None and k_true is not None:
        report.fbe = [float(v) for v in fbe(k_true, k_hat)]
    return report


def write_reports_csv(path, rows):
    """One row per case: ``rows`` are dicts with ``case``, ``config_hash``, metrics and ``error``."""
    fields = ["case", "config_hash", "psnr", "ssim", "vif"] + \
        [f"fbe{i}" for i in range(FBE_BANDS)] + ["error"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            row = dict(row)
            if row.get("fbe") is not None:
                row.update({f"fbe{i}": v for i, v in enumerate(row["fbe"])})
            w.writerow(row)
