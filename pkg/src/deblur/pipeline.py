"""End-to-end blind deblurring of a single observation."""

from dataclasses import dataclass

import numpy as np

from .forward_model import plan_sizes
from .localization import locate_image, locate_kernel
from .metrics import evaluate_pair, psnr
from .objective import ObjectiveConfig
from .solver import SolverConfig, run

__all__ = ["Deblurred", "deblur"]


@dataclass
class Deblurred:
    image: np.ndarray
    kernel: np.ndarray
    placement: object
    plan: object
    result: object
    report: object = None
    final_image: np.ndarray = None
    final_kernel: np.ndarray = None
    best_psnr: float = None
    final_psnr: float = None


def deblur(y, kernel_size=None, obj=None, cfg=None, x_true=None, k_true=None,
           locate_final=False, **run_kwargs):
    """Plan sizes, optimize, then locate the image window and align the kernel.

    With ``x_true`` the report carries reference metrics for the located
    early-stopped estimate; ``locate_final`` also locates the last iterate.
    """
    obj = obj or ObjectiveConfig()
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=np.float64)
    plan = plan_sizes(y.shape[:2], kernel_size)
    result = run(y, plan, obj, cfg, x_true=x_true, **run_kwargs)
    x_hat, placement = locate_image(np.clip(result.best_image, 0, 1), y)
    k_hat = locate_kernel(result.best_kernel, placement, plan)
    out = Deblurred(x_hat, k_hat, placement, plan, result)
    if locate_final:
        xf, pf = locate_image(np.clip(result.final_image, 0, 1), y)
        out.final_image = xf
        out.final_kernel = locate_kernel(result.final_kernel, pf, plan)
    if x_true is not None:
        k_cmp = None
        if k_true is not None:
            k_cmp = _common_kernel(k_hat, k_true)
        out.report = evaluate_pair(x_hat, x_true, k_cmp, k_true)
        out.best_psnr = out.report.psnr
        if out.final_image is not None:
            out.final_psnr = psnr(out.final_image, x_true)
    return out


def _common_kernel(k_hat, k_true):
    """Crop the estimate around its centre to the true kernel's size when larger."""
    if k_hat.shape[0] <= k_true.shape[0] and k_hat.shape[1] <= k_true.shape[1]:
        return k_hat
    r = max(0, k_hat.shape[0] // 2 - k_true.shape[0] // 2)
    c = max(0, k_hat.shape[1] // 2 - k_true.shape[1] // 2)
    return k_hat[r:r + k_true.shape[0], c:c + k_true.shape[1]]
