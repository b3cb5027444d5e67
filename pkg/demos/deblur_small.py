"""Blind deblurring of a small synthetic case with early stopping.

Run: python demos/deblur_small.py [iterations]
A few hundred iterations take a few minutes on one CPU core.
"""

import sys

import numpy as np

from deblur.data import desk_case
from deblur.metrics import psnr
from deblur.pipeline import deblur
from deblur.solver import SolverConfig

iters = int(sys.argv[1]) if len(sys.argv) > 1 else 300
y, x_true, k_true = desk_case(size=64, k_size=(7, 7), sigma=0.01)
print("blurry input PSNR", round(psnr(y, x_true), 2), "dB")

cfg = SolverConfig(max_iters=iters, trace_every=50)
out = deblur(y, obj=None, cfg=cfg, x_true=x_true, k_true=k_true,
             callback=lambda it, v, s: print("iter", it, "loss", round(v, 6))
             if it % 50 == 0 else None)

r = out.result
print("best iterate", r.best_iter, "stopped at", r.stop_iter)
print("estimate PSNR", round(out.report.psnr, 2), "dB  SSIM", round(out.report.ssim, 3))
print("kernel size", out.kernel.shape, "mass", round(float(np.sum(out.kernel)), 4))
