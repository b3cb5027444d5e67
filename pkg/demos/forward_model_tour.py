"""Walk through the truncated forward model and the shift ambiguity.

Run: python demos/forward_model_tour.py
"""

import numpy as np

from deblur.data import motion_kernel, scene
from deblur.forward_model import convolve_truncated, plan_sizes, shift_pair
from deblur.localization import locate_image

# A 64x64 observation with no declared kernel size gets a half-size kernel.
plan = plan_sizes((64, 64))
print("y", plan.y_size, "kernel", plan.k_size, "canvas", plan.x_size)

# Leave zero margins on both canvases so small shifts stay admissible.
x = np.zeros(plan.x_size)
x[5:-5, 5:-5] = scene((plan.x_size[0] - 10, plan.x_size[1] - 10))
k = motion_kernel((9, 9), seed=0)
k_canvas = np.zeros(plan.k_size)
k_canvas[10:19, 10:19] = k
y = convolve_truncated(x, k_canvas)
print("observation", y.shape, "range", y.min().round(3), y.max().round(3))

# Moving the kernel one way and the canvas the other leaves y untouched.
k2, x2 = shift_pair(k_canvas, x, (3, -2))
print("max |y - y'| after shift", np.abs(convolve_truncated(x2, k2) - y).max())

# A delta kernel at the centre shows which canvas window the observation sees.
delta = np.zeros(plan.k_size)
delta[plan.k_size[0] // 2, plan.k_size[1] // 2] = 1.0
x = scene(plan.x_size)
window, placement = locate_image(x, convolve_truncated(x, delta))
print("located offset", placement.offset, "ssim", round(placement.score, 4))
