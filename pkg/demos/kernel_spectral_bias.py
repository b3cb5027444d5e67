"""Compare how fast a sinusoidal field and a softmax MLP fit kernel detail.

Both generators regress onto the same motion kernel; the frequency band
errors show which one reaches the fine structure first.
Run: python demos/kernel_spectral_bias.py [steps]
"""

import sys

from deblur.data import motion_kernel
from deblur.generators import init_kernel_field, regress_kernel
from deblur.metrics import FBE_BANDS, fbe

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 500
target = motion_kernel((13, 13), seed=0)

for model in ("siren", "mlp"):
    field = init_kernel_field(target.shape, seed=0, model=model)
    marks = {}
    regress_kernel(field, target, steps=steps,
                   callback=lambda s, k: marks.__setitem__(s, fbe(target, k))
                   if s % max(steps // 4, 1) == 0 or s == steps else None)
    print(model)
    for s, bands in sorted(marks.items()):
        print("  step", s, " ".join(f"{b:.3f}" for b in bands))
print(FBE_BANDS, "bands, lowest frequency first")
