"""Image and kernel generators.

The image is the output of an untrained encoder-decoder fed a frozen random
input; the kernel is a sinusoidal coordinate network sampled on a fixed
lattice over ``[-1, 1]^2`` and normalized onto the simplex.
"""

import io
import json
import math

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .errors import ArchitectureError, ParameterError

__all__ = [
    "ImageGenerator",
    "KernelField",
    "KernelMLP",
    "init_image_generator",
    "init_kernel_field",
    "render_image",
    "render_kernel",
    "count_parameters",
    "regress_kernel",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_FORMAT",
]

CHECKPOINT_FORMAT = "deblur-checkpoint/1"

DEFAULT_WIDTHS = (16, 32, 64, 128, 256)


def _conv_bn_act(cin, cout, size, stride=1):
    return [
        nn.ReflectionPad2d(size // 2),
        nn.Conv2d(cin, cout, size, stride=stride),
        nn.BatchNorm2d(cout),
        nn.LeakyReLU(0.2, inplace=True),
    ]


class ImageGenerator(nn.Module):
    """Encoder-decoder with skip connections producing an image in (0, 1).

    Downsample block: strided conv, batchnorm, leaky ReLU, conv, batchnorm,
    leaky ReLU. Skip block: 1x1 conv, batchnorm, leaky ReLU. Upsample block:
    bilinear upsampling of the deeper features to the skip resolution,
    concatenation, batchnorm, 3x3 conv, batchnorm, leaky ReLU, 1x1 conv,
    batchnorm, leaky ReLU. A 1x1 conv and a sigmoid produce the output.

    The module is kept in training mode: batch statistics are always taken
    from the single seed input, so the output depends only on the parameters.
    """

    def __init__(self, x_size, channels=1, widths=DEFAULT_WIDTHS, skip=4,
                 input_channels=32, input_scale=0.1):
        super().__init__()
        x_size = tuple(int(v) for v in x_size)
        factor = 2 ** len(widths)
        if min(x_size) < factor:
            raise ArchitectureError(
                f"canvas {x_size} smaller than total downsampling factor {factor}")
        self.x_size = x_size
        self.channels = int(channels)
        self.widths = tuple(int(w) for w in widths)
        self.skip = int(skip)
        self.input_channels = int(input_channels)
        self.input_scale = float(input_scale)

        self.skips = nn.ModuleList()
        self.downs = nn.ModuleList()
        self.ups = nn.ModuleList()
        cin = self.input_channels
        for w in self.widths:
            self.skips.append(nn.Sequential(*_conv_bn_act(cin, self.skip, 1)))
            self.downs.append(nn.Sequential(*_conv_bn_act(cin, w, 3, 2), *_conv_bn_act(w, w, 3)))
            cin = w
        for i, w in enumerate(self.widths):
            deeper = self.widths[i + 1] if i + 1 < len(self.widths) else self.widths[-1]
            self.ups.append(nn.Sequential(
                nn.BatchNorm2d(self.skip + deeper),
                *_conv_bn_act(self.skip + deeper, w, 3),
                *_conv_bn_act(w, w, 1),
            ))
        self.head = nn.Conv2d(self.widths[0], self.channels, 1)
        self.register_buffer("z", self.input_scale * torch.rand(1, self.input_channels, *x_size))

    def forward(self, z=None):
        h = self.z if z is None else z
        skips = []
        for skip, down in zip(self.skips, self.downs):
            skips.append(skip(h))
            h = down(h)
        for i in reversed(range(len(self.widths))):
            h = F.interpolate(h, size=skips[i].shape[-2:], mode="bilinear", align_corners=False)
            h = self.ups[i](torch.cat([skips[i], h], dim=1))
        return torch.sigmoid(self.head(h))

    def descriptor(self):
        return {"type": "image_unet", "x_size": list(self.x_size), "channels": self.channels,
                "widths": list(self.widths), "skip": self.skip,
                "input_channels": self.input_channels, "input_scale": self.input_scale}


class _Sine(nn.Module):
    def __init__(self, cin, cout, omega, first):
        super().__init__()
        self.omega = omega
        self.linear = nn.Linear(cin, cout)
        bound = 1 / cin if first else math.sqrt(6 / cin) / omega
        with torch.no_grad():
            self.linear.weight.uniform_(-bound, bound)

    def forward(self, h):
        return torch.sin(self.omega * self.linear(h))


def coordinate_grid(k_size):
    """Pixel centres of a ``k_size`` lattice mapped affinely onto ``[-1, 1]^2``.

    A dimension of length one maps to the single coordinate 0.
    """
    axes = [torch.linspace(-1, 1, n) if n > 1 else torch.zeros(1) for n in k_size]
    rows, cols = torch.meshgrid(*axes, indexing="ij")
    return torch.stack([rows.reshape(-1), cols.reshape(-1)], dim=1)


class KernelField(nn.Module):
    """Sinusoidal coordinate network evaluated on the kernel lattice."""

    def __init__(self, k_size, width=64, depth=2, omega=30.0):
        super().__init__()
        self.k_size = tuple(int(v) for v in k_size)
        self.width = int(width)
        self.depth = int(depth)
        self.omega = float(omega)
        layers = [_Sine(2, self.width, self.omega, first=True)]
        for _ in range(self.depth - 1):
            layers.append(_Sine(self.width, self.width, self.omega, first=False))
        self.body = nn.Sequential(*layers)
        self.out = nn.Linear(self.width, 1)
        bound = math.sqrt(6 / self.width) / self.omega
        with torch.no_grad():
            self.out.weight.uniform_(-bound, bound)
        self.register_buffer("grid", coordinate_grid(self.k_size))

    def forward(self):
        return torch.sigmoid(self.out(self.body(self.grid))).reshape(self.k_size)

    def descriptor(self):
        return {"type": "siren", "k_size": list(self.k_size), "width": self.width,
                "depth": self.depth, "omega": self.omega}


class KernelMLP(nn.Module):
    """Fully connected kernel generator used as the ablation baseline.

    A frozen random code goes through one hidden ReLU6 layer to all kernel
    entries at once, followed by a softmax over the entries, so the output
    already lies on the simplex.
    """

    def __init__(self, k_size, code_size=200, hidden=1000):
        super().__init__()
        self.k_size = tuple(int(v) for v in k_size)
        self.code_size = int(code_size)
        self.hidden = int(hidden)
        self.net = nn.Sequential(
            nn.Linear(self.code_size, self.hidden),
            nn.ReLU6(),
            nn.Linear(self.hidden, self.k_size[0] * self.k_size[1]),
        )
        self.register_buffer("z", torch.rand(self.code_size))

    def forward(self):
        return torch.softmax(self.net(self.z), dim=0).reshape(self.k_size)

    def descriptor(self):
        return {"type": "mlp", "k_size": list(self.k_size), "code_size": self.code_size,
                "hidden": self.hidden}


def init_image_generator(x_size, channels=1, seed=0, dtype=torch.float32, **arch):
    """Build an :class:`ImageGenerator` whose weights and input depend only on ``seed``."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        gen = ImageGenerator(x_size, channels, **arch)
    return gen.to(dtype)


def init_kernel_field(k_size, seed=0, model="siren", dtype=torch.float32, **arch):
    """Build the kernel generator; ``model`` is ``"siren"`` or ``"mlp"``."""
    if min(int(v) for v in k_size) < 1:
        raise ParameterError(f"invalid kernel size {k_size}")
    cls = {"siren": KernelField, "mlp": KernelMLP}.get(model)
    if cls is None:
        raise ParameterError(f"unknown kernel model {model!r}")
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        field = cls(k_size, **arch)
    return field.to(dtype)


def render_image(gen):
    """One forward pass; returns a ``(1, C, H, W)`` tensor."""
    return gen()


def render_kernel(field, normalize="sum"):
    """Evaluate the kernel generator and discretize it onto the simplex.

    ``normalize="none"`` returns the raw generator output.
    """
    k = field()
    if normalize == "sum":
        return k / k.sum()
    if normalize == "none":
        return k
    raise ParameterError(f"unknown kernel normalization {normalize!r}")


def regress_kernel(field, target, steps=2000, lr=1e-4, normalize="sum", callback=None):
    """Fit a kernel generator to a known kernel by least squares with Adam.

    ``callback(step, kernel)`` receives the rendered kernel (numpy) before
    each step and once after the last one. Returns the final kernel.
    """
    target = torch.as_tensor(np.asarray(target), dtype=next(field.parameters()).dtype)
    if tuple(target.shape) != tuple(field.k_size):
        raise ParameterError(f"target {tuple(target.shape)} does not match field {field.k_size}")
    opt = torch.optim.Adam(field.parameters(), lr=lr)
    for step in range(steps + 1):
        k = render_kernel(field, normalize)
        if callback is not None:
            callback(step, k.detach().to(torch.float64).numpy())
        if step == steps:
            break
        opt.zero_grad()
        ((k - target) ** 2).sum().backward()
        opt.step()
    return k.detach().to(torch.float64).numpy()


def count_parameters(module):
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


_BUILDERS = {"image_unet": ImageGenerator, "siren": KernelField, "mlp": KernelMLP}


def _build(descriptor):
    d = dict(descriptor)
    kind = d.pop("type")
    if kind == "image_unet":
        return ImageGenerator(d.pop("x_size"), d.pop("channels"), **d)
    return _BUILDERS[kind](d.pop("k_size"), **d)


def save_checkpoint(path, gen, field, seed, extra=None):
    """Write both generators to a single ``.npz`` archive.

    The archive holds every parameter and buffer (including the frozen seed
    input), the architecture descriptors, the seed and a format tag.
    """
    arrays = {}
    for prefix, module in (("image", gen), ("kernel", field)):
        for name, t in module.state_dict().items():
            arrays[f"{prefix}/{name}"] = t.detach().cpu().numpy()
    meta = {"format": CHECKPOINT_FORMAT, "seed": int(seed),
            "image": gen.descriptor(), "kernel": field.descriptor(),
            "dtype": str(next(gen.parameters()).dtype).replace("torch.", ""),
            "extra": extra or {}}
    arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(gen, field, meta)``."""
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ParameterError(f"unsupported checkpoint format {meta.get('format')!r}")
        dtype = getattr(torch, meta["dtype"])
        modules = []
        for prefix in ("image", "kernel"):
            module = _build(meta[prefix]).to(dtype)
            state = {k.split("/", 1)[1]: torch.from_numpy(np.array(data[k]))
                     for k in data.files if k.startswith(prefix + "/")}
            module.load_state_dict(state)
            modules.append(module)
    return modules[0], modules[1], meta
