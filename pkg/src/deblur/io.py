"""Image, kernel and case-directory persistence.

A synthesized case is stored as::

    case_<id>/
        clean.png     clean latent canvas
        kernel.png    kernel scaled by its maximum (display only)
        kernel.csv    exact kernel values
        blurry.png    degraded observation
        spec.json     noise spec, sizes and seed
"""

import csv
import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DeblurError

__all__ = ["read_image", "write_image", "read_kernel", "write_kernel", "write_kernel_png",
           "write_case", "read_case", "iter_cases", "load_pair_directory", "CASE_SCHEMA"]

CASE_SCHEMA = "deblur-case/1"


class IOFailure(DeblurError, OSError):
    pass


def read_image(path, channels=None):
    """Read an 8- or 16-bit PNG into floats in [0, 1].

    ``channels`` forces 1 (luma) or 3 (RGB); by default the file decides.
    """
    try:
        with Image.open(path) as im:
            arr = np.array(im)
            mode = im.mode
    except (OSError, ValueError) as exc:
        raise IOFailure(f"cannot read image {path}: {exc}") from exc
    if arr.dtype == np.uint8:
        arr = arr / 255.0
    elif arr.dtype in (np.uint16, np.int32) or mode.startswith("I"):
        arr = arr / 65535.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[..., :3]
    if channels == 1 and arr.ndim == 3:
        arr = arr @ np.array([0.299, 0.587, 0.114])
    elif channels == 3 and arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    return arr


def write_image(path, x, bits=8):
    x = np.clip(np.asarray(x, dtype=np.float64), 0, 1)
    if x.ndim == 3 and x.shape[2] == 1:
        x = x[..., 0]
    if bits == 8:
        Image.fromarray(np.round(x * 255).astype(np.uint8)).save(path)
    elif bits == 16:
        if x.ndim != 2:
            raise IOFailure("16-bit output is supported for grayscale images only")
        Image.fromarray(np.round(x * 65535).astype(np.uint16)).save(path)
    else:
        raise IOFailure(f"unsupported bit depth {bits}")


def write_kernel(path, k):
    np.savetxt(path, np.asarray(k, dtype=np.float64), delimiter=",", fmt="%.17g")


def read_kernel(path):
    """Kernel from CSV (exact) or PNG (renormalized to sum one)."""
    path = Path(path)
    try:
        if path.suffix.lower() == ".csv":
            k = np.loadtxt(path, delimiter=",", ndmin=2)
        else:
            k = read_image(path, channels=1)
    except (OSError, ValueError) as exc:
        raise IOFailure(f"cannot read kernel {path}: {exc}") from exc
    k = np.clip(k, 0, None)
    total = k.sum()
    if total <= 0:
        raise IOFailure(f"kernel {path} has no mass")
    return k / total


def write_kernel_png(path, k):
    k = np.asarray(k, dtype=np.float64)
    peak = k.max()
    write_image(path, k / peak if peak > 0 else k)


def write_case(directory, clean, kernel, blurry, spec):
    """Write one case in the documented layout; ``spec`` is a JSON-able dict."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    bits = 16 if np.asarray(clean).ndim == 2 else 8
    write_image(d / "clean.png", clean, bits=bits)
    write_image(d / "blurry.png", blurry, bits=bits)
    write_kernel_png(d / "kernel.png", kernel)
    write_kernel(d / "kernel.csv", kernel)
    with open(d / "spec.json", "w") as fh:
        json.dump({"schema": CASE_SCHEMA, **spec}, fh, indent=2, sort_keys=True)
    return d


def read_case(directory):
    d = Path(directory)
    try:
        with open(d / "spec.json") as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise IOFailure(f"cannot read case spec in {d}: {exc}") from exc
    return {"clean": read_image(d / "clean.png"), "blurry": read_image(d / "blurry.png"),
            "kernel": read_kernel(d / "kernel.csv"), "spec": spec, "path": d}


def iter_cases(root, ids=None):
    """Case directories under ``root``, optionally restricted by an ID list file or list."""
    root = Path(root)
    if isinstance(ids, (str, os.PathLike)):
        with open(ids) as fh:
            ids = [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("case_"))
    if ids is not None:
        wanted = set(str(i) for i in ids)
        dirs = [p for p in dirs if p.name[len("case_"):] in wanted]
    return dirs


def load_pair_directory(root, kernel_dir="kernels"):
    """Levin/Lai-style layout: clean images in ``root`` and one file per kernel.

    Returns ``(images, kernels)`` dicts keyed by file stem. Kernels may be CSV
    or PNG files in ``root/<kernel_dir>``.
    """
    root = Path(root)
    images = {p.stem: read_image(p) for p in sorted(root.glob("*.png"))}
    kdir = root / kernel_dir
    kernels = {}
    if kdir.is_dir():
        for p in sorted(kdir.iterdir()):
            if p.suffix.lower() in (".csv", ".png"):
                kernels[p.stem] = read_kernel(p)
    return images, kernels


def write_rows_csv(path, rows, fields):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
