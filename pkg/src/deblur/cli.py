"""Command line entry point: ``deblur synth|run|sweep|eval``.

Exit codes: 0 success, 1 invalid configuration, 2 I/O failure, 3 run aborted.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import json
import logging
import math
import os
from pathlib import Path
import sys

import numpy as np

from .config import LAMBDA_GRID, RunConfig
from .degradation import NOISE_PRESETS, NoiseSpec, apply_noise
from .errors import DeblurError, ParameterError, RunAborted
from .forward_model import convolve_truncated
from .generators import save_checkpoint
from .io import (IOFailure, iter_cases, read_case, read_image, read_kernel, write_case,
                 write_image, write_kernel, write_kernel_png, write_rows_csv)
from .metrics import FBE_BANDS, evaluate_pair, write_reports_csv
from .pipeline import deblur

log = logging.getLogger("deblur")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_ABORTED = 0, 1, 2, 3


def _out(cfg):
    out = Path(cfg.paths["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pad_for_kernel(x, k_shape):
    top = (k_shape[0] - 1) // 2
    left = (k_shape[1] - 1) // 2
    pad = [(top, k_shape[0] - 1 - top), (left, k_shape[1] - 1 - left)]
    if x.ndim == 3:
        pad.append((0, 0))
    return np.pad(x, pad, mode="reflect")


def blur_clean(clean, kernel, boundary="pad"):
    """Noise-free observation of ``clean``.

    ``pad`` reflect-pads the clean image so the observation keeps its size and
    the clean image is the groundtruth of the field of view; ``valid`` keeps
    only fully observed pixels.
    """
    if boundary == "pad":
        return convolve_truncated(_pad_for_kernel(clean, kernel.shape), kernel), clean
    if boundary == "valid":
        y = convolve_truncated(clean, kernel)
        r = (kernel.shape[0] - 1) - kernel.shape[0] // 2
        c = (kernel.shape[1] - 1) - kernel.shape[1] // 2
        return y, clean[r:r + y.shape[0], c:c + y.shape[1]]
    raise ParameterError(f"unknown boundary {boundary!r}")


def cmd_synth(cfg):
    """Synthesize one case directory from a clean image and a kernel."""
    clean = read_image(cfg.paths["clean"])
    kernel = read_kernel(cfg.paths["kernel"])
    boundary = cfg.data["synth"]["boundary"]
    noise = cfg.noise()
    y_clean, groundtruth = blur_clean(clean, kernel, boundary)
    blurry = apply_noise(y_clean, noise)
    case_dir = _out(cfg) / f"case_{cfg.data['synth']['case_id']}"
    write_case(case_dir, groundtruth, kernel, blurry,
               {"noise": noise.to_dict(), "boundary": boundary,
                "kernel_size": list(kernel.shape), "y_size": list(blurry.shape[:2]),
                "sources": {"clean": str(cfg.paths["clean"]), "kernel": str(cfg.paths["kernel"])}})
    cfg.resolved().save(case_dir / "config.resolved.json")
    return case_dir


def _load_input(cfg):
    paths = cfg.paths
    x_true = k_true = None
    if paths.get("case"):
        case = read_case(paths["case"])
        y, x_true, k_true = case["blurry"], case["clean"], case["kernel"]
    elif paths.get("input"):
        y = read_image(paths["input"])
    else:
        raise ParameterError("run needs paths.input or paths.case")
    if paths.get("groundtruth"):
        x_true = read_image(paths["groundtruth"], channels=1 if y.ndim == 2 else 3)
    if paths.get("groundtruth_kernel"):
        k_true = read_kernel(paths["groundtruth_kernel"])
    return y, x_true, k_true


def _deblur_with(cfg, y, x_true=None, k_true=None):
    ks = cfg.data["sizing"]["kernel_size"]
    return deblur(y, tuple(ks) if ks else None, cfg.objective(), cfg.solver(),
                  x_true=x_true, k_true=k_true)


def cmd_deblur(cfg):
    """Deblur one observation and write image, kernel, trace and report."""
    out = _out(cfg)
    y, x_true, k_true = _load_input(cfg)
    cfg.resolved().save(out / "config.resolved.json")
    try:
        res = _deblur_with(cfg, y, x_true, k_true)
    except RunAborted as exc:
        if exc.trace is not None:
            exc.trace.to_csv(out / "trace.csv")
        raise
    write_image(out / "x_hat.png", res.image)
    write_kernel(out / "kernel.csv", res.kernel)
    write_kernel_png(out / "kernel.png", res.kernel)
    res.result.trace.to_csv(out / "trace.csv")
    save_checkpoint(out / "checkpoint.npz", res.result.image_generator, res.result.kernel_field,
                    cfg.data["seed"], extra={"best_iter": res.result.best_iter})
    info = {"schema": "deblur-report/1", "config_hash": cfg.resolved().hash(),
            "plan": res.plan.to_dict(),
            "placement": {"offset": list(res.placement.offset), "score": res.placement.score},
            "best_iter": res.result.best_iter, "es_iter": res.result.es_iter,
            "stop_iter": res.result.stop_iter,
            "outputs": {"image": "x_hat.png", "kernel": "kernel.csv", "trace": "trace.csv"}}
    if res.report is not None:
        info.update({k: v for k, v in res.report.to_dict().items() if k != "schema"})
    with open(out / "report.json", "w") as fh:
        json.dump(info, fh, indent=2)
    return info


def _levels(true_size, y_size, levels):
    """Kernel sizes from the true size (level 1) to half the image (last level)."""
    top = [math.ceil(s / 2) for s in y_size]
    return [tuple(int(round(t + (h - t) * i / (levels - 1))) for t, h in zip(true_size, top))
            for i in range(levels)]


def _sweep_settings(cfg, case):
    sweep = cfg.data["sweep"]
    axis = sweep["axis"]
    if axis == "lambda":
        return [("lambda", v) for v in (sweep["values"] or LAMBDA_GRID)]
    if axis == "kernel_size_level":
        sizes = _levels(case["kernel"].shape, case["blurry"].shape[:2], sweep["levels"])
        return [("kernel_size_level", (i + 1, s)) for i, s in enumerate(sizes)]
    presets = sweep["noise_presets"] or sorted(NOISE_PRESETS)
    return [("noise", p) for p in presets]


def _sweep_row(args):
    cfg_data, case_path, setting = args
    cfg = RunConfig(cfg_data)
    case = read_case(case_path)
    kind, value = setting
    y, x_true, k_true = case["blurry"], case["clean"], case["kernel"]
    row = {"case": Path(case_path).name, "axis": kind}
    if kind == "lambda":
        cfg.set("objective.lambda_x", value)
        row["setting"] = value
    elif kind == "kernel_size_level":
        level, size = value
        cfg.set("sizing.kernel_size", list(size))
        row["setting"] = level
        row["kernel_size"] = "x".join(map(str, size))
    else:
        spec = NoiseSpec(**{**NOISE_PRESETS[value].to_dict(), "seed": cfg.data["noise"]["seed"]})
        if spec.kind == "saturation" and y.ndim == 2:
            row.update(setting=value, error="saturation needs RGB input")
            return row
        y_clean, _ = blur_clean(x_true, k_true, case["spec"].get("boundary", "pad"))
        y = apply_noise(y_clean, spec)
        row["setting"] = value
    row["config_hash"] = cfg.resolved().hash()
    baseline = evaluate_pair(y, x_true)
    row.update(baseline_psnr=baseline.psnr, baseline_ssim=baseline.ssim, baseline_vif=baseline.vif)
    try:
        res = _deblur_with(cfg, y, x_true, k_true)
    except DeblurError as exc:
        row["error"] = str(exc)
        return row
    rep = res.report
    row.update(psnr=rep.psnr, ssim=rep.ssim, vif=rep.vif, best_iter=res.result.best_iter)
    if rep.fbe is not None:
        row.update({f"fbe{i}": v for i, v in enumerate(rep.fbe)})
    return row


def _workers():
    try:
        return max(1, int(os.environ.get("DEBLUR_NUM_WORKERS", "1")))
    except ValueError:
        return 1


def cmd_sweep(cfg):
    """Run the cross product of cases and settings along one axis."""
    out = _out(cfg)
    if not cfg.paths.get("cases"):
        raise ParameterError("sweep needs paths.cases")
    cases = iter_cases(cfg.paths["cases"], cfg.paths.get("id_list"))
    if not cases:
        raise IOFailure(f"no case directories under {cfg.paths['cases']}")
    cfg.resolved().save(out / "config.resolved.json")
    jobs = []
    for c in cases:
        case = read_case(c)
        jobs.extend((cfg.to_dict(), str(c), s) for s in _sweep_settings(cfg, case))
    workers = _workers()
    if workers == 1:
        rows = [_sweep_row(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_row, jobs))
    fields = ["case", "axis", "setting", "kernel_size", "config_hash", "psnr", "ssim", "vif"] + \
        [f"fbe{i}" for i in range(FBE_BANDS)] + \
        ["best_iter", "baseline_psnr", "baseline_ssim", "baseline_vif", "error"]
    write_rows_csv(out / "aggregate.csv", rows, fields)
    summary = _summarize(rows)
    write_rows_csv(out / "summary.csv", summary, list(summary[0].keys()) if summary else ["setting"])
    _plot_summary(summary, out, cfg.data["sweep"]["axis"])
    return rows


def _summarize(rows):
    out = []
    settings = []
    for r in rows:
        if r["setting"] not in settings:
            settings.append(r["setting"])
    for s in settings:
        group = [r for r in rows if r["setting"] == s and "error" not in r]
        entry = {"setting": s, "n": len(group)}
        for m in ("psnr", "ssim", "vif", "baseline_psnr", "baseline_ssim", "baseline_vif"):
            vals = [r[m] for r in group if r.get(m) is not None]
            entry[f"{m}_mean"] = float(np.mean(vals)) if vals else None
            entry[f"{m}_std"] = float(np.std(vals)) if vals else None
        out.append(entry)
    return out


def _plot_summary(summary, out, axis):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not summary:
        return
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    labels = [str(s["setting"]) for s in summary]
    pos = np.arange(len(summary))
    for ax, m in zip(axes, ("psnr", "ssim", "vif")):
        mean = [s[f"{m}_mean"] if s[f"{m}_mean"] is not None else np.nan for s in summary]
        std = [s[f"{m}_std"] if s[f"{m}_std"] is not None else np.nan for s in summary]
        ax.errorbar(pos, mean, yerr=std, marker="o", capsize=3)
        base = [s[f"baseline_{m}_mean"] for s in summary if s[f"baseline_{m}_mean"] is not None]
        if base:
            ax.axhline(float(np.mean(base)), linestyle="--", color="gray")
        ax.set_xticks(pos)
        ax.set_xticklabels(labels, rotation=45, fontsize=7)
        ax.set_title(m.upper())
        ax.set_xlabel(axis)
    fig.tight_layout()
    fig.savefig(out / "summary.png", dpi=120)
    fig.savefig(out / "summary.svg")
    plt.close(fig)


def cmd_eval(cfg):
    """Score every estimate against the groundtruth image with the same file name."""
    out = _out(cfg)
    est_dir, gt_dir = cfg.paths.get("estimates"), cfg.paths.get("groundtruth")
    if not est_dir or not gt_dir:
        raise ParameterError("eval needs paths.estimates and paths.groundtruth")
    est = {p.name: p for p in Path(est_dir).glob("*.png")}
    gt = {p.name: p for p in Path(gt_dir).glob("*.png")}
    matched = sorted(set(est) & set(gt))
    unmatched = sorted(set(est) ^ set(gt))
    for name in unmatched:
        log.warning("unmatched file: %s", name)
    if not matched:
        raise IOFailure(f"no matching file names between {est_dir} and {gt_dir}")
    rows = []
    for name in matched:
        row = {"case": name, "config_hash": cfg.resolved().hash()}
        try:
            x_true = read_image(gt[name])
            x_hat = read_image(est[name], channels=1 if x_true.ndim == 2 else 3)
            k_pair = [Path(d) / (Path(name).stem + "_kernel.csv") for d in (est_dir, gt_dir)]
            kernels = [read_kernel(p) for p in k_pair] if all(p.exists() for p in k_pair) else [None, None]
            row.update(evaluate_pair(x_hat, x_true, kernels[0], kernels[1]).to_dict())
        except (DeblurError, ValueError, OSError) as exc:
            row["error"] = str(exc)
        row.pop("provenance", None)
        row.pop("schema", None)
        rows.append(row)
    good = [r for r in rows if "error" not in r]
    if good:
        mean = {"case": "mean", "config_hash": cfg.resolved().hash()}
        for m in ("psnr", "ssim", "vif"):
            mean[m] = float(np.mean([r[m] for r in good]))
        if all(r.get("fbe") is not None for r in good):
            mean["fbe"] = list(np.mean([r["fbe"] for r in good], axis=0))
        rows.append(mean)
    write_reports_csv(out / "metrics.csv", rows)
    cfg.resolved().save(out / "config.resolved.json")
    return rows


COMMANDS = {"synth": cmd_synth, "run": cmd_deblur, "sweep": cmd_sweep, "eval": cmd_eval}


def build_parser():
    p = argparse.ArgumentParser(prog="deblur", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--es-profile", choices=["low_noise", "high_noise"])
    p.add_argument("--out", help="output directory")
    p.add_argument("--input", help="observation image (run)")
    p.add_argument("--case", help="case directory (run)")
    p.add_argument("--groundtruth", help="groundtruth image (run) or directory (eval)")
    p.add_argument("--estimates", help="directory of estimates (eval)")
    p.add_argument("--cases", help="directory of case_* folders (sweep)")
    p.add_argument("--axis", choices=["lambda", "kernel_size_level", "noise"])
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config value, e.g. objective.lambda_x=1e-4 (JSON value)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _apply_flags(cfg, args):
    if args.seed is not None:
        cfg.set("seed", args.seed)
    if args.es_profile:
        cfg.set("es_profile", args.es_profile)
    if args.axis:
        cfg.set("sweep.axis", args.axis)
    for flag, key in (("out", "out"), ("input", "input"), ("case", "case"),
                      ("groundtruth", "groundtruth"), ("estimates", "estimates"),
                      ("cases", "cases")):
        value = getattr(args, flag)
        if value is not None:
            cfg.set(f"paths.{key}", value)
    for item in args.set:
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        cfg.set(key, value)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        _apply_flags(cfg, args)
    except (ParameterError, TypeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read configuration: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        COMMANDS[args.command](cfg)
    except RunAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_ABORTED
    except (IOFailure, OSError) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ParameterError, DeblurError, TypeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
