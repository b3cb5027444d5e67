"""Joint optimization of both generators with windowed-moving-variance early stopping."""

from collections import deque
import copy
import csv
from dataclasses import asdict, dataclass, field
import logging
import math

import numpy as np
import torch

from .errors import DimensionError, ParameterError, RunAborted, UnavailableError
from .generators import init_image_generator, init_kernel_field, render_image, render_kernel
from .objective import ObjectiveConfig, objective_terms

__all__ = [
    "SolverConfig",
    "ESState",
    "RunTrace",
    "RunResult",
    "lr_at",
    "wmv_update",
    "run",
    "es_gap_report",
]

log = logging.getLogger(__name__)

POOL_THRESHOLD = 512 * 512
POOL_FACTOR = 4

PROFILES = {
    "synthetic": {"lr_image": 1e-2, "lr_kernel": 1e-4},
    "real": {"lr_image": 1e-3, "lr_kernel": 1e-5},
}
ES_PROFILES = {"low_noise": 500, "high_noise": 200}


@dataclass
class SolverConfig:
    lr_image: float = 1e-2
    lr_kernel: float = 1e-4
    milestones: tuple = (2000, 3000, 5000, 8000)
    gamma: float = 0.5
    max_iters: int = 10000
    window: int = 100
    patience: int = 500
    seed: int = 0
    trace_every: int = 1
    groundtruth_every: int = 100
    # Keep iterating after patience runs out (the checkpoint is still tracked);
    # used to measure how much early stopping saves.
    stop_early: bool = True
    kernel_model: str = "siren"
    image_widths: tuple = (16, 32, 64, 128, 256)

    def __post_init__(self):
        self.milestones = tuple(int(m) for m in self.milestones)
        self.image_widths = tuple(int(w) for w in self.image_widths)
        if not self.lr_image > self.lr_kernel > 0:
            raise ParameterError("learning rates must satisfy lr_image > lr_kernel > 0")
        if not 0 < self.gamma < 1:
            raise ParameterError("gamma must lie in (0, 1)")
        if self.window < 2 or self.patience < 1:
            raise ParameterError("window must be >= 2 and patience >= 1")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ParameterError("milestones must be strictly increasing")
        if self.max_iters < 0:
            raise ParameterError("max_iters must be nonnegative")

    @classmethod
    def profile(cls, data="synthetic", es="low_noise", **overrides):
        """Defaults for synthetic or real data and a low/high-noise patience."""
        params = dict(PROFILES[data], patience=ES_PROFILES[es])
        params.update(overrides)
        return cls(**params)

    def to_dict(self):
        d = asdict(self)
        d["milestones"] = list(self.milestones)
        d["image_widths"] = list(self.image_widths)
        return d


def lr_at(it, cfg):
    """Learning rates for step ``it`` after milestone decay."""
    factor = cfg.gamma ** sum(1 for m in cfg.milestones if m <= it)
    return cfg.lr_image * factor, cfg.lr_kernel * factor


@dataclass
class ESState:
    """Sliding window of recent reconstructions and the best checkpoint so far."""

    window: int
    queue: deque = field(default_factory=deque)
    var_min: float = math.inf
    best_iter: int = -1
    best_image: np.ndarray = None
    stall: int = 0
    last_var: float = math.nan
    pooled: bool = False
    _shape: tuple = None


def _pool(x):
    n, m = (s - s % POOL_FACTOR for s in x.shape[:2])
    x = x[:n, :m]
    return x.reshape(n // POOL_FACTOR, POOL_FACTOR, m // POOL_FACTOR, POOL_FACTOR,
                     *x.shape[2:]).mean(axis=(1, 3))


def wmv_update(state, x, it):
    """Push a reconstruction and update the windowed moving variance.

    Once the window is full its variance (per-pixel population variance
    across the window, averaged over pixels) is compared with the minimum so
    far; a new minimum records ``x`` as the best iterate and resets the stall
    counter, anything else increments it. Mutates and returns ``state``.
    """
    x = np.asarray(x, dtype=np.float64)
    if state._shape is None:
        state._shape = x.shape
        state.pooled = x.shape[0] * x.shape[1] > POOL_THRESHOLD
    elif x.shape != state._shape:
        raise DimensionError(f"reconstruction shape changed from {state._shape} to {x.shape}")
    state.queue.append(_pool(x) if state.pooled else x)
    if len(state.queue) > state.window:
        state.queue.popleft()
    if len(state.queue) == state.window:
        var = float(np.var(np.stack(state.queue), axis=0).mean())
        state.last_var = var
        if var < state.var_min:
            state.var_min = var
            state.best_iter = it
            state.best_image = x
            state.stall = 0
        else:
            state.stall += 1
    return state


@dataclass
class RunTrace:
    iters: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    lr_x: list = field(default_factory=list)
    lr_k: list = field(default_factory=list)
    wmv: list = field(default_factory=list)
    psnr: list = field(default_factory=list)
    pooled: bool = False

    def record(self, it, objective, lrs, wmv, psnr=None):
        if self.iters and it <= self.iters[-1]:
            raise ParameterError("trace iterations must increase")
        self.iters.append(int(it))
        self.objective.append(float(objective))
        self.lr_x.append(lrs[0])
        self.lr_k.append(lrs[1])
        self.wmv.append(wmv)
        self.psnr.append(psnr)

    def __len__(self):
        return len(self.iters)

    def groundtruth(self):
        """``(iters, psnr)`` for the records carrying a groundtruth value."""
        pairs = [(i, p) for i, p in zip(self.iters, self.psnr) if p is not None]
        if not pairs:
            raise UnavailableError("trace has no groundtruth channel")
        its, vals = zip(*pairs)
        return list(its), list(vals)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "objective", "lr_x", "lr_k", "wmv", "psnr"])
            for row in zip(self.iters, self.objective, self.lr_x, self.lr_k, self.wmv, self.psnr):
                w.writerow(["" if (v is None or (isinstance(v, float) and math.isnan(v))) else v
                            for v in row])

    @classmethod
    def from_csv(cls, path):
        trace = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                opt = lambda v: float(v) if v != "" else None  # noqa: E731
                trace.record(int(row["iter"]), float(row["objective"]),
                             (float(row["lr_x"]), float(row["lr_k"])),
                             opt(row["wmv"]), opt(row["psnr"]))
        return trace


@dataclass
class RunResult:
    best_image: np.ndarray
    best_kernel: np.ndarray
    final_image: np.ndarray
    final_kernel: np.ndarray
    trace: RunTrace
    best_iter: int
    stop_iter: int
    es_iter: int
    best_state: dict
    image_generator: object
    kernel_field: object


def _to_hwc(t):
    """``(1, C, H, W)`` tensor to an ``(H, W)`` or ``(H, W, C)`` float64 array."""
    a = t.detach().to(torch.float64).cpu().numpy()[0]
    return a[0] if a.shape[0] == 1 else np.transpose(a, (1, 2, 0))


def _to_nchw(y, dtype):
    y = np.asarray(y, dtype=np.float64)
    y = y[None] if y.ndim == 2 else np.transpose(y, (2, 0, 1))
    return torch.as_tensor(y[None], dtype=dtype)


def run(y, plan, obj=None, cfg=None, x_true=None, dtype=torch.float32, callback=None):
    """Recover an image canvas and kernel from the observation ``y``.

    Both generators step together with Adam (betas 0.9/0.999, eps 1e-8) using
    their own milestone-decayed learning rates. The image rendered at every
    step feeds the windowed-moving-variance detector; optimization ends when
    the minimum variance has not improved for ``patience`` steps or after
    ``max_iters`` steps. The reported best iterate is the variance minimum, or
    the final iterate if the window never filled.

    ``x_true`` (sized like ``y``) enables a groundtruth PSNR channel in the
    trace, computed on the SSIM-located window every ``groundtruth_every``
    steps.
    """
    from .localization import locate_image
    from .metrics import psnr

    obj = obj or ObjectiveConfig()
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=np.float64)
    if tuple(y.shape[:2]) != tuple(plan.y_size):
        raise DimensionError(f"observation {y.shape[:2]} does not match plan {plan.y_size}")
    channels = 1 if y.ndim == 2 else y.shape[2]
    y_t = _to_nchw(y, dtype)

    gen = init_image_generator(plan.x_size, channels, cfg.seed, dtype=dtype,
                               widths=cfg.image_widths)
    field_ = init_kernel_field(plan.k_size, cfg.seed + 1, model=cfg.kernel_model, dtype=dtype)
    opt = torch.optim.Adam([
        {"params": gen.parameters(), "lr": cfg.lr_image},
        {"params": field_.parameters(), "lr": cfg.lr_kernel},
    ], betas=(0.9, 0.999), eps=1e-8)

    def snapshot():
        return {"image": copy.deepcopy(gen.state_dict()), "kernel": copy.deepcopy(field_.state_dict())}

    def kernel_np():
        with torch.no_grad():
            return render_kernel(field_, obj.kernel_normalize).to(torch.float64).numpy()

    state = ESState(cfg.window)
    trace = RunTrace()
    with torch.no_grad():
        init_image = _to_hwc(render_image(gen))
    best_state, best_kernel = snapshot(), kernel_np()
    es_iter = None

    for it in range(cfg.max_iters):
        lrs = lr_at(it, cfg)
        for group, lr in zip(opt.param_groups, lrs):
            group["lr"] = lr
        opt.zero_grad()
        x = render_image(gen)
        k = render_kernel(field_, obj.kernel_normalize)
        loss, _, _ = objective_terms(y_t, x, k, obj)
        value = float(loss.detach())
        x_np = _to_hwc(x)

        before = state.best_iter
        wmv_update(state, x_np, it)
        if state.best_iter != before:
            best_state = snapshot()
            best_kernel = k.detach().to(torch.float64).numpy()

        record = it % cfg.trace_every == 0 or it == cfg.max_iters - 1
        gt_value = None
        if x_true is not None and (it % cfg.groundtruth_every == 0 or it == cfg.max_iters - 1):
            record = True
            gt_value = psnr(np.clip(locate_image(x_np, y)[0], 0, 1), x_true)
        if record or not math.isfinite(value):
            trace.record(it, value, lrs, state.last_var, gt_value)
        if not math.isfinite(value):
            raise RunAborted(f"non-finite objective at iteration {it}", trace)

        loss.backward()
        opt.step()
        if callback is not None:
            callback(it, value, state)
        if es_iter is None and state.stall >= cfg.patience:
            es_iter = it
            log.info("early stop at iteration %d (best %d)", it, state.best_iter)
            if cfg.stop_early:
                break

    stop_iter = it if cfg.max_iters > 0 else -1
    trace.pooled = state.pooled
    with torch.no_grad():
        final_image = _to_hwc(render_image(gen))
    final_kernel = kernel_np()
    if state.best_image is None:
        best_image, best_iter = (final_image, stop_iter) if cfg.max_iters > 0 else (init_image, -1)
        best_kernel = final_kernel
        best_state = snapshot()
    else:
        best_image, best_iter = state.best_image, state.best_iter
    return RunResult(best_image, best_kernel, final_image, final_kernel, trace, best_iter,
                     stop_iter, es_iter if es_iter is not None else stop_iter, best_state,
                     gen, field_)


def es_gap_report(iters, values, best_iter, detected=None):
    """Gaps to the peak of a groundtruth quality trace.

    ``es_gap`` is measured at the detected iterate (the last record at or
    before ``best_iter``, or ``detected`` when the exact value of the
    checkpoint is known), ``base_gap`` at the final record. The peak covers
    the trace and ``detected``, so both gaps are nonnegative.
    """
    if values is None or len(values) == 0 or any(v is None for v in values):
        raise UnavailableError("groundtruth values are required")
    iters = np.asarray(iters)
    values = np.asarray(values, dtype=np.float64)
    if detected is None:
        idx = np.searchsorted(iters, best_iter, side="right") - 1
        detected = values[min(max(idx, 0), len(values) - 1)]
    peak_idx = int(values.argmax())
    peak, peak_iter = float(values[peak_idx]), int(iters[peak_idx])
    if detected > peak:
        peak, peak_iter = float(detected), int(best_iter)
    return {"es_gap": float(peak - detected), "base_gap": float(peak - values[-1]),
            "peak": peak, "peak_iter": peak_iter}
