"""Robust data fit plus gradient-sparsity regularization."""

from dataclasses import asdict, dataclass

import torch

from .errors import ParameterError
from .forward_model import convolve_truncated_torch
from .generators import render_image, render_kernel

__all__ = [
    "ObjectiveConfig",
    "huber_loss",
    "mse_loss",
    "image_gradients",
    "grad_sparsity",
    "objective_terms",
    "total_objective",
]


@dataclass
class ObjectiveConfig:
    loss_kind: str = "huber"
    huber_delta: float = 0.05
    reg_kind: str = "l1_over_l2"
    lambda_x: float = 1e-5
    denom_epsilon: float = 1e-12
    kernel_normalize: str = "sum"

    def __post_init__(self):
        if self.loss_kind not in ("huber", "mse"):
            raise ParameterError(f"unknown loss_kind {self.loss_kind!r}")
        if self.reg_kind not in ("l1_over_l2", "l1", "none"):
            raise ParameterError(f"unknown reg_kind {self.reg_kind!r}")
        if self.huber_delta <= 0:
            raise ParameterError("huber_delta must be positive")
        if self.lambda_x < 0:
            raise ParameterError("lambda_x must be nonnegative")

    def to_dict(self):
        return asdict(self)


def _tensor(a):
    return a if torch.is_tensor(a) else torch.as_tensor(a, dtype=torch.float64)


def huber_loss(residual, delta=0.05):
    """Mean Huber penalty: ``u^2/2`` inside ``[-delta, delta]``, linear outside."""
    if delta <= 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    u = _tensor(residual).abs()
    return torch.where(u <= delta, 0.5 * u * u, delta * (u - 0.5 * delta)).mean()


def mse_loss(residual):
    u = _tensor(residual)
    return (u * u).mean()


def image_gradients(x):
    """Forward differences along rows and columns with replicate boundary.

    ``x`` is ``(..., H, W)``; the last row/column of each difference is zero.
    """
    x = _tensor(x)
    dr = torch.cat([x[..., 1:, :] - x[..., :-1, :], torch.zeros_like(x[..., :1, :])], dim=-2)
    dc = torch.cat([x[..., :, 1:] - x[..., :, :-1], torch.zeros_like(x[..., :, :1])], dim=-1)
    return dr, dc


def grad_sparsity(x, kind="l1_over_l2", eps=1e-12):
    """Sparsity of the pooled gradient field of ``x`` (all axes and channels).

    ``x`` is a tensor ``(N, C, H, W)`` or ``(H, W)``; numpy arrays of shape
    ``(H, W, C)`` must be transposed by the caller.
    """
    if kind == "none":
        return _tensor(x).new_zeros(())
    dr, dc = image_gradients(x)
    l1 = dr.abs().sum() + dc.abs().sum()
    if kind == "l1":
        return l1
    if kind == "l1_over_l2":
        l2 = torch.sqrt((dr * dr).sum() + (dc * dc).sum())
        return l1 / (l2 + eps)
    raise ParameterError(f"unknown regularizer {kind!r}")


def objective_terms(y, x, k, cfg):
    """Data term and regularizer for a rendered image canvas and kernel.

    ``y`` and ``x`` are ``(1, C, H, W)`` tensors, ``k`` is ``(h, w)``.
    Returns ``(total, data, reg)``.
    """
    residual = y - convolve_truncated_torch(x, k)
    if cfg.loss_kind == "huber":
        data = huber_loss(residual, cfg.huber_delta)
    else:
        data = mse_loss(residual)
    reg = grad_sparsity(x, cfg.reg_kind, cfg.denom_epsilon)
    return data + cfg.lambda_x * reg, data, reg


def total_objective(y, gen, field, cfg):
    """Objective value as a differentiable function of both generators."""
    x = render_image(gen)
    k = render_kernel(field, cfg.kernel_normalize)
    return objective_terms(y, x, k, cfg)[0]
