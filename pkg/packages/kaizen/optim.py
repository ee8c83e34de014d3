"""Optimizers and per-task learning-rate schedules."""

from __future__ import annotations

from collections.abc import Iterable

import torch
from torch.optim import SGD, Optimizer
from torch.optim.lr_scheduler import CosineAnnealingLR, LambdaLR, LRScheduler

from .contracts.experiment import OptimizerConfig


class LARS(Optimizer):
    """SGD with momentum and layer-wise trust-ratio scaling.

    One-dimensional parameters (biases, normalisation affine terms) skip both
    weight decay and the trust ratio.
    """

    def __init__(
        self,
        params: Iterable,
        lr: float,
        momentum: float = 0.9,
        weight_decay: float = 0.0,
        eta: float = 0.02,
        eps: float = 1e-8,
    ):
        if lr <= 0:
            raise ValueError(f"invalid learning rate {lr}")
        defaults = dict(lr=lr, momentum=momentum, weight_decay=weight_decay, eta=eta, eps=eps)
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            for p in group["params"]:
                if p.grad is None:
                    continue
                d_p = p.grad
                if p.ndim > 1:
                    p_norm = torch.linalg.vector_norm(p)
                    g_norm = torch.linalg.vector_norm(d_p)
                    if group["weight_decay"]:
                        d_p = d_p.add(p, alpha=group["weight_decay"])
                    denominator = g_norm + group["weight_decay"] * p_norm + group["eps"]
                    trust = torch.where(
                        (p_norm > 0) & (g_norm > 0),
                        group["eta"] * p_norm / denominator,
                        torch.ones_like(p_norm),
                    )
                    d_p = d_p.mul(trust)
                state = self.state[p]
                if "momentum_buffer" not in state:
                    state["momentum_buffer"] = torch.clone(d_p).detach()
                else:
                    state["momentum_buffer"].mul_(group["momentum"]).add_(d_p)
                p.add_(state["momentum_buffer"], alpha=-group["lr"])
        return loss


def build_optimizer(param_groups: list[dict], config: OptimizerConfig) -> Optimizer:
    """SGD or LARS over *param_groups*; a group may carry its own ``lr``."""
    groups = [g for g in param_groups if g["params"]]
    if config.name == "lars":
        return LARS(
            groups,
            lr=config.lr,
            momentum=config.momentum,
            weight_decay=config.weight_decay,
            eta=config.lars_eta,
        )
    return SGD(groups, lr=config.lr, momentum=config.momentum, weight_decay=config.weight_decay)


def build_scheduler(optimizer: Optimizer, config: OptimizerConfig, total_steps: int) -> LRScheduler:
    """Cosine decay over one task's steps, or a constant rate."""
    if config.cosine and total_steps > 0:
        return CosineAnnealingLR(optimizer, T_max=total_steps)
    return LambdaLR(optimizer, lr_lambda=lambda _: 1.0)


def current_lr(optimizer: Optimizer) -> float:
    return float(optimizer.param_groups[0]["lr"])
