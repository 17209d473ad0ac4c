"""Gradient-clipped Adam for the coupling and identification losses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamConfig:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 1.0
    max_iter: int = 2000
    grad_tol: float = 1e-6
    lr_decay: float = 1.0  # per-iteration multiplicative factor
    weight_decay: float = 0.0  # decoupled decay, keeps iterates near the origin


@dataclass
class OptimizeReport:
    loss_history: list = field(default_factory=list)
    grad_norm: float = float("nan")
    iterations: int = 0
    converged: bool = False

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1] if self.loss_history else float("nan")


def clip_by_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if max_norm and norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def minimize(fun_and_grad, x0: np.ndarray, config: AdamConfig | None = None,
             callback=None) -> tuple[np.ndarray, OptimizeReport]:
    """Adam descent on fun_and_grad: x -> (loss, grad).

    Stops at max_iter or when the clipped gradient norm drops below grad_tol.
    Raises on non-finite loss."""
    cfg = config or AdamConfig()
    x = np.asarray(x0, dtype=float).copy()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    report = OptimizeReport()
    lr = cfg.lr
    for it in range(1, cfg.max_iter + 1):
        loss, grad = fun_and_grad(x)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite loss at iteration {it}")
        report.loss_history.append(float(loss))
        grad = clip_by_norm(np.asarray(grad, dtype=float), cfg.clip_norm)
        gnorm = float(np.linalg.norm(grad))
        report.grad_norm = gnorm
        report.iterations = it
        if callback is not None:
            callback(it, x, loss, gnorm)
        if gnorm < cfg.grad_tol:
            report.converged = True
            break
        m = cfg.beta1 * m + (1 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1 - cfg.beta2) * grad**2
        mhat = m / (1 - cfg.beta1**it)
        vhat = v / (1 - cfg.beta2**it)
        x = x - lr * (mhat / (np.sqrt(vhat) + cfg.eps) + cfg.weight_decay * x)
        lr *= cfg.lr_decay
    return x, report
