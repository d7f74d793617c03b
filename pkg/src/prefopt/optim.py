"""Gradient-ascent optimizers for the heatmap logits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "adam"
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.name not in OPTIMIZERS:
            raise InvalidArgument(f"optimizer must be one of {OPTIMIZERS}, got {self.name!r}")
        if not self.learning_rate > 0:
            raise InvalidArgument(f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass
class OptimizerState:
    t: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)


def optimizer_step(theta: np.ndarray, grad: np.ndarray, state: OptimizerState, cfg: OptimizerConfig) -> tuple[np.ndarray, OptimizerState]:
    """One ascent step; returns a new theta and the advanced state.

    Adam keeps bias-corrected first and second moments, so its first step
    moves every entry by about ``learning_rate * sign(grad)``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape:
        raise InvalidArgument(f"theta {theta.shape} and grad {grad.shape} shapes differ")
    if cfg.name == "sgd":
        return theta + cfg.learning_rate * grad, OptimizerState(state.t + 1)

    t = state.t + 1
    m = np.zeros_like(theta) if state.m is None else state.m
    v = np.zeros_like(theta) if state.v is None else state.v
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * (grad * grad)
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    theta = theta + cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return theta, OptimizerState(t, m, v)
