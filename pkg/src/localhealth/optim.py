"""AdamW with decoupled weight decay and the linear warmup/decay schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1600
    batch: int = 512
    peak_lr: float = 1e-3
    warmup_frac: float = 0.2
    weight_decay: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.warmup_frac < 1.0:
            raise ValueError(f"warmup_frac {self.warmup_frac} outside (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")

    def with_overrides(self, **kwargs) -> "TrainConfig":
        return replace(self, **kwargs)


@dataclass
class OptimizerState:
    t: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n_params: int) -> "OptimizerState":
        return cls(t=0, m=np.zeros(n_params), v=np.zeros(n_params))


def adamw_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: OptimizerState,
    lr_t: float,
    config: TrainConfig,
) -> tuple[np.ndarray, OptimizerState]:
    """One decoupled-weight-decay Adam update; pure (returns new arrays)."""
    if params.shape != grads.shape:
        raise ValueError(f"shape mismatch: params {params.shape} vs grads {grads.shape}")
    if not np.all(np.isfinite(grads)):
        raise FloatingPointError("non-finite gradients")
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grads
    v = config.beta2 * state.v + (1.0 - config.beta2) * grads * grads
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    update = m_hat / (np.sqrt(v_hat) + config.eps) + config.weight_decay * params
    return params - lr_t * update, OptimizerState(t=t, m=m, v=v)


def lr_schedule(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear 0 -> peak over the first ceil(warmup_frac * total) steps, then linear peak -> 0."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    warmup = math.ceil(config.warmup_frac * total_steps)
    if step <= warmup:
        return config.peak_lr * step / max(warmup, 1)
    return config.peak_lr * (total_steps - step) / max(total_steps - warmup, 1)
