"""Adam with bias correction, keyed by tensor name."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_optimizer(params, lr: float = 1e-3, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    opt = OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name in params.trainable_names:
        t = params[name]
        opt.m[name] = np.zeros_like(t)
        opt.v[name] = np.zeros_like(t)
    return opt


def adam_update(opt: OptimizerState, name: str, param: np.ndarray,
                grad: np.ndarray) -> np.ndarray:
    """In-place Adam update of one tensor using opt.step as the bias
    correction time (adam_step manages the increment)."""
    if param.shape != grad.shape:
        raise ShapeError(f"grad shape {grad.shape} != param shape {param.shape} for {name}")
    if name not in opt.m:
        opt.m[name] = np.zeros_like(param)
        opt.v[name] = np.zeros_like(param)
    t = max(opt.step, 1)
    g = grad.astype(param.dtype, copy=False)
    m = opt.m[name]
    v = opt.v[name]
    m *= opt.beta1
    m += (1.0 - opt.beta1) * g
    v *= opt.beta2
    v += (1.0 - opt.beta2) * g * g
    m_hat = m / (1.0 - opt.beta1**t)
    v_hat = v / (1.0 - opt.beta2**t)
    param -= (opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)).astype(param.dtype, copy=False)
    return param


def adam_step(opt: OptimizerState, params, grads: dict):
    """One optimization step over every tensor present in grads."""
    opt.step += 1
    for name, g in grads.items():
        adam_update(opt, name, params[name], g)
