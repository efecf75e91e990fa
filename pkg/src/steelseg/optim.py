"""Adam optimizer with bias correction, operating on lists of tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .errors import NumericError

ADAM_EPS = 1e-8


@dataclass
class AdamConfig:
    learning_rate: float = 5e-4
    beta1: float = 0.99
    beta2: float = 0.99


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def init(cls, params) -> "AdamState":
        return cls(
            step=0,
            m=[torch.zeros_like(p) for p in params],
            v=[torch.zeros_like(p) for p in params],
        )


@torch.no_grad()
def adam_step(params, grads, state: AdamState, cfg: AdamConfig):
    """One Adam update. Parameters and moments are updated in place and the
    (params, state) pair is returned. Aborts on non-finite gradients."""
    for i, g in enumerate(grads):
        if g is not None and not torch.isfinite(g).all():
            raise NumericError(f"non-finite gradient in tensor {i}; step aborted")
    state.step += 1
    bc1 = 1.0 - cfg.beta1 ** state.step
    bc2 = 1.0 - cfg.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m.mul_(cfg.beta1).add_(g, alpha=1.0 - cfg.beta1)
        v.mul_(cfg.beta2).addcmul_(g, g, value=1.0 - cfg.beta2)
        m_hat = m / bc1
        v_hat = v / bc2
        p.add_(m_hat / (v_hat.sqrt() + ADAM_EPS), alpha=-cfg.learning_rate)
    return params, state
