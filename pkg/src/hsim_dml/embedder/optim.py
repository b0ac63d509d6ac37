"""Adam with decoupled weight decay."""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .._typing import FloatArray
from ..errors import ShapeMismatchError


@dataclass
class AdamState:
    """Moment accumulators and hyper-parameters of one optimizer."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    step: int = 0
    m: list[FloatArray] = field(default_factory=list)
    v: list[FloatArray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.lr < 0 or self.weight_decay < 0 or self.eps <= 0:
            raise ValueError("lr and weight_decay must be nonnegative and eps positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")

    @classmethod
    def for_params(
        cls,
        params: Sequence[FloatArray],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-5,
    ) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_step(state: AdamState, params: Sequence[FloatArray], grads: Sequence[FloatArray]) -> list[FloatArray]:
    """One Adam update; moments and step count of ``state`` advance in place.

    Weight decay is applied as ``p * (1 - lr * weight_decay)`` before the
    bias-corrected Adam delta.

    Raises
    ------
    ShapeMismatchError
        If parameters, gradients and moments do not line up.
    """
    if len(params) != len(grads):
        raise ShapeMismatchError(f"{len(params)} parameters vs {len(grads)} gradients")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ShapeMismatchError(f"optimizer tracks {len(state.m)} parameters, got {len(params)}")
    for k, (p, g, m) in enumerate(zip(params, grads, state.m, strict=True)):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeMismatchError(f"parameter {k}: {p.shape}, gradient {g.shape}, moment {m.shape}")

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    decay = 1.0 - state.lr * state.weight_decay
    updated = []
    for k, (p, g) in enumerate(zip(params, grads, strict=True)):
        state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * g
        state.v[k] = state.beta2 * state.v[k] + (1.0 - state.beta2) * g * g
        m_hat = state.m[k] / bc1
        v_hat = state.v[k] / bc2
        updated.append(p * decay - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return updated
