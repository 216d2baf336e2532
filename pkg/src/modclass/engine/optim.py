"""Trainable parameter slots and the Adam update rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ParamSlot:
    """One trainable array plus its gradient and Adam moment estimates.

    All four arrays share one shape. Gradients accumulate across backward
    calls and are cleared only by an explicit ``zero_grad``.
    """

    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)
    step_count: int = field(init=False, default=0)

    def __post_init__(self) -> None:
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0


def adam_step(
    slot: ParamSlot,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Apply one bias-corrected Adam update in place.

    The gradient is left intact for inspection; callers zero it separately.
    """
    slot.step_count += 1
    t = slot.step_count
    g = slot.grad
    slot.adam_m[...] = beta1 * slot.adam_m + (1.0 - beta1) * g
    slot.adam_v[...] = beta2 * slot.adam_v + (1.0 - beta2) * np.square(g)
    m_hat = slot.adam_m / (1.0 - beta1**t)
    v_hat = slot.adam_v / (1.0 - beta2**t)
    slot.value[...] = slot.value - lr * m_hat / (np.sqrt(v_hat) + eps)
