"""Central-difference gradient verification on float64 shadow copies."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from modclass.engine.layers import EngineNumericsError

REL_FLOOR = 1e-8


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def grad_check(
    loss_fn: Callable[[], float],
    arrays: Sequence[np.ndarray],
    analytic_grads: Sequence[np.ndarray],
    step: float = 1e-5,
    sample: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_fn`` must recompute the scalar loss from the current contents of
    ``arrays`` (float64, perturbed in place and restored). When ``sample`` is
    given, only that many randomly chosen coordinates are probed per array.
    """
    if len(arrays) != len(analytic_grads):
        raise ValueError("arrays and analytic_grads must pair up")
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for arr, grad in zip(arrays, analytic_grads):
        if arr.shape != grad.shape:
            raise ValueError("gradient shape mismatch")
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        idx = np.arange(flat.size)
        if sample is not None and sample < flat.size:
            idx = rng.choice(flat.size, size=sample, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise EngineNumericsError("non-finite loss during gradient check")
            numeric = (up - down) / (2.0 * step)
            worst = max(worst, relative_error(float(gflat[i]), float(numeric)))
    return worst
