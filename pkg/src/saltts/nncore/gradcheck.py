"""Central finite-difference checking of analytic gradients.

Works on any closure () -> scalar Tensor whose parameters are known. Double
precision only: with h around 1e-5 the truncation and roundoff errors both sit
far below the tolerances used in the tests.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import NumericError
from .tensor import Parameter, Tensor


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Parameter],
    h: float = 1e-5,
) -> float:
    """Compare analytic gradients of fn() against central differences.

    Perturbs every coordinate of every parameter. Returns the max relative
    error  |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    if not 1e-6 <= h <= 1e-4:
        raise ValueError(f"h should lie in [1e-6, 1e-4], got {h}")
    for p in params:
        if p.data.dtype != np.float64:
            raise ValueError("grad_check requires float64 parameters")
        p.zero_grad()
    loss = fn()
    if not np.isfinite(loss.data).all():
        raise NumericError("loss is non-finite before perturbation")
    loss.backward()
    analytic = [p.grad_or_zeros().copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(fn().data)
            flat[i] = orig - h
            f_minus = float(fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = ga.reshape(-1)[i]
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, rel)
    return worst
