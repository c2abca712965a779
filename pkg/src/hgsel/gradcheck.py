"""Finite-difference gradient verification.

The checker perturbs each parameter entry by +/- h, re-evaluates the loss
with no tape active, and compares the central difference against the
analytic gradient produced by one backward pass. The numerical route never
touches the analytic one, so it serves as an independent oracle for every
loss in the package. Used by both the test suite and the ``grad-check``
CLI command.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Tape, Tensor, backward

DEFAULT_STEP = 1e-6


def numerical_gradient(loss_fn: Callable[[], Tensor], param: Tensor,
                       h: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of ``loss_fn`` w.r.t. one parameter."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = loss_fn().item()
        flat[i] = orig - h
        f_minus = loss_fn().item()
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numerical: np.ndarray) -> float:
    """Max-norm relative error between two gradient blocks."""
    diff = float(np.max(np.abs(analytic - numerical), initial=0.0))
    scale = max(float(np.max(np.abs(analytic), initial=0.0)),
                float(np.max(np.abs(numerical), initial=0.0)))
    if scale < 1e-8:
        return diff
    return diff / scale


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor],
                    h: float = DEFAULT_STEP) -> float:
    """Compare analytic and finite-difference gradients; return the worst error.

    ``loss_fn`` must rebuild the loss from the current parameter values on
    every call (it is invoked once under a tape and 2 * n_entries times
    without one).
    """
    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        n = numerical_gradient(loss_fn, p, h=h)
        worst = max(worst, relative_error(a, n))
    return worst
