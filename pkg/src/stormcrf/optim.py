"""Deterministic smooth minimisation used by every model in the package.

Thin wrapper around scipy's L-BFGS-B: convergence is declared on the
max-norm of the (projected) gradient, iterations are capped, and the
objective value at every accepted iterate is recorded so callers can
check the descent property or inspect traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

__all__ = ["OptimResult", "minimize_smooth"]


@dataclass
class OptimResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)


def minimize_smooth(
    fun_and_grad,
    x0,
    max_iterations: int = 500,
    gradient_tolerance: float = 1e-6,
    iterate_callback=None,
) -> OptimResult:
    """Minimise a smooth objective given a fused value-and-gradient callable.

    `iterate_callback(x)` fires at every accepted iterate, e.g. to assert
    parameter invariants along the optimisation path.
    """
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    if gradient_tolerance <= 0:
        raise ValueError("gradient_tolerance must be positive")
    x0 = np.asarray(x0, dtype=np.float64)

    recent: dict[bytes, float] = {}

    def wrapped(x):
        value, grad = fun_and_grad(x)
        if len(recent) > 64:
            recent.clear()
        recent[x.tobytes()] = float(value)
        return float(value), np.asarray(grad, dtype=np.float64)

    trace = [float(fun_and_grad(x0)[0])]

    def on_iterate(xk):
        value = recent.get(xk.tobytes())
        if value is None:
            value = float(fun_and_grad(xk)[0])
        trace.append(value)
        if iterate_callback is not None:
            iterate_callback(xk)

    result = minimize(
        wrapped,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=on_iterate,
        options={
            "maxiter": max_iterations,
            "gtol": gradient_tolerance,
            "ftol": 1e-11,
            "maxls": 40,
        },
    )
    return OptimResult(
        x=np.asarray(result.x, dtype=np.float64),
        objective=float(result.fun),
        iterations=int(result.nit),
        converged=bool(result.status == 0),
        message=str(result.message),
        trace=trace,
    )
