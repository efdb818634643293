"""
Quasi-Newton Maximizer
======================

Thin wrapper over scipy's BFGS for objectives that may return -inf at
infeasible points, with a monitor hook and step-size termination.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np
from scipy.optimize import minimize

logger = logging.getLogger(__name__)

STATUS = {
    1: "Gradient < tolerance",
    2: "Step size < tolerance",
    3: "Invalid starting point",
    4: "Iterations exceeded",
    6: "Monitor abort",
    8: "Line search step size is too small",
}

CONVERGED_STATUS = (1, 2)

# Stand-in for -inf seen by the line search; the gradient there is zero.
INFEASIBLE_PENALTY = 1e100

# scipy BFGS exit codes: 0 gtol met, 1 maxiter, 2 precision loss, 3 nan
_SCIPY_STATUS = {0: 1, 1: 4, 2: 8, 3: 8}


@dataclass
class OptimizeResult:
    x: np.ndarray
    value: float
    grad: np.ndarray
    iterations: int
    status: int
    evals: int = 0
    history: List[float] = field(default_factory=list)
    last_step: float = np.inf

    @property
    def message(self) -> str:
        return STATUS[self.status]

    @property
    def converged(self) -> bool:
        return self.status in CONVERGED_STATUS


class _Stop(Exception):
    def __init__(self, status: int):
        super().__init__(STATUS[status])
        self.status = status


class _Tracker:
    """Negated objective for scipy plus the state of the accepted iterates."""

    def __init__(self, fn: Callable[[np.ndarray], Tuple[float, np.ndarray]], monitor, param_tol: float):
        self.fn = fn
        self.monitor = monitor
        self.param_tol = param_tol
        self.evals = 0
        self.cache: Dict[bytes, Tuple[float, np.ndarray]] = {}
        self.iteration = 0
        self.x = None
        self.value = -np.inf
        self.grad = None
        self.history: List[float] = []
        self.last_step = np.inf

    def evaluate(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        key = x.tobytes()
        if key not in self.cache:
            value, grad = self.fn(x)
            self.evals += 1
            if len(self.cache) > 32:
                self.cache.clear()
            self.cache[key] = (float(value), np.asarray(grad, dtype=float))
        return self.cache[key]

    def negated(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        value, grad = self.evaluate(np.array(x, dtype=float))
        if not np.isfinite(value):
            return INFEASIBLE_PENALTY, np.zeros_like(x)
        return -value, -grad

    def accept(self, x: np.ndarray, value: float, grad: np.ndarray):
        self.x, self.value, self.grad = np.array(x, dtype=float), value, grad
        self.history.append(value)

    def callback(self, xk: np.ndarray):
        previous = self.x
        value, grad = self.evaluate(np.array(xk, dtype=float))
        self.iteration += 1
        self.accept(xk, value, grad)
        self.last_step = float(np.max(np.abs(self.x - previous)))
        logger.debug(f"BFGS iteration {self.iteration}: value={value:.8g}, step={self.last_step:.3g}")

        if not self.monitor(x=self.x, fx=value, step=self.iteration):
            raise _Stop(6)
        if self.last_step < self.param_tol:
            raise _Stop(2)

    def result(self, status: int) -> OptimizeResult:
        return OptimizeResult(self.x, self.value, self.grad, self.iteration, status,
                              self.evals, self.history, self.last_step)


def maximize(fn: Callable[[np.ndarray], Tuple[float, np.ndarray]], x0,
             max_iter: int = 500, param_tol: float = 1e-6, grad_tol: float = 1e-9,
             monitor: Callable[..., bool] = lambda **kw: True) -> OptimizeResult:
    """
    Maximize fn by scipy's BFGS.

    Args:
        fn: Returns (value, gradient); value -inf marks an infeasible point
        x0: Starting point (must be feasible)
        max_iter: Iteration limit
        param_tol: Stop when the accepted step is below this in max-norm
        grad_tol: Stop when the gradient max-norm is below grad_tol * max(1, |value at x0|)
        monitor: Called as monitor(x=, fx=, step=) after every accepted step;
            returning False stops the run

    Returns:
        OptimizeResult with status code keyed into STATUS
    """
    tracker = _Tracker(fn, monitor, param_tol)
    x = np.asarray(x0, dtype=float).copy()
    value, grad = tracker.evaluate(x)
    if not np.isfinite(value):
        return OptimizeResult(x, value, np.zeros_like(x), 0, 3, tracker.evals)
    tracker.accept(x, value, grad)

    options = {"maxiter": max_iter, "gtol": grad_tol * max(1.0, abs(value))}
    try:
        res = minimize(tracker.negated, x, jac=True, method="BFGS",
                       callback=tracker.callback, options=options)
    except _Stop as stop:
        return tracker.result(stop.status)

    status = _SCIPY_STATUS.get(res.status, 8)
    final_value, final_grad = tracker.evaluate(np.asarray(res.x, dtype=float))
    if np.isfinite(final_value) and final_value >= tracker.value:
        tracker.x, tracker.value, tracker.grad = np.asarray(res.x, dtype=float), final_value, final_grad
    if status == 8:
        logger.debug(f"BFGS stopped early: {res.message}")
        # rounding floor near a maximum
        if np.max(np.abs(tracker.grad)) <= 1e-6 * max(1.0, abs(tracker.value)):
            status = 1
    return tracker.result(status)
