"""Self-contained Levenberg-Marquardt minimizer for small dense problems.

Minimizes ||r(x)||^2 by damped Gauss-Newton steps solving
(J^T J + lambda I) delta = -J^T r.  The damping is multiplicative: an accepted
step divides lambda by ``damping_decrease``, a rejected candidate multiplies
it by ``damping_increase`` and retries without counting an iteration.
``iterations`` therefore counts accepted parameter updates only.
"""

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParameterError


class Termination(str, enum.Enum):
    STEP_TOLERANCE = "step-tolerance"
    GRADIENT_TOLERANCE = "gradient-tolerance"
    MAX_ITERATIONS = "max-iterations"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class SolverOptions:
    """Tuning knobs; the defaults suit amplitude-scale residuals."""

    max_iterations: int = 1000
    min_step: float = 1e-6
    initial_damping_scale: float = 1e-3
    damping_increase: float = 10.0
    damping_decrease: float = 10.0
    gradient_tolerance: float = 1e-16
    fd_relative_step: float = 1e-7

    def __post_init__(self):
        if int(self.max_iterations) < 1:
            raise InvalidParameterError(
                f"max_iterations must be >= 1, got {self.max_iterations!r}"
            )
        self.max_iterations = int(self.max_iterations)
        for name in (
            "min_step",
            "initial_damping_scale",
            "gradient_tolerance",
            "fd_relative_step",
        ):
            value = float(getattr(self, name))
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be > 0, got {value!r}")
            setattr(self, name, value)
        for name in ("damping_increase", "damping_decrease"):
            value = float(getattr(self, name))
            if not (value > 1 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be > 1, got {value!r}")
            setattr(self, name, value)


@dataclass
class ResidualProblem:
    """A residual map r: R^dimension -> R^residual_count.

    ``jacobian`` (same argument, returns (residual_count, dimension)) is
    optional; forward differences with the base residual are used otherwise.
    Non-finite residual entries mark a point as infeasible: candidates there
    are rejected by damping, and only a non-finite *accepted* state aborts.
    """

    dimension: int
    residual_count: int
    residual: Callable
    jacobian: Callable | None = None

    def __post_init__(self):
        if self.dimension < 1 or self.residual_count < self.dimension:
            raise InvalidParameterError(
                "need residual_count >= dimension >= 1, got "
                f"{self.residual_count} x {self.dimension}"
            )


@dataclass
class SolverResult:
    argmin: np.ndarray
    cost: float
    iterations: int
    termination: Termination
    cost_history: np.ndarray  # initial cost followed by each accepted cost


# Damping beyond this without a usable step means the linear algebra itself
# is broken (non-finite J survived the guards), so give up.
_MAX_DAMPING = 1e120
# Long accepted-step streaks shrink the damping geometrically; without a floor
# it underflows to exactly 0.0, from which the multiplicative increase can
# never recover (0 * k == 0) and a subsequent rejection would retry forever.
_MIN_DAMPING = np.finfo(float).tiny


def _fd_jacobian(fun, x, r0, rel_step):
    jac = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = rel_step * max(abs(x[j]), 1.0)
        xj = x.copy()
        xj[j] += h
        jac[:, j] = (np.asarray(fun(xj), dtype=float) - r0) / h
    return jac


def solve(problem, x0, options=None):
    """Run the descent from ``x0`` and report the last accepted state."""
    opts = options if options is not None else SolverOptions()
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (problem.dimension,):
        raise InvalidParameterError(
            f"x0 must have shape ({problem.dimension},), got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError(f"x0 must be finite, got {x!r}")

    r = np.asarray(problem.residual(x), dtype=float)
    if r.shape != (problem.residual_count,):
        raise InvalidParameterError(
            f"residual must have shape ({problem.residual_count},), got {r.shape}"
        )
    if not np.all(np.isfinite(r)):
        return SolverResult(x, math.inf, 0, Termination.NUMERICAL_FAILURE, np.array([math.inf]))
    cost = float(r @ r)
    history = [cost]
    eye = np.eye(problem.dimension)
    lam = None
    iterations = 0

    while True:
        if problem.jacobian is not None:
            jac = np.asarray(problem.jacobian(x), dtype=float)
        else:
            jac = _fd_jacobian(problem.residual, x, r, opts.fd_relative_step)
        if jac.shape != (problem.residual_count, problem.dimension):
            raise InvalidParameterError(f"jacobian has shape {jac.shape}")
        if not np.all(np.isfinite(jac)):
            termination = Termination.NUMERICAL_FAILURE
            break
        grad = jac.T @ r
        if float(np.max(np.abs(grad))) <= opts.gradient_tolerance:
            termination = Termination.GRADIENT_TOLERANCE
            break
        jtj = jac.T @ jac
        if lam is None:
            mean_diag = float(np.trace(jtj)) / problem.dimension
            lam = opts.initial_damping_scale * (mean_diag if mean_diag > 0 else 1.0)
            lam = max(lam, _MIN_DAMPING)

        termination = None
        while True:  # retry with stronger damping until accepted or converged
            try:
                step = np.linalg.solve(jtj + lam * eye, -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is None or not np.all(np.isfinite(step)):
                lam *= opts.damping_increase
                if lam > _MAX_DAMPING:
                    termination = Termination.NUMERICAL_FAILURE
                    break
                continue
            if float(np.linalg.norm(step)) <= opts.min_step:
                termination = Termination.STEP_TOLERANCE
                break
            candidate = x + step
            r_new = np.asarray(problem.residual(candidate), dtype=float)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if cost_new < cost:
                x, r, cost = candidate, r_new, cost_new
                lam = max(lam / opts.damping_decrease, _MIN_DAMPING)
                iterations += 1
                history.append(cost)
                break
            lam *= opts.damping_increase
            if lam > _MAX_DAMPING:
                termination = Termination.NUMERICAL_FAILURE
                break
        if termination is not None:
            break
        if iterations >= opts.max_iterations:
            termination = Termination.MAX_ITERATIONS
            break

    return SolverResult(x, cost, iterations, termination, np.array(history))
