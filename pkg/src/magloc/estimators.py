"""Pose estimators for the single-coil agent.

``ml5d`` descends the full maximum-likelihood cost over position and
orientation angles with analytic gradients.  ``ml3d`` reduces the problem to
position only by solving the unit-norm orientation subproblem exactly at every
position hypothesis.  ``wls`` does the same reduction after rescaling each
measurement by d_n^3 / rho, which flattens the cost landscape far from anchors
at the price of distance-dependent noise weighting.  ``cascade`` runs wls and
refines its position with ml3d.  ``multi_start`` repeats any of these from
random initializations and keeps the lowest final cost.  ``strongest_anchor``
is the trivial baseline that returns the position of the anchor with the
largest received power.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateRhsError,
    EstimationError,
    InvalidParameterError,
    MaglocError,
    RankDeficiencyError,
    SingularGeometryError,
)
from .fisher import signal_gradients
from .lm import ResidualProblem, SolverOptions, SolverResult, Termination, solve
from .orientation import scaled_rhs, solve_constrained, unscaled_design
from .physics import (
    Pose,
    SphericalOrientation,
    angles_from_unit,
    as_vec3,
    predicted_amplitudes,
    sample_unit_vectors,
    scaled_fields,
    unit_from_angles,
)

# Exceptions an inner orientation step may raise at a hostile position
# hypothesis; the outer descent treats these as a steep penalty, not an abort.
_INNER_STEP_ERRORS = (
    SingularGeometryError,
    RankDeficiencyError,
    DegenerateRhsError,
    EstimationError,
)
_PENALTY_FACTOR = 1e6


class Algorithm(str, enum.Enum):
    ML5D = "ml5d"
    ML3D = "ml3d"
    WLS = "wls"
    CASCADE = "cascade"
    BASELINE = "baseline"


@dataclass
class PoseEstimate:
    """An estimator verdict: pose, final cost, and descent accounting.

    ``termination`` is None for estimators that do not iterate (baseline).
    Orientation is None when the algorithm does not produce one.
    """

    pose: Pose
    residual_cost: float
    iterations: int
    termination: Termination | None
    algorithm: Algorithm


@dataclass
class InitSampler:
    """Draws uniform random starting poses inside an axis-aligned box."""

    lower: np.ndarray
    upper: np.ndarray
    seed: int

    def __post_init__(self):
        self.lower = as_vec3(self.lower, "lower corner")
        self.upper = as_vec3(self.upper, "upper corner")
        if np.any(self.upper <= self.lower):
            raise InvalidParameterError("upper corner must exceed lower corner")
        self._rng = np.random.default_rng(int(self.seed))

    def next_pose(self):
        position = self._rng.uniform(self.lower, self.upper)
        axis = sample_unit_vectors(self._rng, 1)[0]
        return Pose(position, SphericalOrientation.from_vector(axis))


def _validated(measurements, topology):
    y = np.asarray(measurements, dtype=float)
    if y.shape != (len(topology),):
        raise InvalidParameterError(
            f"expected {len(topology)} measurements, got shape {y.shape}"
        )
    if not np.all(np.isfinite(y)):
        raise InvalidParameterError("measurements must be finite")
    return y


def ml5d(measurements, topology, coupling, noise_var, init, options=None):
    """Full 5-parameter maximum-likelihood descent from an oriented pose."""
    y = _validated(measurements, topology)
    if init.orientation is None:
        raise InvalidParameterError("ml5d needs an oriented starting pose")
    n = y.size

    def residual(x):
        try:
            predicted = predicted_amplitudes(
                x[:3], unit_from_angles(x[3], x[4]), topology, coupling
            )
        except SingularGeometryError:
            return np.full(n, math.inf)
        return predicted - y

    def jacobian(x):
        try:
            return signal_gradients(x[:3], x[3], x[4], topology, coupling)
        except SingularGeometryError:
            return np.full((n, 5), math.inf)

    result = solve(ResidualProblem(5, n, residual, jacobian), init.as_array(), options)
    return PoseEstimate(
        pose=Pose.from_array(result.argmin),
        residual_cost=result.cost,
        iterations=result.iterations,
        termination=result.termination,
        algorithm=Algorithm.ML5D,
    )


def _position_descent(y, topology, init_position, options, evaluate, algorithm):
    """Shared outer loop of the position-only estimators.

    ``evaluate(p)`` returns (residual_vector, orientation) and may raise any
    of the inner-step errors.  Those turn into a flat residual whose squared
    norm is 1e6 times the best cost seen, so the descent retreats; if even the
    first evaluation fails, a numerical-failure estimate is returned.
    """
    p0 = as_vec3(init_position, "initial position")
    n = y.size
    best_cost = [math.inf]

    def residual(p):
        try:
            r, _ = evaluate(p)
        except _INNER_STEP_ERRORS:
            if not math.isfinite(best_cost[0]):
                raise
            return np.full(n, math.sqrt(_PENALTY_FACTOR * best_cost[0] / n))
        cost = float(r @ r)
        if cost < best_cost[0]:
            best_cost[0] = cost
        return r

    try:
        result = solve(ResidualProblem(3, n, residual), p0, options)
    except _INNER_STEP_ERRORS:
        return PoseEstimate(
            pose=Pose(p0, None),
            residual_cost=math.inf,
            iterations=0,
            termination=Termination.NUMERICAL_FAILURE,
            algorithm=algorithm,
        )
    try:
        _, orientation = evaluate(result.argmin)
        spherical = SphericalOrientation.from_vector(orientation)
    except _INNER_STEP_ERRORS:
        spherical = None
    return PoseEstimate(
        pose=Pose(result.argmin, spherical),
        residual_cost=result.cost,
        iterations=result.iterations,
        termination=result.termination,
        algorithm=algorithm,
    )


def ml3d(measurements, topology, coupling, noise_var, init_position, options=None):
    """Position-only ML descent; orientation solved exactly per hypothesis."""
    y = _validated(measurements, topology)

    def evaluate(p):
        design = unscaled_design(p, topology, coupling)
        solution = solve_constrained(design, y)
        return design @ solution.orientation - y, solution.orientation

    return _position_descent(y, topology, init_position, options, evaluate, Algorithm.ML3D)


def wls(measurements, topology, coupling, init_position, options=None):
    """Distance-scaled position descent (flatter landscape, rougher weights)."""
    y = _validated(measurements, topology)

    def evaluate(p):
        d, b = scaled_fields(p, topology)
        target = scaled_rhs(y, d, coupling)
        solution = solve_constrained(b, target)
        return b @ solution.orientation - target, solution.orientation

    return _position_descent(y, topology, init_position, options, evaluate, Algorithm.WLS)


def cascade(measurements, topology, coupling, noise_var, init_position, options=None):
    """wls from the given start, then ml3d refinement from its position."""
    first = wls(measurements, topology, coupling, init_position, options)
    second = ml3d(
        measurements, topology, coupling, noise_var, first.pose.position, options
    )
    return PoseEstimate(
        pose=second.pose,
        residual_cost=second.residual_cost,
        iterations=first.iterations + second.iterations,
        termination=second.termination,
        algorithm=Algorithm.CASCADE,
    )


def strongest_anchor(measurements, topology):
    """Baseline: the position of the anchor receiving the most power."""
    y = _validated(measurements, topology)
    winner = int(np.argmax(np.abs(y)))  # ties resolve to the lowest index
    return PoseEstimate(
        pose=Pose(topology.anchors[winner].position.copy(), None),
        residual_cost=0.0,
        iterations=0,
        termination=None,
        algorithm=Algorithm.BASELINE,
    )


def multi_start(
    algorithm,
    measurements,
    topology,
    coupling,
    noise_var,
    starts,
    sampler,
    options=None,
):
    """Run an estimator from ``starts`` sampled initializations, keep best cost."""
    algorithm = Algorithm(algorithm)
    if starts < 1:
        raise InvalidParameterError(f"starts must be >= 1, got {starts!r}")
    best = None
    last_error = None
    for _ in range(starts):
        init = sampler.next_pose()
        try:
            if algorithm is Algorithm.ML5D:
                estimate = ml5d(measurements, topology, coupling, noise_var, init, options)
            elif algorithm is Algorithm.ML3D:
                estimate = ml3d(
                    measurements, topology, coupling, noise_var, init.position, options
                )
            elif algorithm is Algorithm.WLS:
                estimate = wls(measurements, topology, coupling, init.position, options)
            elif algorithm is Algorithm.CASCADE:
                estimate = cascade(
                    measurements, topology, coupling, noise_var, init.position, options
                )
            else:
                raise InvalidParameterError(f"{algorithm.value} cannot be multi-started")
        except MaglocError as error:
            if isinstance(error, InvalidParameterError):
                raise
            last_error = error
            continue
        if not math.isfinite(estimate.residual_cost):
            continue
        if best is None or estimate.residual_cost < best.residual_cost:
            best = estimate
    if best is None:
        raise EstimationError(f"all {starts} starts failed (last error: {last_error!r})")
    return best
