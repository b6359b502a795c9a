"""Magneto-inductive near-field localization of a single-coil agent.

Forward dipole model, Fisher-information error bounds, exact orientation
subproblem, maximum-likelihood and least-squares estimators, and a
reproducible Monte Carlo experiment harness with a CLI.
"""

from .config import (
    ALL_ALGORITHMS,
    ExperimentConfig,
    Room,
    config_from_dict,
    link_budget_params,
    load_config,
    reference_params,
)
from .errors import (
    ConfigError,
    DegenerateRhsError,
    EstimationError,
    InvalidParameterError,
    MaglocError,
    RankDeficiencyError,
    SingularGeometryError,
    UnboundedPoseError,
)
from .estimators import (
    Algorithm,
    InitSampler,
    PoseEstimate,
    cascade,
    ml3d,
    ml5d,
    multi_start,
    strongest_anchor,
    wls,
)
from .fisher import (
    BoundReport,
    bounds,
    fisher_matrix,
    log_likelihood,
    position_bound_known_orientation,
    signal_gradient,
    signal_gradients,
)
from .harness import (
    ExperimentTable,
    generate_topology,
    run_algo_compare,
    run_crlb_cdf,
    run_peb_sweep,
    run_power_curve,
    run_topology,
    sample_deployment,
    simulate_measurement,
    trial_generator,
    write_table,
)
from .lm import ResidualProblem, SolverOptions, SolverResult, Termination, solve
from .orientation import (
    ConstrainedLSSolution,
    orientation_given_position,
    orientation_given_position_scaled,
    solve_constrained,
    unscaled_design,
)
from .physics import (
    Anchor,
    AnchorTopology,
    CoilSpec,
    LinkGeometry,
    PhysicalParams,
    Pose,
    SphericalOrientation,
    alignment_loss_percentile_db,
    coupling_constant,
    dbm_to_watts,
    effective_coupling,
    effective_noise_variance,
    forward_model,
    link_geometry,
    mutual_inductance,
    noise_variance,
    power_curve,
    predicted_amplitudes,
    signal,
    watts_to_dbm,
)

__version__ = "0.1.0"
