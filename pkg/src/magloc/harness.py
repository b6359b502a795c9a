"""Batch experiment harness behind the CLI.

Builds deterministic wall topologies, samples random deployments, generates
noisy measurements, and runs the bound sweeps and estimator comparisons,
emitting plot-ready tables.

Reproducibility contract: every trial draws from its own generator seeded by
``SeedSequence([config seed, *trial indices])`` (PCG64), so records depend
only on (config, trial index) — never on execution order or worker count.
Output files contain no timestamps and format floats with ``repr``, making
re-runs byte-identical.
"""

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .config import ExperimentConfig, Room
from .errors import InvalidParameterError, UnboundedPoseError
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
from .fisher import bounds, position_bound_known_orientation
from .physics import (
    Anchor,
    AnchorTopology,
    Pose,
    SphericalOrientation,
    alignment_loss_percentile_db,
    effective_coupling,
    effective_noise_variance,
    forward_model,
    power_curve,
    sample_unit_vectors,
    watts_to_dbm,
)

RNG_ALGORITHM = "numpy PCG64 via SeedSequence([seed, *trial indices])"

_WALL_HEIGHT_CYCLE = (0.5, 1.5, 2.5)  # meters in the 3 m reference room


def generate_topology(anchor_count, room):
    """Deterministic wall layout spreading anchors in all three dimensions.

    Anchors go round-robin to the four side walls, evenly spaced along each
    wall, at mounting heights cycling {0.5, 1.5, 2.5} m scaled to the room
    height, oriented along the inward wall normal.
    """
    if anchor_count < 1:
        raise InvalidParameterError(f"anchor_count must be >= 1, got {anchor_count}")
    walls = [[], [], [], []]
    for i in range(anchor_count):
        walls[i % 4].append(i)
    height_scale = room.height_m / 3.0
    anchors = []
    for wall_index, members in enumerate(walls):
        for slot, global_index in enumerate(members):
            fraction = (slot + 1) / (len(members) + 1)
            z = _WALL_HEIGHT_CYCLE[global_index % 3] * height_scale
            if wall_index == 0:  # y = 0, facing +y
                position = (fraction * room.side_x_m, 0.0, z)
                normal = (0.0, 1.0, 0.0)
            elif wall_index == 1:  # x = side_x, facing -x
                position = (room.side_x_m, fraction * room.side_y_m, z)
                normal = (-1.0, 0.0, 0.0)
            elif wall_index == 2:  # y = side_y, facing -y
                position = (fraction * room.side_x_m, room.side_y_m, z)
                normal = (0.0, -1.0, 0.0)
            else:  # x = 0, facing +x
                position = (0.0, fraction * room.side_y_m, z)
                normal = (1.0, 0.0, 0.0)
            anchors.append(Anchor(position, normal, index=global_index))
    anchors.sort(key=lambda anchor: anchor.index)
    return AnchorTopology(anchors)


def trial_generator(seed, *indices):
    """Independent generator for one trial of one experiment."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *indices])))


def sample_deployment(rng, room, margin_m=0.2):
    """Uniform pose in the room interior shrunk by ``margin_m`` per wall,
    with isotropic random orientation."""
    lower = room.lower + margin_m
    upper = room.upper - margin_m
    if np.any(upper <= lower):
        raise InvalidParameterError("margin leaves no interior to sample")
    position = rng.uniform(lower, upper)
    axis = sample_unit_vectors(rng, 1)[0]
    return Pose(position, SphericalOrientation.from_vector(axis))


def sample_init_pose(rng, room):
    """Uniform starting pose anywhere in the room box."""
    position = rng.uniform(room.lower, room.upper)
    axis = sample_unit_vectors(rng, 1)[0]
    return Pose(position, SphericalOrientation.from_vector(axis))


def simulate_measurement(rng, pose, topology, coupling, noise_var):
    """Noise-free amplitudes plus i.i.d. zero-mean Gaussian noise."""
    if noise_var < 0:
        raise InvalidParameterError(f"noise variance must be >= 0, got {noise_var!r}")
    clean = forward_model(pose, topology, coupling)
    return clean + math.sqrt(noise_var) * rng.standard_normal(len(topology))


# ---------------------------------------------------------------------------
# experiment tables


@dataclass
class ExperimentTable:
    """One output table plus its (deterministic) metadata dictionary."""

    name: str
    columns: tuple
    rows: list
    metadata: dict


def _map_trials(worker, count, jobs):
    """Order-preserving map over trial indices, optionally across processes."""
    if jobs <= 1 or count <= 1:
        return [worker(i) for i in range(count)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunk = max(1, count // (jobs * 8))
        return list(pool.map(worker, range(count), chunksize=chunk))


def _wrap_angle(delta):
    return (delta + math.pi) % (2.0 * math.pi) - math.pi


def run_topology(config):
    """Anchor table of the configured room."""
    topology = generate_topology(config.anchor_count, config.room)
    rows = [
        (a.index, a.position[0], a.position[1], a.position[2],
         a.orientation[0], a.orientation[1], a.orientation[2])
        for a in topology
    ]
    columns = ("anchor", "x_m", "y_m", "z_m", "axis_x", "axis_y", "axis_z")
    return ExperimentTable("topology", columns, rows, _base_metadata(config))


def run_power_curve(config):
    """Received power over distance, coaxial and at the misaligned percentile."""
    alignment_db = alignment_loss_percentile_db(
        config.alignment_quantile, config.alignment_samples, config.alignment_seed
    )
    coaxial = power_curve(config.params, config.power_distances_m, alignment_db=0.0)
    misaligned = power_curve(config.params, config.power_distances_m, alignment_db)
    noise_dbm = watts_to_dbm(effective_noise_variance(config.params))
    rows = [
        (float(d), float(pc), float(pm), noise_dbm, noise_dbm + 10.0)
        for d, pc, pm in zip(coaxial.distances_m, coaxial.power_dbm, misaligned.power_dbm)
    ]
    columns = (
        "distance_m",
        "coaxial_power_dbm",
        "misaligned_power_dbm",
        "noise_dbm",
        "noise_plus_10db_dbm",
    )
    metadata = _base_metadata(config)
    crossing = coaxial.coaxial_unit_snr_distance_m
    metadata.update(
        alignment_db=alignment_db,
        alignment_quantile=config.alignment_quantile,
        alignment_samples=config.alignment_samples,
        rho_squared_dbm=watts_to_dbm(effective_coupling(config.params) ** 2),
        noise_dbm=noise_dbm,
        coaxial_unit_snr_distance_m=crossing,
        misaligned_unit_snr_distance_m=crossing * 10.0 ** (alignment_db / 60.0),
    )
    return ExperimentTable("power_curve", columns, rows, metadata)


def _sweep_point(config, side_index, count_index):
    side = config.room_side_lengths_m[side_index]
    count = config.anchor_counts[count_index]
    room = Room(side, side, config.room.height_m)
    topology = generate_topology(count, room)
    coupling = effective_coupling(config.params)
    noise_var = effective_noise_variance(config.params)
    vertical = np.array([0.0, 0.0, 1.0])
    pebs, known = [], []
    excluded = 0
    for t in range(config.sweep_trials):
        rng = trial_generator(config.seed, side_index, count_index, t)
        pose = sample_deployment(rng, room, config.deployment_margin_m)
        try:
            report = bounds(pose, topology, coupling, noise_var)
            fixed = position_bound_known_orientation(
                pose.position, vertical, topology, coupling, noise_var
            )
        except UnboundedPoseError:
            excluded += 1
            continue
        pebs.append(report.peb_m)
        known.append(fixed)
    median = float(np.median(pebs)) if pebs else math.nan
    median_known = float(np.median(known)) if known else math.nan
    return (side, count, median, median_known, len(pebs), excluded)


def run_peb_sweep(config):
    """Median bounds over room size and anchor count grids."""
    points = [
        (si, ci)
        for si in range(len(config.room_side_lengths_m))
        for ci in range(len(config.anchor_counts))
    ]
    # Grid points, not individual trials, are the parallel unit here.
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            rows = list(pool.map(partial(_sweep_point_star, config), points))
    else:
        rows = [_sweep_point(config, si, ci) for si, ci in points]
    columns = (
        "side_m",
        "anchor_count",
        "median_peb_m",
        "median_known_vertical_peb_m",
        "emitted",
        "excluded",
    )
    metadata = _base_metadata(config)
    metadata.update(
        sweep_trials=config.sweep_trials,
        excluded_total=int(sum(r[5] for r in rows)),
    )
    return ExperimentTable("peb_sweep", columns, rows, metadata)


def _sweep_point_star(config, point):
    return _sweep_point(config, point[0], point[1])


def _crlb_trial(config, topology, index):
    rng = trial_generator(config.seed, index)
    pose = sample_deployment(rng, config.room, config.deployment_margin_m)
    coupling = effective_coupling(config.params)
    noise_var = effective_noise_variance(config.params)
    try:
        report = bounds(pose, topology, coupling, noise_var)
    except UnboundedPoseError:
        return None
    row = [
        index,
        pose.position[0], pose.position[1], pose.position[2],
        pose.orientation.azimuth_rad, pose.orientation.polar_rad,
        *report.csv_values(),
    ]
    if config.noise_realizations > 0:
        sq_pos = sq_az = sq_pol = 0.0
        for _ in range(config.noise_realizations):
            y = simulate_measurement(rng, pose, topology, coupling, noise_var)
            estimate = ml5d(y, topology, coupling, noise_var, pose)
            delta = estimate.pose.position - pose.position
            sq_pos += float(delta @ delta)
            sq_az += _wrap_angle(
                estimate.pose.orientation.azimuth_rad - pose.orientation.azimuth_rad
            ) ** 2
            sq_pol += (
                estimate.pose.orientation.polar_rad - pose.orientation.polar_rad
            ) ** 2
        n = config.noise_realizations
        row.extend(
            [math.sqrt(sq_pos / n), math.sqrt(sq_az / n), math.sqrt(sq_pol / n)]
        )
    return tuple(row)


def run_crlb_cdf(config):
    """Per-deployment bound report, optionally with truth-initialized ML RMS."""
    topology = generate_topology(config.anchor_count, config.room)
    worker = partial(_crlb_trial, config, topology)
    results = _map_trials(worker, config.trials, config.jobs)
    rows = [r for r in results if r is not None]
    excluded = sum(1 for r in results if r is None)
    columns = [
        "trial",
        "x_m", "y_m", "z_m", "azimuth_rad", "polar_rad",
        *("peb_m", "naive_peb_m", "azimuth_bound_rad", "polar_bound_rad",
          "angle_bound_rad", "naive_angle_bound_rad", "condition"),
    ]
    if config.noise_realizations > 0:
        columns += ["ml_rms_position_m", "ml_rms_azimuth_rad", "ml_rms_polar_rad"]
    metadata = _base_metadata(config)
    metadata.update(
        noise_realizations=config.noise_realizations,
        emitted=len(rows),
        excluded=excluded,
    )
    return ExperimentTable("crlb_cdf", tuple(columns), rows, metadata)


def _compare_trial(config, topology, index):
    rng = trial_generator(config.seed, index)
    coupling = effective_coupling(config.params)
    noise_var = effective_noise_variance(config.params)
    pose = sample_deployment(rng, config.room, config.deployment_margin_m)
    y = simulate_measurement(rng, pose, topology, coupling, noise_var)
    init = sample_init_pose(rng, config.room)
    sampler_seed = int(rng.integers(2**63))

    row = [
        index,
        pose.position[0], pose.position[1], pose.position[2],
        pose.orientation.azimuth_rad, pose.orientation.polar_rad,
        init.position[0], init.position[1], init.position[2],
    ]

    def record(estimate):
        error = float(np.linalg.norm(estimate.pose.position - pose.position))
        termination = "" if estimate.termination is None else estimate.termination.value
        row.extend([error, estimate.iterations, estimate.residual_cost, termination])

    for name in config.algorithms:
        algorithm = Algorithm(name)
        if algorithm is Algorithm.ML5D:
            record(ml5d(y, topology, coupling, noise_var, init))
        elif algorithm is Algorithm.ML3D:
            record(ml3d(y, topology, coupling, noise_var, init.position))
        elif algorithm is Algorithm.WLS:
            record(wls(y, topology, coupling, init.position))
        elif algorithm is Algorithm.CASCADE:
            record(cascade(y, topology, coupling, noise_var, init.position))
        else:
            record(strongest_anchor(y, topology))
    if config.init_count > 1 and "cascade" in config.algorithms:
        sampler = InitSampler(config.room.lower, config.room.upper, sampler_seed)
        record(
            multi_start(
                Algorithm.CASCADE, y, topology, coupling, noise_var,
                config.init_count, sampler,
            )
        )
    record(ml5d(y, topology, coupling, noise_var, pose))
    return tuple(row)


def run_algo_compare(config):
    """Estimator comparison: one deployment/measurement/init per trial."""
    topology = generate_topology(config.anchor_count, config.room)
    worker = partial(_compare_trial, config, topology)
    rows = _map_trials(worker, config.trials, config.jobs)
    columns = [
        "trial",
        "x_m", "y_m", "z_m", "azimuth_rad", "polar_rad",
        "init_x_m", "init_y_m", "init_z_m",
    ]
    labels = list(config.algorithms)
    if config.init_count > 1 and "cascade" in config.algorithms:
        labels.append(f"cascade_x{config.init_count}")
    labels.append("ml5d_truth_init")
    for label in labels:
        columns += [
            f"{label}_error_m",
            f"{label}_iterations",
            f"{label}_cost",
            f"{label}_termination",
        ]
    metadata = _base_metadata(config)
    metadata.update(_compare_summary(labels, columns, rows))
    return ExperimentTable("algo_compare", tuple(columns), rows, metadata)


def _compare_summary(labels, columns, rows, success_threshold_m=0.1):
    summary = {"success_threshold_m": success_threshold_m, "success_rate": {},
               "median_iterations": {}, "max_iteration_fraction": {}}
    for label in labels:
        errors = _column(columns, rows, f"{label}_error_m")
        iterations = _column(columns, rows, f"{label}_iterations")
        terminations = _column(columns, rows, f"{label}_termination")
        summary["success_rate"][label] = float(
            np.mean(np.asarray(errors) < success_threshold_m)
        )
        summary["median_iterations"][label] = float(np.median(iterations))
        summary["max_iteration_fraction"][label] = float(
            np.mean([t == "max-iterations" for t in terminations])
        )
    return summary


def _column(columns, rows, name):
    idx = columns.index(name)
    return [row[idx] for row in rows]


def _base_metadata(config):
    return {"config": config.to_dict(), "rng": RNG_ALGORITHM}


# ---------------------------------------------------------------------------
# deterministic writers


def format_cell(value):
    """Round-trip-exact text for one CSV cell."""
    if value is None:
        return ""
    if isinstance(value, str):
        if any(ch in value for ch in ",\n\r\""):
            raise InvalidParameterError(f"cell value not CSV-safe: {value!r}")
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    raise InvalidParameterError(f"cannot format {type(value).__name__} for CSV")


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def write_table(table, out_dir, file_format="csv"):
    """Write the data file plus ``<name>_meta.json``; returns the data path."""
    os.makedirs(out_dir, exist_ok=True)
    if file_format == "csv":
        path = os.path.join(out_dir, f"{table.name}.csv")
        lines = [",".join(table.columns)]
        lines += [",".join(format_cell(v) for v in row) for row in table.rows]
        payload = "\n".join(lines) + "\n"
    elif file_format == "json":
        path = os.path.join(out_dir, f"{table.name}.json")
        payload = json.dumps(
            {"columns": list(table.columns), "rows": [_plain(list(r)) for r in table.rows]},
            indent=2,
        ) + "\n"
    else:
        raise InvalidParameterError(f"format must be csv or json, got {file_format!r}")
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(payload)
    meta_path = os.path.join(out_dir, f"{table.name}_meta.json")
    with open(meta_path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(json.dumps(_plain(table.metadata), indent=2, sort_keys=True) + "\n")
    return path
