"""Experiment configuration: rooms, parameter presets, JSON round-trip.

Two presets cover the two published operating points:

* :func:`reference_params` — closed-form coupling constant from the coil
  constants plus the -128.8 dBm noise override.  This is the operating point
  behind the bound statistics and estimator comparisons (centimeter-level
  bounds), and the default for experiments.
* :func:`link_budget_params` — additionally overrides the coupling constant
  with -50.4 dBm received power at 1 m.  This pins the received-power curve
  (its 0 dB SNR crossing near 20 m).

The two differ because the published 1 m received power is ~15 dB below what
the same table's coil constants give in closed form; experiments that depend
on the discrepancy pick their preset explicitly.
"""

import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, InvalidParameterError
from .physics import CoilSpec, PhysicalParams

ALL_ALGORITHMS = ("ml5d", "ml3d", "wls", "cascade", "baseline")


@dataclass
class Room:
    """Axis-aligned room [0, side_x] x [0, side_y] x [0, height] in meters."""

    side_x_m: float = 10.0
    side_y_m: float = 10.0
    height_m: float = 3.0

    def __post_init__(self):
        for name in ("side_x_m", "side_y_m", "height_m"):
            value = float(getattr(self, name))
            setattr(self, name, value)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be > 0, got {value!r}")

    @property
    def lower(self):
        return np.zeros(3)

    @property
    def upper(self):
        return np.array([self.side_x_m, self.side_y_m, self.height_m])


def reference_params():
    """Coil constants of the published system; noise pinned to -128.8 dBm."""
    return PhysicalParams(
        angular_frequency_rad_per_s=2.0 * math.pi * 13.56e6,
        agent_coil=CoilSpec(area_m2=0.05 * 0.035, turns=4, resistance_ohm=4.0),
        anchor_coil=CoilSpec(area_m2=0.15 * 0.10, turns=50, resistance_ohm=17.0),
        transmit_power_watts=0.01,
        temperature_kelvin=300.0,
        bandwidth_hz=500.0,
        noise_figure_linear=10.0**0.8,
        sigma_squared_dbm_override=-128.8,
    )


def link_budget_params():
    """Reference parameters with received power also pinned (-50.4 dBm at 1 m)."""
    return replace(reference_params(), rho_squared_dbm_override=-50.4)


def _default_power_distances():
    return tuple(float(d) for d in np.geomspace(1.0, 30.0, 61))


@dataclass
class ExperimentConfig:
    """Everything a batch experiment needs; JSON keys mirror the field names.

    ``trials`` counts deployments (crlb-cdf) or full estimator trials
    (algo-compare); ``sweep_trials`` counts deployments per grid point of the
    bound sweep; ``noise_realizations`` counts measurements per deployment in
    the bound-attainment experiment (0 skips the estimator columns).
    """

    room: Room = field(default_factory=Room)
    anchor_count: int = 12
    params: PhysicalParams = field(default_factory=reference_params)
    trials: int = 2000
    noise_realizations: int = 500
    sweep_trials: int = 200
    seed: int = 1
    algorithms: tuple = ALL_ALGORITHMS
    init_count: int = 3
    deployment_margin_m: float = 0.2
    room_side_lengths_m: tuple = (2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0)
    anchor_counts: tuple = (5, 8, 12, 20, 40)
    power_distances_m: tuple = field(default_factory=_default_power_distances)
    alignment_quantile: float = 0.1
    alignment_samples: int = 1_000_000
    alignment_seed: int = 0
    jobs: int = 1
    out_dir: str = "out"
    format: str = "csv"

    def __post_init__(self):
        self.anchor_count = int(self.anchor_count)
        self.trials = int(self.trials)
        self.noise_realizations = int(self.noise_realizations)
        self.sweep_trials = int(self.sweep_trials)
        self.seed = int(self.seed)
        self.init_count = int(self.init_count)
        self.alignment_samples = int(self.alignment_samples)
        self.alignment_seed = int(self.alignment_seed)
        self.jobs = int(self.jobs)
        self.deployment_margin_m = float(self.deployment_margin_m)
        self.alignment_quantile = float(self.alignment_quantile)
        self.algorithms = tuple(self.algorithms)
        self.room_side_lengths_m = tuple(float(s) for s in self.room_side_lengths_m)
        self.anchor_counts = tuple(int(n) for n in self.anchor_counts)
        self.power_distances_m = tuple(float(d) for d in self.power_distances_m)
        if self.anchor_count < 1:
            raise ConfigError(f"anchor_count must be >= 1, got {self.anchor_count}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.sweep_trials < 1:
            raise ConfigError(f"sweep_trials must be >= 1, got {self.sweep_trials}")
        if self.noise_realizations < 0:
            raise ConfigError(
                f"noise_realizations must be >= 0, got {self.noise_realizations}"
            )
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be a u64, got {self.seed}")
        if self.init_count < 1:
            raise ConfigError(f"init_count must be >= 1, got {self.init_count}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if not 0.0 <= self.deployment_margin_m * 2 < min(
            self.room.side_x_m, self.room.side_y_m, self.room.height_m
        ):
            raise ConfigError(
                f"deployment margin {self.deployment_margin_m} leaves no interior"
            )
        unknown = set(self.algorithms) - set(ALL_ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithms: {sorted(unknown)}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {self.format!r}")

    def to_dict(self):
        out = asdict(self)
        out["room"] = asdict(self.room)
        out["params"] = asdict(self.params)
        for key in ("algorithms", "room_side_lengths_m", "anchor_counts", "power_distances_m"):
            out[key] = list(out[key])
        return out


def _build(cls, data, context):
    if not isinstance(data, dict):
        raise ConfigError(f"{context} must be an object, got {type(data).__name__}")
    fields = {f.name for f in cls.__dataclass_fields__.values()}
    unknown = set(data) - fields
    if unknown:
        raise ConfigError(f"unknown {context} keys: {sorted(unknown)}")
    return data


def config_from_dict(data):
    """Build an ExperimentConfig from plain dicts, rejecting unknown keys.

    ``params`` (and its coil sub-objects) may be partial: given keys are
    merged over the reference preset, so a config can pin a single constant
    without restating the whole link budget.
    """
    data = dict(_build(ExperimentConfig, data, "config"))
    try:
        if "room" in data:
            data["room"] = Room(**_build(Room, data["room"], "room"))
        if "params" in data:
            params = dict(_build(PhysicalParams, data["params"], "params"))
            base = reference_params()
            for coil in ("agent_coil", "anchor_coil"):
                if coil in params:
                    params[coil] = replace(
                        getattr(base, coil), **_build(CoilSpec, params[coil], coil)
                    )
            data["params"] = replace(base, **params)
        return ExperimentConfig(**data)
    except (InvalidParameterError, TypeError) as error:
        raise ConfigError(str(error)) from error


def load_config(path):
    """Read a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as error:
        raise ConfigError(f"{path}: invalid JSON ({error})") from error
    return config_from_dict(data)
