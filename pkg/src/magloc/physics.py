"""Dipole coupling model and link budget for magneto-inductive localization.

An agent carries a single transmit coil at unknown position with unknown axis
direction; anchors are fixed receive coils with known pose.  In the
magneto-quasistatic near field the noise-free receive amplitude at anchor n is

    s_n = (rho / d_n^3) * b_n . o_agent,      b_n = (1.5 e_n e_n^T - 0.5 I) o_n,

where d_n is the agent-anchor distance, e_n the unit vector from anchor to
agent, o_n the anchor coil axis and rho the coupling constant of the link
budget.  Amplitudes are power-wave amplitudes in sqrt(W), positions in meters,
angles in radians.  Everything here is a pure function; random sampling takes
an explicit numpy Generator.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError, SingularGeometryError

VACUUM_PERMEABILITY_H_PER_M = 4.0e-7 * math.pi
BOLTZMANN_J_PER_K = 1.380649e-23

# Tolerances for vector validation and the spherical pole convention.
UNIT_NORM_TOL = 1e-9
POLE_SIN_TOL = 1e-12
# Below this separation (meters) the dipole model is treated as singular.
MIN_SEPARATION_M = 1e-12


# ---------------------------------------------------------------------------
# small vector helpers


def as_vec3(value, name="vector"):
    """Coerce to a finite float array of shape (3,)."""
    v = np.asarray(value, dtype=float)
    if v.shape != (3,):
        raise InvalidParameterError(f"{name} must have shape (3,), got {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError(f"{name} must be finite, got {v!r}")
    return v


def as_unit_vec3(value, name="direction"):
    """Coerce to a finite unit 3-vector (norm within 1e-9 of one)."""
    v = as_vec3(value, name)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise InvalidParameterError(f"{name} must be unit length, got norm {norm!r}")
    return v


def unit_from_angles(azimuth_rad, polar_rad):
    """Unit vector [cos(phi) sin(theta), sin(phi) sin(theta), cos(theta)]."""
    st = math.sin(polar_rad)
    return np.array(
        [math.cos(azimuth_rad) * st, math.sin(azimuth_rad) * st, math.cos(polar_rad)]
    )


def angles_from_unit(v):
    """Inverse of :func:`unit_from_angles` with azimuth = 0 at the poles.

    Returns (azimuth, polar) with azimuth in [0, 2*pi) and polar in [0, pi].
    """
    v = as_unit_vec3(v)
    polar = math.acos(min(1.0, max(-1.0, float(v[2]))))
    if math.hypot(float(v[0]), float(v[1])) < POLE_SIN_TOL:
        return 0.0, polar
    return math.atan2(float(v[1]), float(v[0])) % (2.0 * math.pi), polar


def canonical_angles(azimuth_rad, polar_rad):
    """Map arbitrary angles to the canonical ranges [0, 2*pi) x [0, pi].

    The returned pair describes the same unit vector as the input.
    """
    if not (math.isfinite(azimuth_rad) and math.isfinite(polar_rad)):
        raise InvalidParameterError("angles must be finite")
    polar = polar_rad % (2.0 * math.pi)
    if polar > math.pi:
        polar = 2.0 * math.pi - polar
        azimuth_rad = azimuth_rad + math.pi
    return azimuth_rad % (2.0 * math.pi), polar


def sample_unit_vectors(rng, count):
    """Draw ``count`` independent directions uniformly on the unit sphere."""
    v = rng.standard_normal((count, 3))
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    # Resample the (measure-zero) degenerate draws rather than dividing by ~0.
    bad = norm[:, 0] < 1e-12
    while np.any(bad):
        v[bad] = rng.standard_normal((int(bad.sum()), 3))
        norm = np.linalg.norm(v, axis=1, keepdims=True)
        bad = norm[:, 0] < 1e-12
    return v / norm


# ---------------------------------------------------------------------------
# pose and anchor types


@dataclass
class SphericalOrientation:
    """Coil axis in spherical angles: azimuth in [0, 2*pi), polar in [0, pi]."""

    azimuth_rad: float
    polar_rad: float

    def __post_init__(self):
        self.azimuth_rad = float(self.azimuth_rad)
        self.polar_rad = float(self.polar_rad)
        if not (math.isfinite(self.azimuth_rad) and math.isfinite(self.polar_rad)):
            raise InvalidParameterError("orientation angles must be finite")
        if not 0.0 <= self.azimuth_rad < 2.0 * math.pi:
            raise InvalidParameterError(
                f"azimuth must lie in [0, 2*pi), got {self.azimuth_rad!r}"
            )
        if not 0.0 <= self.polar_rad <= math.pi:
            raise InvalidParameterError(
                f"polar angle must lie in [0, pi], got {self.polar_rad!r}"
            )

    @property
    def vector(self):
        return unit_from_angles(self.azimuth_rad, self.polar_rad)

    @classmethod
    def from_vector(cls, v):
        azimuth, polar = angles_from_unit(v)
        return cls(azimuth, polar)

    @classmethod
    def from_any_angles(cls, azimuth_rad, polar_rad):
        """Build from unrestricted angles by canonicalizing them first."""
        return cls(*canonical_angles(azimuth_rad, polar_rad))


@dataclass
class Pose:
    """Agent position plus optional coil orientation.

    ``orientation`` is None for estimates that carry no orientation
    information (e.g. the strongest-anchor baseline).
    """

    position: np.ndarray
    orientation: SphericalOrientation | None = None

    def __post_init__(self):
        self.position = as_vec3(self.position, "position")

    def orientation_vector(self):
        if self.orientation is None:
            raise InvalidParameterError("pose has no orientation")
        return self.orientation.vector

    def as_array(self):
        """Stacked parameter vector [x, y, z, azimuth, polar]."""
        if self.orientation is None:
            raise InvalidParameterError("pose has no orientation")
        return np.concatenate(
            [self.position, [self.orientation.azimuth_rad, self.orientation.polar_rad]]
        )

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (5,):
            raise InvalidParameterError(
                f"pose array must have shape (5,), got {values.shape}"
            )
        return cls(values[:3], SphericalOrientation.from_any_angles(values[3], values[4]))


@dataclass
class Anchor:
    """Fixed receive coil with known position and axis."""

    position: np.ndarray
    orientation: np.ndarray
    index: int = 0

    def __post_init__(self):
        self.position = as_vec3(self.position, "anchor position")
        self.orientation = as_unit_vec3(self.orientation, "anchor orientation")
        self.index = int(self.index)
        if self.index < 0:
            raise InvalidParameterError(f"anchor index must be >= 0, got {self.index}")


@dataclass
class AnchorTopology:
    """An ordered set of anchors with distinct positions and unique indices."""

    anchors: list

    def __post_init__(self):
        self.anchors = list(self.anchors)
        if not self.anchors:
            raise InvalidParameterError("topology needs at least one anchor")
        indices = [a.index for a in self.anchors]
        if len(set(indices)) != len(indices):
            raise InvalidParameterError("anchor indices must be unique")
        self.positions = np.array([a.position for a in self.anchors])
        self.orientations = np.array([a.orientation for a in self.anchors])
        if len(self.anchors) > 1:
            diff = self.positions[:, None, :] - self.positions[None, :, :]
            dist = np.linalg.norm(diff, axis=2)
            dist[np.diag_indices(len(self.anchors))] = np.inf
            if dist.min() < MIN_SEPARATION_M:
                raise InvalidParameterError("anchor positions must be distinct")

    def __len__(self):
        return len(self.anchors)

    def __iter__(self):
        return iter(self.anchors)


@dataclass
class LinkGeometry:
    """Geometry of one agent-anchor link: distance, unit offset, scaled field.

    ``scaled_field`` is b_n = (1.5 e e^T - 0.5 I) o_n; its norm always lies
    in [0.5, 1].
    """

    distance_m: float
    unit_offset: np.ndarray
    scaled_field: np.ndarray


# ---------------------------------------------------------------------------
# link budget


@dataclass
class CoilSpec:
    """Electrical description of one coil."""

    area_m2: float
    turns: int
    resistance_ohm: float

    def __post_init__(self):
        self.area_m2 = float(self.area_m2)
        self.turns = int(self.turns)
        self.resistance_ohm = float(self.resistance_ohm)
        if not (self.area_m2 > 0 and math.isfinite(self.area_m2)):
            raise InvalidParameterError(f"coil area must be > 0, got {self.area_m2!r}")
        if self.turns < 1:
            raise InvalidParameterError(f"turns must be >= 1, got {self.turns!r}")
        if not (self.resistance_ohm > 0 and math.isfinite(self.resistance_ohm)):
            raise InvalidParameterError(
                f"coil resistance must be > 0, got {self.resistance_ohm!r}"
            )


@dataclass
class PhysicalParams:
    """Physical constants of one agent/anchor link configuration.

    The two ``*_dbm_override`` fields, when set, replace the closed-form
    coupling constant (as received power in dBm at 1 m coaxial alignment) and
    noise power (dBm).  They pin experiments to a published operating point
    even when the closed forms disagree with it.
    """

    angular_frequency_rad_per_s: float
    agent_coil: CoilSpec
    anchor_coil: CoilSpec
    transmit_power_watts: float
    temperature_kelvin: float = 300.0
    bandwidth_hz: float = 500.0
    noise_figure_linear: float = 10.0 ** 0.8
    permeability_h_per_m: float = VACUUM_PERMEABILITY_H_PER_M
    boltzmann_j_per_k: float = BOLTZMANN_J_PER_K
    rho_squared_dbm_override: float | None = None
    sigma_squared_dbm_override: float | None = None

    def __post_init__(self):
        for name in (
            "angular_frequency_rad_per_s",
            "transmit_power_watts",
            "temperature_kelvin",
            "bandwidth_hz",
            "noise_figure_linear",
            "permeability_h_per_m",
            "boltzmann_j_per_k",
        ):
            value = float(getattr(self, name))
            setattr(self, name, value)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameterError(f"{name} must be > 0, got {value!r}")
        for name in ("rho_squared_dbm_override", "sigma_squared_dbm_override"):
            value = getattr(self, name)
            if value is not None:
                value = float(value)
                setattr(self, name, value)
                if not math.isfinite(value):
                    raise InvalidParameterError(f"{name} must be finite, got {value!r}")


def watts_to_dbm(power_watts):
    """Power in watts to dBm.  Requires a positive power."""
    if not power_watts > 0:
        raise InvalidParameterError(f"power must be > 0 W, got {power_watts!r}")
    return 10.0 * math.log10(power_watts / 1e-3)


def dbm_to_watts(power_dbm):
    """Power in dBm to watts."""
    return 10.0 ** (power_dbm / 10.0) * 1e-3


def coupling_constant(params):
    """Closed-form coupling constant rho in sqrt(W)*m^3.

    rho = omega * mu * S_ag * S_anc * N_ag * N_anc * sqrt(P_t)
          / (4 * pi * sqrt(R_ag * R_anc)).
    """
    ag, anc = params.agent_coil, params.anchor_coil
    return (
        params.angular_frequency_rad_per_s
        * params.permeability_h_per_m
        * ag.area_m2
        * anc.area_m2
        * ag.turns
        * anc.turns
        * math.sqrt(params.transmit_power_watts)
        / (4.0 * math.pi * math.sqrt(ag.resistance_ohm * anc.resistance_ohm))
    )


def noise_variance(params):
    """Closed-form receiver noise power k_B * T * F * B in watts."""
    return (
        params.boltzmann_j_per_k
        * params.temperature_kelvin
        * params.noise_figure_linear
        * params.bandwidth_hz
    )


def effective_coupling(params):
    """Coupling constant actually used: override (if set) else closed form.

    The override is squared received power in dBm at d = 1 m coaxial; the
    returned value is the corresponding amplitude sqrt(10^(dBm/10) * 1e-3).
    """
    if params.rho_squared_dbm_override is not None:
        return math.sqrt(dbm_to_watts(params.rho_squared_dbm_override))
    return coupling_constant(params)


def effective_noise_variance(params):
    """Noise power actually used: override (if set) else closed form."""
    if params.sigma_squared_dbm_override is not None:
        return dbm_to_watts(params.sigma_squared_dbm_override)
    return noise_variance(params)


# ---------------------------------------------------------------------------
# forward model


def link_distances(position, topology):
    """Distances and unit offsets from every anchor to ``position``.

    Returns (d, e) with d of shape (N,) and e of shape (N, 3), where
    e[n] = (position - anchor_n) / d[n].  Raises SingularGeometryError naming
    the first offending anchor if any distance is below MIN_SEPARATION_M.
    """
    diff = position - topology.positions
    d = np.linalg.norm(diff, axis=1)
    if np.any(d < MIN_SEPARATION_M):
        bad = int(np.argmin(d))
        raise SingularGeometryError(
            f"agent position coincides with anchor {topology.anchors[bad].index}",
            anchor_index=topology.anchors[bad].index,
        )
    return d, diff / d[:, None]


def scaled_fields(position, topology):
    """Distances d and stacked scaled-field rows b_n (shape (N, 3)).

    b_n = 1.5 * e_n (e_n . o_n) - 0.5 * o_n.
    """
    d, e = link_distances(position, topology)
    eo = np.einsum("ij,ij->i", e, topology.orientations)
    b = 1.5 * eo[:, None] * e - 0.5 * topology.orientations
    return d, b


def link_geometry(agent_position, anchor):
    """Geometry of a single link as a LinkGeometry record."""
    agent_position = as_vec3(agent_position, "agent position")
    diff = agent_position - anchor.position
    d = float(np.linalg.norm(diff))
    if d < MIN_SEPARATION_M:
        raise SingularGeometryError(
            f"agent position coincides with anchor {anchor.index}",
            anchor_index=anchor.index,
        )
    e = diff / d
    b = 1.5 * float(e @ anchor.orientation) * e - 0.5 * anchor.orientation
    return LinkGeometry(distance_m=d, unit_offset=e, scaled_field=b)


def predicted_amplitudes(position, orientation_vec, topology, coupling):
    """Noise-free amplitudes s_n = (rho / d_n^3) * b_n . o at all anchors."""
    d, b = scaled_fields(position, topology)
    return coupling / d**3 * (b @ orientation_vec)


def forward_model(agent, topology, coupling):
    """Noise-free amplitudes for a full pose (position + orientation)."""
    return predicted_amplitudes(
        agent.position, agent.orientation_vector(), topology, coupling
    )


def signal(agent, anchor, coupling):
    """Noise-free amplitude of a single agent-anchor link."""
    geo = link_geometry(agent.position, anchor)
    return coupling / geo.distance_m**3 * float(geo.scaled_field @ agent.orientation_vector())


def mutual_inductance(agent, anchor, params):
    """Dipole mutual inductance M_n in henry.

    M_n = (mu / 2 pi) * S_ag S_anc N_ag N_anc * d^-3 * b . o.  The amplitude
    model is s_n = omega M_n sqrt(P_t / (4 R_ag R_anc)).
    """
    geo = link_geometry(agent.position, anchor)
    ag, anc = params.agent_coil, params.anchor_coil
    return (
        params.permeability_h_per_m
        / (2.0 * math.pi)
        * ag.area_m2
        * anc.area_m2
        * ag.turns
        * anc.turns
        / geo.distance_m**3
        * float(geo.scaled_field @ agent.orientation_vector())
    )


# ---------------------------------------------------------------------------
# misalignment statistics and received-power curve


def alignment_gains(rng, count):
    """Random squared alignment factors (b . o)^2 / |b|^2 ... see notes.

    Draws anchor axis, agent axis and offset direction independently and
    uniformly, then returns the squared projection (b . o)^2 with
    b = (1.5 e e^T - 0.5 I) o_n.  The factor multiplies the coaxial-normalized
    received power, i.e. power(d, alignment) = rho^2 d^-6 * gain.
    """
    e = sample_unit_vectors(rng, count)
    o_anchor = sample_unit_vectors(rng, count)
    o_agent = sample_unit_vectors(rng, count)
    eo = np.einsum("ij,ij->i", e, o_anchor)
    b = 1.5 * eo[:, None] * e - 0.5 * o_anchor
    return np.einsum("ij,ij->i", b, o_agent) ** 2


def alignment_loss_percentile_db(quantile, samples=1_000_000, seed=0):
    """Monte Carlo quantile of the random alignment loss, in dB (<= 0).

    ``quantile`` is the fraction of random geometries with a *smaller* gain;
    e.g. quantile=0.1 returns the loss not exceeded in 90% of geometries.
    Deterministic for a fixed seed.
    """
    if not 0.0 < quantile < 1.0:
        raise InvalidParameterError(f"quantile must be in (0, 1), got {quantile!r}")
    if samples < 10_000:
        raise InvalidParameterError(f"need >= 10000 samples, got {samples!r}")
    rng = np.random.default_rng(seed)
    chunk = 250_000
    gains = np.concatenate(
        [alignment_gains(rng, min(chunk, samples - i)) for i in range(0, samples, chunk)]
    )
    return 10.0 * math.log10(float(np.quantile(gains, quantile)))


@dataclass
class PowerCurve:
    """Received power versus distance at a fixed alignment loss."""

    distances_m: np.ndarray
    power_dbm: np.ndarray
    noise_dbm: float
    alignment_db: float
    coaxial_unit_snr_distance_m: float


def power_curve(params, distances_m, alignment_db=0.0):
    """Received power (dBm) over distance plus the coaxial 0 dB SNR crossing.

    power(d) = rho^2_dBm - 60 log10(d) + alignment_db.  The crossing is the
    distance where coaxial received power equals the noise floor:
    d* = (rho^2 / sigma^2)^(1/6).
    """
    distances_m = np.asarray(distances_m, dtype=float)
    if distances_m.ndim != 1 or distances_m.size == 0:
        raise InvalidParameterError("distances must be a non-empty 1-D array")
    if not np.all(np.isfinite(distances_m)) or np.any(distances_m <= 0):
        raise InvalidParameterError("distances must be finite and > 0")
    rho = effective_coupling(params)
    sigma2 = effective_noise_variance(params)
    rho2_dbm = watts_to_dbm(rho**2)
    power_dbm = rho2_dbm - 60.0 * np.log10(distances_m) + alignment_db
    crossing = (rho**2 / sigma2) ** (1.0 / 6.0)
    return PowerCurve(
        distances_m=distances_m,
        power_dbm=power_dbm,
        noise_dbm=watts_to_dbm(sigma2),
        alignment_db=float(alignment_db),
        coaxial_unit_snr_distance_m=float(crossing),
    )
