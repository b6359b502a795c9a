"""Signal gradients, Fisher information, and pose error bounds.

The measurement model is y_n = s_n(beta) + w_n with i.i.d. Gaussian noise of
variance sigma^2 and beta = [x, y, z, azimuth, polar].  The information matrix
is J = (1/sigma^2) * sum_n g_n g_n^T with g_n = grad s_n.  The position error
bound (PEB) is sqrt(trace of the position block of J^-1); the "naive" variants
invert only the corresponding diagonal block of J, i.e. they pretend the other
parameters were known.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError, UnboundedPoseError
from .physics import AnchorTopology, forward_model, link_distances, unit_from_angles

CONDITION_CAP = 1e12


def angle_partials(azimuth_rad, polar_rad):
    """Partials of the unit orientation vector w.r.t. (azimuth, polar)."""
    sa, ca = math.sin(azimuth_rad), math.cos(azimuth_rad)
    sp, cp = math.sin(polar_rad), math.cos(polar_rad)
    d_azimuth = np.array([-sa * sp, ca * sp, 0.0])
    d_polar = np.array([ca * cp, sa * cp, -sp])
    return d_azimuth, d_polar


def _spatial_gradients(position, orientation_vec, topology, coupling):
    """Gradient of every s_n w.r.t. the agent position, shape (N, 3).

    d s_n / d p = (rho / d^3) * [ (1.5/d) (o_n (e.o) + (o_n.e) (o - 2 e (e.o)))
                                  - (3/d) e (b.o) ].
    """
    d, e = link_distances(position, topology)
    o_anc = topology.orientations
    eo_anc = np.einsum("ij,ij->i", e, o_anc)
    b = 1.5 * eo_anc[:, None] * e - 0.5 * o_anc
    eo = e @ orientation_vec
    bo = b @ orientation_vec
    db_o = 1.5 * (eo[:, None] * o_anc + eo_anc[:, None] * (orientation_vec - 2.0 * eo[:, None] * e))
    scale = coupling / d**4
    return scale[:, None] * (db_o - 3.0 * bo[:, None] * e), d, b, bo


def signal_gradients(position, azimuth_rad, polar_rad, topology, coupling):
    """Stacked gradients of all anchor amplitudes, shape (N, 5).

    Columns are the partials w.r.t. [x, y, z, azimuth, polar].
    """
    orientation = unit_from_angles(azimuth_rad, polar_rad)
    spatial, d, b, _ = _spatial_gradients(position, orientation, topology, coupling)
    d_az, d_pol = angle_partials(azimuth_rad, polar_rad)
    scale = coupling / d**3
    g = np.empty((len(d), 5))
    g[:, :3] = spatial
    g[:, 3] = scale * (b @ d_az)
    g[:, 4] = scale * (b @ d_pol)
    return g


def signal_gradient(agent, anchor, coupling):
    """Gradient of a single anchor amplitude w.r.t. the 5 pose parameters."""
    topo = AnchorTopology([anchor])
    orientation = agent.orientation
    return signal_gradients(
        agent.position, orientation.azimuth_rad, orientation.polar_rad, topo, coupling
    )[0]


def log_likelihood(pose, measurements, topology, coupling, noise_var):
    """Gaussian log-likelihood of the measurement vector at a pose."""
    y = np.asarray(measurements, dtype=float)
    n = len(topology)
    if y.shape != (n,):
        raise InvalidParameterError(f"expected {n} measurements, got shape {y.shape}")
    if not noise_var > 0:
        raise InvalidParameterError(f"noise variance must be > 0, got {noise_var!r}")
    r = y - forward_model(pose, topology, coupling)
    return -0.5 * n * math.log(2.0 * math.pi * noise_var) - float(r @ r) / (2.0 * noise_var)


def fisher_matrix(pose, topology, coupling, noise_var):
    """5x5 Fisher information matrix at a pose."""
    if not noise_var > 0:
        raise InvalidParameterError(f"noise variance must be > 0, got {noise_var!r}")
    orientation = pose.orientation
    if orientation is None:
        raise InvalidParameterError("Fisher information needs an oriented pose")
    g = signal_gradients(
        pose.position, orientation.azimuth_rad, orientation.polar_rad, topology, coupling
    )
    return g.T @ g / noise_var


@dataclass
class BoundReport:
    """Error bounds derived from one Fisher information matrix.

    ``peb_m`` accounts for the unknown orientation; ``naive_peb_m`` assumes it
    known (inverts only the position block).  The angle bounds are given both
    per angle and as the combined root sum; the naive combined variant inverts
    only the angle block.
    """

    peb_m: float
    naive_peb_m: float
    azimuth_bound_rad: float
    polar_bound_rad: float
    angle_bound_rad: float
    naive_angle_bound_rad: float
    condition: float

    CSV_COLUMNS = (
        "peb_m",
        "naive_peb_m",
        "azimuth_bound_rad",
        "polar_bound_rad",
        "angle_bound_rad",
        "naive_angle_bound_rad",
        "condition",
    )

    def csv_values(self):
        return (
            self.peb_m,
            self.naive_peb_m,
            self.azimuth_bound_rad,
            self.polar_bound_rad,
            self.angle_bound_rad,
            self.naive_angle_bound_rad,
            self.condition,
        )


def _guarded_inverse(matrix, condition_cap, context):
    """Inverse via symmetric eigendecomposition with a condition-number guard."""
    w, q = np.linalg.eigh(matrix)
    if w[0] <= 0 or not np.all(np.isfinite(w)):
        raise UnboundedPoseError(
            f"{context}: information matrix is singular", condition=float("inf")
        )
    condition = float(w[-1] / w[0])
    if condition > condition_cap:
        raise UnboundedPoseError(
            f"{context}: information matrix condition {condition:.3e} exceeds cap",
            condition=condition,
        )
    return (q / w) @ q.T, condition


def bounds(pose, topology, coupling, noise_var, condition_cap=CONDITION_CAP):
    """Position and orientation error bounds at a pose."""
    j = fisher_matrix(pose, topology, coupling, noise_var)
    inv, condition = _guarded_inverse(j, condition_cap, "pose bounds")
    naive_pos, _ = _guarded_inverse(j[:3, :3], condition_cap, "position block")
    naive_ang, _ = _guarded_inverse(j[3:, 3:], condition_cap, "angle block")
    return BoundReport(
        peb_m=math.sqrt(inv[0, 0] + inv[1, 1] + inv[2, 2]),
        naive_peb_m=math.sqrt(naive_pos[0, 0] + naive_pos[1, 1] + naive_pos[2, 2]),
        azimuth_bound_rad=math.sqrt(inv[3, 3]),
        polar_bound_rad=math.sqrt(inv[4, 4]),
        angle_bound_rad=math.sqrt(inv[3, 3] + inv[4, 4]),
        naive_angle_bound_rad=math.sqrt(naive_ang[0, 0] + naive_ang[1, 1]),
        condition=condition,
    )


def position_bound_known_orientation(
    position, orientation_vec, topology, coupling, noise_var, condition_cap=CONDITION_CAP
):
    """PEB when the coil orientation is known exactly (3x3 information)."""
    if not noise_var > 0:
        raise InvalidParameterError(f"noise variance must be > 0, got {noise_var!r}")
    spatial, _, _, _ = _spatial_gradients(position, orientation_vec, topology, coupling)
    j = spatial.T @ spatial / noise_var
    inv, _ = _guarded_inverse(j, condition_cap, "known-orientation bound")
    return math.sqrt(inv[0, 0] + inv[1, 1] + inv[2, 2])
