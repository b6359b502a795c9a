"""Forward model, link budget, and geometry conventions."""

import math

import numpy as np
import pytest

from magloc import (
    Anchor,
    AnchorTopology,
    CoilSpec,
    InvalidParameterError,
    PhysicalParams,
    Pose,
    SingularGeometryError,
    SphericalOrientation,
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
    reference_params,
    signal,
    watts_to_dbm,
)
from magloc.physics import (
    BOLTZMANN_J_PER_K,
    VACUUM_PERMEABILITY_H_PER_M,
    alignment_gains,
    alignment_loss_percentile_db,
    angles_from_unit,
    as_unit_vec3,
    canonical_angles,
    link_distances,
    sample_unit_vectors,
    scaled_fields,
    unit_from_angles,
)

Z = np.array([0.0, 0.0, 1.0])


def random_axes(rng, count):
    return sample_unit_vectors(rng, count)


# ---------------------------------------------------------------------------
# constants and unit conversions


def test_constants():
    assert VACUUM_PERMEABILITY_H_PER_M == 4e-7 * math.pi
    assert BOLTZMANN_J_PER_K == 1.380649e-23


def test_dbm_conversions():
    assert watts_to_dbm(1e-3) == 0.0
    assert watts_to_dbm(1.0) == pytest.approx(30.0)
    assert dbm_to_watts(0.0) == 1e-3
    for dbm in np.linspace(-160.0, 30.0, 20):
        assert watts_to_dbm(dbm_to_watts(dbm)) == pytest.approx(dbm, abs=1e-12)
    with pytest.raises(InvalidParameterError):
        watts_to_dbm(0.0)
    with pytest.raises(InvalidParameterError):
        watts_to_dbm(-1e-6)


# ---------------------------------------------------------------------------
# spherical angles


def test_unit_from_angles_cardinal_directions():
    np.testing.assert_allclose(unit_from_angles(0.0, 0.0), Z, atol=1e-15)
    np.testing.assert_allclose(unit_from_angles(0.0, math.pi / 2), [1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(
        unit_from_angles(math.pi / 2, math.pi / 2), [0, 1, 0], atol=1e-15
    )
    np.testing.assert_allclose(unit_from_angles(1.234, math.pi)[2], -1.0, atol=1e-15)


def test_angle_vector_roundtrip(rng):
    for v in random_axes(rng, 500):
        azimuth, polar = angles_from_unit(v)
        assert 0.0 <= azimuth < 2.0 * math.pi
        assert 0.0 <= polar <= math.pi
        np.testing.assert_allclose(unit_from_angles(azimuth, polar), v, atol=1e-12)


def test_pole_convention():
    assert angles_from_unit(Z) == (0.0, 0.0)
    azimuth, polar = angles_from_unit(-Z)
    assert azimuth == 0.0
    assert polar == pytest.approx(math.pi)


def test_canonical_angles_preserve_direction(rng):
    for azimuth, polar in rng.uniform(-10.0, 10.0, size=(300, 2)):
        ca, cp = canonical_angles(azimuth, polar)
        assert 0.0 <= ca < 2.0 * math.pi
        assert 0.0 <= cp <= math.pi
        np.testing.assert_allclose(
            unit_from_angles(ca, cp), unit_from_angles(azimuth, polar), atol=1e-12
        )


def test_spherical_orientation_validation():
    with pytest.raises(InvalidParameterError):
        SphericalOrientation(2.0 * math.pi, 1.0)
    with pytest.raises(InvalidParameterError):
        SphericalOrientation(0.0, -0.1)
    with pytest.raises(InvalidParameterError):
        SphericalOrientation(math.nan, 1.0)
    o = SphericalOrientation.from_any_angles(-0.5, 4.0)
    assert 0.0 <= o.azimuth_rad < 2.0 * math.pi
    assert 0.0 <= o.polar_rad <= math.pi


def test_pose_array_roundtrip(rng):
    for v in random_axes(rng, 50):
        pose = Pose(rng.uniform(-5, 5, 3), SphericalOrientation.from_vector(v))
        back = Pose.from_array(pose.as_array())
        np.testing.assert_allclose(back.position, pose.position)
        np.testing.assert_allclose(back.orientation.vector, v, atol=1e-12)
    with pytest.raises(InvalidParameterError):
        Pose(np.zeros(3)).as_array()
    with pytest.raises(InvalidParameterError):
        Pose.from_array(np.zeros(4))


def test_as_unit_vec3_rejects_bad_input():
    with pytest.raises(InvalidParameterError):
        as_unit_vec3([1.0, 1.0, 0.0])
    with pytest.raises(InvalidParameterError):
        as_unit_vec3([math.nan, 0.0, 0.0])
    with pytest.raises(InvalidParameterError):
        as_unit_vec3([1.0, 0.0])


def test_sample_unit_vectors_isotropic():
    rng = np.random.default_rng(7)
    v = sample_unit_vectors(rng, 20000)
    np.testing.assert_allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
    assert np.linalg.norm(v.mean(axis=0)) < 0.02
    again = sample_unit_vectors(np.random.default_rng(7), 20000)
    np.testing.assert_array_equal(v, again)


# ---------------------------------------------------------------------------
# anchors and topologies


def test_anchor_validation():
    with pytest.raises(InvalidParameterError):
        Anchor([0, 0, 0], [0.0, 0.0, 2.0])
    with pytest.raises(InvalidParameterError):
        Anchor([0, 0, 0], Z, index=-1)


def test_topology_validation():
    a = Anchor([0, 0, 0], Z, index=0)
    with pytest.raises(InvalidParameterError):
        AnchorTopology([])
    with pytest.raises(InvalidParameterError):
        AnchorTopology([a, Anchor([0, 0, 0], Z, index=1)])
    with pytest.raises(InvalidParameterError):
        AnchorTopology([a, Anchor([1, 0, 0], Z, index=0)])
    topo = AnchorTopology([a, Anchor([1, 0, 0], Z, index=1)])
    assert topo.positions.shape == (2, 3)
    assert topo.orientations.shape == (2, 3)
    assert len(topo) == 2


# ---------------------------------------------------------------------------
# link budget


def test_coupling_constant_closed_form():
    p = reference_params()
    # Recomputed from first principles: omega mu S S N N sqrt(P) / (4 pi sqrt(R R)).
    omega = 2.0 * math.pi * 13.56e6
    expected = (
        omega * 4e-7 * math.pi * (0.05 * 0.035) * (0.15 * 0.10) * 4 * 50 * math.sqrt(0.01)
    ) / (4.0 * math.pi * math.sqrt(4.0 * 17.0))
    assert coupling_constant(p) == pytest.approx(expected, rel=1e-12)
    assert coupling_constant(p) == pytest.approx(0.0005424308793339574, rel=1e-12)
    # Received power at 1 m coaxial, in dBm.
    assert watts_to_dbm(coupling_constant(p) ** 2) == pytest.approx(-35.31, abs=0.01)


def test_noise_variance_closed_form():
    p = reference_params()
    expected = 1.380649e-23 * 300.0 * 10.0**0.8 * 500.0
    assert noise_variance(p) == pytest.approx(expected, rel=1e-12)
    assert noise_variance(p) == pytest.approx(1.3066959400488518e-17, rel=1e-12)
    assert watts_to_dbm(noise_variance(p)) == pytest.approx(-138.8, abs=0.05)


def test_overrides_select_operating_point():
    p = reference_params()
    # The reference preset pins only the noise power.
    assert p.sigma_squared_dbm_override == -128.8
    assert p.rho_squared_dbm_override is None
    assert effective_coupling(p) == coupling_constant(p)
    assert effective_noise_variance(p) == pytest.approx(dbm_to_watts(-128.8), rel=1e-12)
    assert effective_noise_variance(p) == pytest.approx(1.3182567385564046e-16, rel=1e-12)
    pinned = PhysicalParams(
        angular_frequency_rad_per_s=p.angular_frequency_rad_per_s,
        agent_coil=p.agent_coil,
        anchor_coil=p.anchor_coil,
        transmit_power_watts=p.transmit_power_watts,
        rho_squared_dbm_override=-50.4,
    )
    assert effective_coupling(pinned) == pytest.approx(
        math.sqrt(dbm_to_watts(-50.4)), rel=1e-12
    )
    assert effective_coupling(pinned) == pytest.approx(9.54992586021436e-05, rel=1e-12)
    assert effective_noise_variance(pinned) == noise_variance(p)


def test_coil_and_params_validation():
    with pytest.raises(InvalidParameterError):
        CoilSpec(area_m2=0.0, turns=4, resistance_ohm=4.0)
    with pytest.raises(InvalidParameterError):
        CoilSpec(area_m2=1e-3, turns=0, resistance_ohm=4.0)
    with pytest.raises(InvalidParameterError):
        CoilSpec(area_m2=1e-3, turns=4, resistance_ohm=-1.0)
    p = reference_params()
    with pytest.raises(InvalidParameterError):
        PhysicalParams(
            angular_frequency_rad_per_s=-1.0,
            agent_coil=p.agent_coil,
            anchor_coil=p.anchor_coil,
            transmit_power_watts=0.01,
        )


# ---------------------------------------------------------------------------
# forward model


def test_link_distances_matches_loop(rng, topo12):
    p = rng.uniform(0.5, 2.5, 3) * [4, 4, 1]
    d, e = link_distances(p, topo12)
    for n, anchor in enumerate(topo12):
        assert d[n] == pytest.approx(np.linalg.norm(p - anchor.position), rel=1e-14)
        np.testing.assert_allclose(e[n], (p - anchor.position) / d[n], atol=1e-14)


def test_link_distances_singular_reports_anchor(topo12):
    with pytest.raises(SingularGeometryError) as info:
        link_distances(topo12.anchors[3].position.copy(), topo12)
    assert info.value.anchor_index == 3


def test_scaled_field_norm_range(rng):
    # |b| = 0.5 sqrt(3 (e.o_n)^2 + 1) lies in [0.5, 1] for any geometry.
    for _ in range(30):
        anchors = [
            Anchor(pos, axis, index=i)
            for i, (pos, axis) in enumerate(
                zip(rng.uniform(0, 10, (12, 3)), random_axes(rng, 12))
            )
        ]
        topo = AnchorTopology(anchors)
        _, b = scaled_fields(rng.uniform(-5, 15, 3), topo)
        norms = np.linalg.norm(b, axis=1)
        assert np.all(norms >= 0.5 - 1e-12)
        assert np.all(norms <= 1.0 + 1e-12)


def test_scaled_field_aligned_and_transverse():
    anchor = Anchor([0, 0, 0], Z, index=0)
    coaxial = link_geometry([0.0, 0.0, 2.0], anchor)
    np.testing.assert_allclose(coaxial.scaled_field, Z, atol=1e-15)
    transverse = link_geometry([2.0, 0.0, 0.0], anchor)
    np.testing.assert_allclose(transverse.scaled_field, -0.5 * Z, atol=1e-15)
    assert transverse.distance_m == 2.0


def test_forward_model_hand_cases(rho):
    anchor = Anchor([0, 0, 0], Z, index=0)
    topo = AnchorTopology([anchor])
    up = Pose([0.0, 0.0, 2.0], SphericalOrientation(0.0, 0.0))
    assert forward_model(up, topo, rho)[0] == pytest.approx(rho / 8.0, rel=1e-12)
    side = Pose([2.0, 0.0, 0.0], SphericalOrientation(0.0, 0.0))
    assert forward_model(side, topo, rho)[0] == pytest.approx(-rho / 16.0, rel=1e-12)


def test_predicted_amplitudes_matches_scalar_path(rng, topo12, rho):
    for _ in range(20):
        pose = Pose(
            rng.uniform(1, 9, 3) * [1, 1, 0.3],
            SphericalOrientation.from_vector(random_axes(rng, 1)[0]),
        )
        stacked = predicted_amplitudes(
            pose.position, pose.orientation.vector, topo12, rho
        )
        singles = [signal(pose, anchor, rho) for anchor in topo12]
        np.testing.assert_allclose(stacked, singles, rtol=1e-12)


def test_amplitude_is_scaled_mutual_inductance(rng, topo12):
    # s_n = omega M_n sqrt(P / (4 R_ag R_anc)) ties the two model forms together.
    p = reference_params()
    rho_closed = coupling_constant(p)
    factor = p.angular_frequency_rad_per_s * math.sqrt(
        p.transmit_power_watts
        / (4.0 * p.agent_coil.resistance_ohm * p.anchor_coil.resistance_ohm)
    )
    for _ in range(10):
        pose = Pose(
            rng.uniform(2, 8, 3) * [1, 1, 0.3],
            SphericalOrientation.from_vector(random_axes(rng, 1)[0]),
        )
        for anchor in topo12.anchors[::4]:
            s = signal(pose, anchor, rho_closed)
            m = mutual_inductance(pose, anchor, p)
            assert s == pytest.approx(factor * m, rel=1e-12)


# ---------------------------------------------------------------------------
# alignment statistics and the received-power curve


def test_alignment_gains_bounded(rng):
    g = alignment_gains(rng, 10000)
    assert np.all(g >= 0.0)
    assert np.all(g <= 1.0 + 1e-12)


def test_alignment_percentile_independent_sampler():
    # Cross-check with inverse-CDF sphere sampling instead of normalized
    # Gaussians; agreement within Monte Carlo tolerance.
    rng = np.random.default_rng(123)

    def sphere(count):
        cos_t = rng.uniform(-1.0, 1.0, count)
        phi = rng.uniform(0.0, 2.0 * math.pi, count)
        sin_t = np.sqrt(1.0 - cos_t**2)
        return np.stack([np.cos(phi) * sin_t, np.sin(phi) * sin_t, cos_t], axis=1)

    count = 400_000
    e, o_anchor, o_agent = sphere(count), sphere(count), sphere(count)
    eo = np.einsum("ij,ij->i", e, o_anchor)
    b = 1.5 * eo[:, None] * e - 0.5 * o_anchor
    gains = np.einsum("ij,ij->i", b, o_agent) ** 2
    independent = 10.0 * math.log10(np.quantile(gains, 0.1))
    packaged = alignment_loss_percentile_db(0.1, samples=400_000, seed=5)
    assert packaged == pytest.approx(independent, abs=0.25)


def test_alignment_percentile_deterministic():
    a = alignment_loss_percentile_db(0.1, samples=10_000, seed=3)
    b = alignment_loss_percentile_db(0.1, samples=10_000, seed=3)
    assert a == b
    with pytest.raises(InvalidParameterError):
        alignment_loss_percentile_db(1.5)
    with pytest.raises(InvalidParameterError):
        alignment_loss_percentile_db(0.1, samples=100)


def test_power_curve_slope_and_anchor_point():
    p = reference_params()
    pinned = PhysicalParams(
        angular_frequency_rad_per_s=p.angular_frequency_rad_per_s,
        agent_coil=p.agent_coil,
        anchor_coil=p.anchor_coil,
        transmit_power_watts=p.transmit_power_watts,
        rho_squared_dbm_override=-50.4,
        sigma_squared_dbm_override=-128.8,
    )
    curve = power_curve(pinned, np.array([1.0, 10.0, 100.0]))
    assert curve.power_dbm[0] == pytest.approx(-50.4, abs=1e-12)
    assert curve.power_dbm[0] - curve.power_dbm[1] == pytest.approx(60.0, abs=1e-12)
    assert curve.power_dbm[1] - curve.power_dbm[2] == pytest.approx(60.0, abs=1e-12)
    assert curve.noise_dbm == pytest.approx(-128.8, abs=1e-12)
    # Closed form crossing: 10^((rho2_dbm - sigma2_dbm) / 60).
    assert curve.coaxial_unit_snr_distance_m == pytest.approx(
        10.0 ** ((-50.4 + 128.8) / 60.0), rel=1e-12
    )
    shifted = power_curve(pinned, np.array([1.0]), alignment_db=-23.7)
    assert shifted.power_dbm[0] == pytest.approx(-50.4 - 23.7, abs=1e-12)


def test_power_curve_validation():
    p = reference_params()
    with pytest.raises(InvalidParameterError):
        power_curve(p, np.array([]))
    with pytest.raises(InvalidParameterError):
        power_curve(p, np.array([1.0, -2.0]))
    with pytest.raises(InvalidParameterError):
        power_curve(p, np.array([[1.0, 2.0]]))
