"""Shared fixtures: the reference operating point and its wall topology."""

import numpy as np
import pytest

from magloc import (
    Room,
    effective_coupling,
    effective_noise_variance,
    generate_topology,
    reference_params,
)


@pytest.fixture(scope="session")
def room():
    return Room()


@pytest.fixture(scope="session")
def params():
    return reference_params()


@pytest.fixture(scope="session")
def rho(params):
    return effective_coupling(params)


@pytest.fixture(scope="session")
def sigma2(params):
    return effective_noise_variance(params)


@pytest.fixture(scope="session")
def topo12(room):
    return generate_topology(12, room)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def sphere_grid_vectors(step_deg):
    """Latitude-longitude grid of unit vectors covering the whole sphere."""
    polar = np.deg2rad(np.arange(0.0, 180.0 + step_deg / 2, step_deg))
    azimuth = np.deg2rad(np.arange(0.0, 360.0, step_deg))
    sp, sa = np.sin(polar)[:, None], np.sin(azimuth)[None, :]
    cp, ca = np.cos(polar)[:, None], np.cos(azimuth)[None, :]
    grid = np.stack(
        [(ca * sp).ravel(), (sa * sp).ravel(), np.broadcast_to(cp, (polar.size, azimuth.size)).ravel()],
        axis=1,
    )
    return grid


def grid_min_cost(design, rhs, grid):
    """Brute-force min of ||design @ o - rhs||^2 over the grid vectors."""
    gram = design.T @ design
    lin = design.T @ rhs
    costs = (
        np.einsum("ij,jk,ik->i", grid, gram, grid)
        - 2.0 * grid @ lin
        + float(rhs @ rhs)
    )
    return float(costs.min())
