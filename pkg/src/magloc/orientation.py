"""Unit-norm constrained linear least squares for the coil orientation.

Given a design matrix A (N x 3) and measurements y, solves

    min_o ||A o - y||^2   subject to   ||o|| = 1

exactly: the stationarity condition (A^T A + lambda I) o = A^T y turns the
constraint into the secular equation sum_i mu_i c_i^2 / (mu_i + lambda)^2 = 1
in the SVD basis (mu_i squared singular values, c_i = u_i^T y).  Clearing
denominators gives a polynomial of degree at most six whose largest real root
is the global minimizer's multiplier.  Repeated mu_i are merged and terms with
negligible c_i dropped before root finding, which removes the spurious roots
such terms would otherwise introduce; the root is then Newton-polished on the
secular sum and verified by substitution.
"""

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import DegenerateRhsError, EstimationError, RankDeficiencyError
from .physics import scaled_fields

RANK_TOL = 1e-12          # relative singular-value cutoff for rank 3
DEGENERATE_RHS_TOL = 1e-14  # |c_i| below this (relative to ||y||) is noise
MERGE_TOL = 1e-10         # relative mu spacing below which terms merge
SECULAR_TOL = 1e-8        # substitution check: |sum - 1| must not exceed this


@dataclass
class ConstrainedLSSolution:
    """Constrained minimizer with its multiplier and SVD diagnostics.

    ``spectrum`` holds the squared singular values of the design (descending)
    and ``coefficients`` the rotated right-hand side, both for the original,
    unscaled problem.
    """

    orientation: np.ndarray
    multiplier: float
    cost: float
    spectrum: np.ndarray
    coefficients: np.ndarray


def _secular(lam, mus, weights):
    return float(np.sum(weights / (mus + lam) ** 2))


def _largest_real_root(mus, weights):
    """Largest real root of prod (mu+lam)^2 - sum_i w_i prod_{j!=i} (mu+lam)^2."""
    squares = [np.polymul([1.0, mu], [1.0, mu]) for mu in mus]
    poly = reduce(np.polymul, squares)
    for i, w in enumerate(weights):
        others = [sq for j, sq in enumerate(squares) if j != i]
        term = reduce(np.polymul, others) if others else np.array([1.0])
        poly = np.polysub(poly, w * term)
    roots = np.roots(poly)
    real = roots[np.abs(roots.imag) <= 1e-8 * (1.0 + np.abs(roots.real))].real
    candidates = real if real.size else roots.real
    return float(np.max(candidates))


def _polish(lam, mus, weights):
    """A few Newton steps on the secular sum; keeps the best iterate."""
    best_lam, best_err = lam, abs(_secular(lam, mus, weights) - 1.0)
    current = lam
    for _ in range(8):
        denom = mus + current
        if np.any(denom <= 0):
            break
        g = float(np.sum(weights / denom**2)) - 1.0
        dg = -2.0 * float(np.sum(weights / denom**3))
        if dg == 0 or not math.isfinite(dg):
            break
        current = current - g / dg
        if not math.isfinite(current):
            break
        err = abs(_secular(current, mus, weights) - 1.0)
        if err < best_err:
            best_lam, best_err = current, err
        if err < 1e-14:
            break
    return best_lam


def solve_constrained(design, rhs):
    """Solve min ||design @ o - rhs||^2 over unit vectors o in R^3."""
    a = np.asarray(design, dtype=float)
    y = np.asarray(rhs, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3 or a.shape[0] < 3:
        raise RankDeficiencyError(f"design must be N x 3 with N >= 3, got {a.shape}")
    if y.shape != (a.shape[0],):
        raise DegenerateRhsError(f"rhs must have shape ({a.shape[0]},), got {y.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(y))):
        raise RankDeficiencyError("design and rhs must be finite")

    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[2] <= RANK_TOL * s[0]:
        raise RankDeficiencyError(
            f"design is numerically rank deficient (singular values {s!r})"
        )
    c = u.T @ y
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        raise DegenerateRhsError("rhs is zero")

    # Work in a domain scaled by the largest singular value: same minimizer,
    # multiplier scales by s0^2, and the polynomial coefficients stay O(1).
    alpha = s[0]
    mu_s = (s / alpha) ** 2
    c_s = c / alpha
    keep = np.abs(c) > DEGENERATE_RHS_TOL * y_norm
    if not np.any(keep):
        raise DegenerateRhsError(
            "rhs is numerically orthogonal to the design column space"
        )
    mu_kept = mu_s[keep]
    w_kept = mu_kept * c_s[keep] ** 2

    # Merge near-equal spectrum values (relative to mu_max = 1 after scaling).
    groups_mu, groups_w = [], []
    for mu, w in zip(mu_kept, w_kept):
        if groups_mu and abs(groups_mu[-1] - mu) <= MERGE_TOL:
            groups_w[-1] += w
        else:
            groups_mu.append(mu)
            groups_w.append(w)
    lam_s = _largest_real_root(np.array(groups_mu), np.array(groups_w))
    lam_s = _polish(lam_s, mu_kept, w_kept)

    mismatch = abs(_secular(lam_s, mu_kept, w_kept) - 1.0)
    if not mismatch <= SECULAR_TOL:
        raise EstimationError(
            f"secular equation verification failed (|sum - 1| = {mismatch:.3e})"
        )

    gains = np.zeros(3)
    gains[keep] = (s[keep] / alpha) / (mu_s[keep] + lam_s)
    o = vt.T @ (gains * c_s)
    o /= np.linalg.norm(o)
    residual = a @ o - y
    return ConstrainedLSSolution(
        orientation=o,
        multiplier=lam_s * alpha**2,
        cost=float(residual @ residual),
        spectrum=s**2,
        coefficients=c,
    )


def unscaled_design(position, topology, coupling):
    """Design rows (rho / d_n^3) b_n^T mapping orientation to amplitudes."""
    d, b = scaled_fields(position, topology)
    return coupling / d[:, None] ** 3 * b


def scaled_rhs(measurements, distances, coupling):
    """Distance-scaled measurements d_n^3 y_n / rho (dimensionless)."""
    return np.asarray(distances, dtype=float) ** 3 * np.asarray(measurements, dtype=float) / coupling


def orientation_given_position(position, measurements, topology, coupling):
    """Exact orientation step against raw amplitudes at a position hypothesis."""
    return solve_constrained(
        unscaled_design(position, topology, coupling),
        np.asarray(measurements, dtype=float),
    )


def orientation_given_position_scaled(position, measurements, topology, coupling):
    """Orientation step in the distance-scaled domain (design rows b_n^T)."""
    d, b = scaled_fields(position, topology)
    return solve_constrained(b, scaled_rhs(measurements, d, coupling))
