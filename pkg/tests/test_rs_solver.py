"""Tests for the replica-symmetric fixed-point solver.

Frozen reference values were computed with an independent 40-digit
bisection (mpmath) of the fixed-point equation and direct evaluation of
the free-energy expression; they are exact to well below the asserted
tolerances.
"""

from __future__ import annotations

import numpy as np
import pytest

from sphericalsk import RegionError, ValidationError
from sphericalsk.mixture import MixturePolynomial
from sphericalsk.rs_solver import (
    free_energy_rs,
    free_energy_variational,
    high_temp_check,
    rs_point,
    solve_q,
    solve_q_finite_N,
)

Q_HEADLINE = 0.08143543952394208
R_HEADLINE = 0.27556936814281737
B_HEADLINE = 0.08865510713992397
F_HEADLINE = 0.06305878029270827

Q_FIELD_ONLY = 0.07672011683855503
F_FIELD_ONLY = 0.04318376027590176

Q_MIXED = 0.12679675411385126
F_MIXED = 0.09416160258891007


def random_valid_points(n, seed=0):
    """Draw (mixture, beta, h) in the small-coupling box, keeping only
    parameter sets the solver accepts."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        degrees = rng.choice([2, 3, 4], size=rng.integers(1, 4), replace=False)
        weights = rng.uniform(0.1, 1.0, size=len(degrees))
        mix = MixturePolynomial.from_pairs(zip(degrees.tolist(), weights.tolist()))
        beta = float(rng.uniform(0.0, 0.3))
        h = float(rng.uniform(0.0, 0.5))
        try:
            out.append(rs_point(mix, beta, h))
        except RegionError:
            continue
    return out


def test_headline_point_frozen_values(pure_p2):
    point = rs_point(pure_p2, 0.2, 0.3)
    assert point.q == pytest.approx(Q_HEADLINE, abs=2e-12)
    assert point.r == pytest.approx(R_HEADLINE, abs=2e-12)
    assert point.b == pytest.approx(B_HEADLINE, abs=2e-12)
    assert free_energy_rs(point) == pytest.approx(F_HEADLINE, abs=2e-12)


def test_field_only_point_frozen_values(pure_p2):
    point = rs_point(pure_p2, 0.0, 0.3)
    assert point.q == pytest.approx(Q_FIELD_ONLY, abs=2e-12)
    assert free_energy_rs(point) == pytest.approx(F_FIELD_ONLY, abs=2e-12)


def test_mixed_point_frozen_values(mixed_234):
    point = rs_point(mixed_234, 0.15, 0.4)
    assert point.q == pytest.approx(Q_MIXED, abs=2e-12)
    assert free_energy_rs(point) == pytest.approx(F_MIXED, abs=2e-12)


def test_fixed_point_identities_hold_at_random_points():
    for point in random_valid_points(40, seed=3):
        assert 0.0 <= point.q < 1.0
        assert point.r == point.h * (1.0 - point.q)
        assert abs((point.b + 1.0) * (1.0 - point.q) - 1.0) <= 1e-12
        residual = point.q / (1.0 - point.q) ** 2 - point.h ** 2 \
            - point.beta ** 2 * point.mixture.eval(point.q, 1)
        assert abs(residual) <= 1e-12


def test_q_zero_iff_h_zero_without_linear_term(pure_p2):
    assert solve_q(pure_p2, 0.2, 0.0) == 0.0
    assert solve_q(pure_p2, 0.0, 0.0) == 0.0
    assert solve_q(pure_p2, 0.2, 1e-3) > 0.0
    # a degree-1 term acts like a field, so q > 0 even at h = 0
    with_linear = MixturePolynomial.from_pairs([(1, 0.5), (2, 1.0)])
    assert solve_q(with_linear, 0.2, 0.0) > 0.0


def test_region_error_at_low_temperature(pure_p2):
    with pytest.raises(RegionError):
        solve_q(pure_p2, 10.0, 0.0)
    with pytest.raises(RegionError):
        solve_q(pure_p2, 2.0, 0.0)
    with pytest.raises(RegionError):
        free_energy_variational(pure_p2, 10.0, 0.0)


def test_variational_route_agrees_with_fixed_point():
    for point in random_valid_points(25, seed=11):
        f_var, q_var = free_energy_variational(point.mixture, point.beta, point.h)
        assert q_var == pytest.approx(point.q, abs=1e-8)
        assert f_var == pytest.approx(free_energy_rs(point), abs=1e-10)


def test_variational_boundary_minimum_at_zero(pure_p2):
    f_var, q_var = free_energy_variational(pure_p2, 0.2, 0.0)
    assert q_var == 0.0
    assert f_var == pytest.approx(0.5 * 0.2 ** 2, abs=1e-12)


def test_finite_size_overlap_approaches_limit(pure_p2):
    q_inf = solve_q(pure_p2, 0.2, 0.3)
    gaps = []
    for n in (1000, 10_000, 100_000):
        q_n = solve_q_finite_N(pure_p2, 0.2, 0.3, n)
        assert q_n > q_inf  # the (N/(N-3))^2 factor inflates the coupling
        gaps.append(q_n - q_inf)
    # first-order decay: tenfold N shrinks the gap tenfold, within 25%
    assert gaps[0] / gaps[1] == pytest.approx(10.0, rel=0.25)
    assert gaps[1] / gaps[2] == pytest.approx(10.0, rel=0.25)


def test_high_temp_check_diagnostics(pure_p2):
    diag = high_temp_check(pure_p2, 0.2, 0.3)
    assert diag.passed
    assert diag.unique_root
    assert diag.sign_changes == 1
    assert diag.q == pytest.approx(Q_HEADLINE, abs=2e-12)
    assert diag.m_norm1 == pytest.approx(0.2167416, abs=1e-6)

    cold = high_temp_check(pure_p2, 10.0, 0.0)
    assert not cold.passed
    assert not cold.unique_root
    assert cold.q is None
    assert "roots" in cold.reason


def test_parameter_validation(pure_p2):
    with pytest.raises(ValidationError):
        solve_q(pure_p2, -0.1, 0.3)
    with pytest.raises(ValidationError):
        solve_q(pure_p2, float("nan"), 0.3)
    with pytest.raises(ValidationError):
        solve_q_finite_N(pure_p2, 0.2, 0.3, 3)
