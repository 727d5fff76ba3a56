"""Shared fixtures: reference points used across the test modules."""

from __future__ import annotations

import pytest

from sphericalsk.mixture import MixturePolynomial
from sphericalsk.rs_solver import rs_point


@pytest.fixture(scope="session")
def pure_p2():
    return MixturePolynomial.from_pairs([(2, 1.0)])


@pytest.fixture(scope="session")
def mixed_234():
    return MixturePolynomial.from_pairs([(2, 1.0), (3, 0.5), (4, 0.25)])


@pytest.fixture(scope="session")
def headline_point(pure_p2):
    """The reference operating point beta=0.2, h=0.3 on the pure degree-2 mixture."""
    return rs_point(pure_p2, 0.2, 0.3)


@pytest.fixture(scope="session")
def mixed_point(mixed_234):
    return rs_point(mixed_234, 0.15, 0.4)
