"""Tests for mixture polynomial evaluation and parsing."""

from __future__ import annotations

import numpy as np
import pytest

from sphericalsk import MixtureError, MixturePolynomial


def centered_difference(mix, x, order, step=1e-5):
    """Central-difference oracle: differentiate the (order-1) derivative."""
    hi = mix.eval(x + step, order - 1)
    lo = mix.eval(x - step, order - 1)
    return (hi - lo) / (2.0 * step)


def test_eval_matches_finite_differences():
    mix = MixturePolynomial.from_pairs([(2, 1.0), (3, 0.5), (5, 0.25)])
    rng = np.random.default_rng(7)
    for x in rng.uniform(-0.95, 0.95, size=25):
        for order in (1, 2, 3):
            exact = mix.eval(float(x), order)
            approx = centered_difference(mix, float(x), order)
            assert abs(exact - approx) <= 1e-6 * (1.0 + abs(exact))


def test_eval_frozen_values():
    mix = MixturePolynomial.from_pairs([(2, 1.0), (3, 0.5)])
    assert mix.eval(1.0, 1) == pytest.approx(3.5, abs=1e-15)
    assert mix.eval(0.5) == pytest.approx(0.25 + 0.5 * 0.125, abs=1e-15)
    pure3 = MixturePolynomial.from_pairs([(3, 1.0)])
    assert pure3.theta(0.5) == pytest.approx(0.25, abs=1e-15)


def test_xi_zero_is_zero_and_theta_nonnegative_on_unit_interval():
    rng = np.random.default_rng(11)
    for _ in range(50):
        degrees = rng.choice(np.arange(1, 9), size=rng.integers(1, 4), replace=False)
        weights = rng.uniform(0.01, 2.0, size=len(degrees))
        mix = MixturePolynomial.from_pairs(zip(degrees.tolist(), weights.tolist()))
        assert mix.eval(0.0) == 0.0
        xs = rng.uniform(0.0, 1.0, size=20)
        assert np.all(mix.theta(xs) >= -1e-15)


def test_derivative_order_and_domain_errors():
    mix = MixturePolynomial.from_pairs([(2, 1.0)])
    with pytest.raises(MixtureError):
        mix.eval(0.5, 4)
    with pytest.raises(MixtureError):
        mix.eval(0.5, -1)
    with pytest.raises(MixtureError):
        mix.eval(1.5)
    with pytest.raises(MixtureError):
        mix.eval(np.array([0.2, -1.01]))
    # rounding slack: barely outside the interval is clipped, not rejected
    assert mix.eval(1.0 + 1e-13) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "pairs",
    [
        [(2, 1.0), (2, 0.5)],
        [(0, 1.0)],
        [(9, 1.0)],
        [(2, -0.1)],
        [(2, 0.0), (3, 0.0)],
        [(2.5, 1.0)],
    ],
)
def test_validation_rejects_bad_terms(pairs):
    with pytest.raises(MixtureError):
        MixturePolynomial.from_pairs(pairs)


def test_string_and_json_round_trip():
    mix = MixturePolynomial.from_string("p2:1.0,p3:0.25")
    assert mix.terms == ((2, 1.0), (3, 0.25))
    again = MixturePolynomial.from_string(str(mix))
    assert again == mix

    obj = mix.to_json_obj()
    assert obj == {"mixture": [{"p": 2, "w": 1.0}, {"p": 3, "w": 0.25}]}
    assert MixturePolynomial.from_json_obj(obj) == mix

    with pytest.raises(MixtureError):
        MixturePolynomial.from_string("q2:1.0")
    with pytest.raises(MixtureError):
        MixturePolynomial.from_string("p2:abc")


def test_immutable_and_hashable():
    mix = MixturePolynomial.from_pairs([(2, 1.0)])
    with pytest.raises(AttributeError):
        mix.terms = ((3, 1.0),)  # type: ignore[misc]
    assert {mix: "ok"}[MixturePolynomial.from_pairs([(2, 1.0)])] == "ok"


def test_terms_sorted_by_degree():
    mix = MixturePolynomial.from_pairs([(4, 0.5), (2, 1.0)])
    assert mix.degrees == (2, 4)
    assert mix.max_degree == 4
    assert mix.weight(2) == 1.0
    assert mix.weight(3) == 0.0


def test_vectorized_eval_matches_scalar():
    mix = MixturePolynomial.from_pairs([(2, 1.0), (4, 0.3)])
    xs = np.linspace(-1.0, 1.0, 21)
    vec = mix.eval(xs, 1)
    for x, v in zip(xs, vec):
        assert v == mix.eval(float(x), 1)
