"""Leading-order moment calculus for decoupled cavity coordinates.

Under the decoupled reference measure, each replica carries a coordinate
eps_l whose conditional moments given the cavity field a are polynomials
gamma_k(a) obeying

    gamma_0 = 1,   gamma_1 = a / (b + 1),
    gamma_k = [ a * gamma_{k-1} + (k - 1) * gamma_{k-2} ] / (b + 1),

with a = h + beta * sqrt(xi'(q)) * Z for a single standard Gaussian Z
shared by all replicas.  Expectations of products over replicas therefore
reduce to Gaussian moments of a product of gamma polynomials in the one
variable a.  Everything in this module is exact polynomial algebra plus
closed-form Gaussian moments; no quadrature is involved.
"""

from __future__ import annotations

import math
from typing import Dict, Iterable, Sequence, Tuple

import numpy as np

from .errors import EngineConsistencyError, ValidationError
from .rs_solver import RSPoint

MAX_GAMMA_ORDER = 8
MAX_GAUSSIAN_ORDER = 16
MAX_REPLICAS = 4
MAX_TOTAL_DEGREE = 8

CONSISTENCY_TOL = 1e-12


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def gaussian_moment(m: int, mean: float, sd: float) -> float:
    """E[(mean + sd * Z)^m] for standard Gaussian Z, exactly.

    Binomial expansion with E[Z^j] = (j - 1)!! for even j, 0 for odd j.
    """
    if not isinstance(m, (int, np.integer)) or m < 0 or m > MAX_GAUSSIAN_ORDER:
        raise ValidationError(f"moment order must be an integer in [0, {MAX_GAUSSIAN_ORDER}]")
    sd = float(sd)
    mean = float(mean)
    if not (math.isfinite(sd) and sd >= 0.0 and math.isfinite(mean)):
        raise ValidationError(f"need finite mean and sd >= 0, got mean={mean!r} sd={sd!r}")
    total = 0.0
    for j in range(0, m + 1, 2):
        total += math.comb(m, j) * _double_factorial(j - 1) * mean ** (m - j) * sd ** j
    return total


def gamma_poly(k: int, b: float) -> np.ndarray:
    """Coefficients (ascending in a) of the k-th conditional moment polynomial."""
    if not isinstance(k, (int, np.integer)) or k < 0 or k > MAX_GAMMA_ORDER:
        raise ValidationError(f"gamma order must be an integer in [0, {MAX_GAMMA_ORDER}]")
    b = float(b)
    if not math.isfinite(b) or b <= -1.0:
        raise ValidationError(f"b must be finite and > -1, got {b!r}")
    prev = np.array([1.0])
    if k == 0:
        return prev
    cur = np.array([0.0, 1.0 / (b + 1.0)])
    for order in range(2, k + 1):
        lifted = np.concatenate(([0.0], cur)) / (b + 1.0)
        lifted[: len(prev)] += (order - 1) / (b + 1.0) * prev
        prev, cur = cur, lifted
    return cur


def _expect_poly(coeffs: np.ndarray, mean: float, sd: float) -> float:
    return sum(c * gaussian_moment(m, mean, sd) for m, c in enumerate(coeffs) if c != 0.0)


def nu0_monomial(exponents: Sequence[int], point: RSPoint) -> float:
    """Limiting decoupled expectation of prod_l eps_l^{k_l}.

    ``exponents`` lists the powers k_l per replica (at most 4 replicas,
    total degree at most 8).  The value is invariant under permuting the
    exponents.
    """
    exps = tuple(int(k) for k in exponents)
    if len(exps) > MAX_REPLICAS:
        raise ValidationError(f"at most {MAX_REPLICAS} replicas, got {len(exps)}")
    if any(k < 0 for k in exps) or sum(exps) > MAX_TOTAL_DEGREE:
        raise ValidationError(f"exponents {exps} must be >= 0 with total degree <= {MAX_TOTAL_DEGREE}")
    poly = np.array([1.0])
    for k in exps:
        if k:
            poly = np.convolve(poly, gamma_poly(k, point.b))
    mean, sd = point.a_mean_sd()
    return _expect_poly(poly, mean, sd)


def compute_WU(point: RSPoint) -> tuple[float, float]:
    """Third and fourth scaled field moments W and U, closed form.

        W = (1-q)^3 (3 beta^2 xi'(q) h + h^3)
        U = (1-q)^4 (h^4 + 6 beta^2 h^2 xi'(q) + 3 beta^4 xi'(q)^2)

    Cross-checked against the engine values nu0(eps1 eps2 eps3) and
    nu0(eps1 eps2 eps3 eps4); disagreement raises EngineConsistencyError.
    """
    q, h, beta = point.q, point.h, point.beta
    xi1 = point.mixture.eval(q, 1)
    w_closed = (1.0 - q) ** 3 * (3.0 * beta ** 2 * xi1 * h + h ** 3)
    u_closed = (1.0 - q) ** 4 * (
        h ** 4 + 6.0 * beta ** 2 * h ** 2 * xi1 + 3.0 * beta ** 4 * xi1 ** 2
    )
    w_engine = nu0_monomial((1, 1, 1), point)
    u_engine = nu0_monomial((1, 1, 1, 1), point)
    for name, closed, engine in (("W", w_closed, w_engine), ("U", u_closed, u_engine)):
        if abs(closed - engine) > CONSISTENCY_TOL * max(1.0, abs(closed)):
            raise EngineConsistencyError(
                f"{name}: closed form {closed!r} vs engine {engine!r}"
            )
    return w_closed, u_closed


RELATION_EXPONENTS: Dict[str, tuple] = {
    "e1": (1,),
    "e1^2": (2,),
    "e1*e2": (1, 1),
    "e1^3": (3,),
    "e1*e2^2": (1, 2),
    "e1*e2*e3": (1, 1, 1),
    "e1^2*e2^2": (2, 2),
    "e1*e2*e3^2": (1, 1, 2),
    "e1*e2^3": (1, 3),
    "e1*e2*e3*e4": (1, 1, 1, 1),
}


def relations_table(point: RSPoint) -> Dict[str, float]:
    """The ten low-order decoupled moments, computed twice.

    Each entry is evaluated both from its closed form in (q, r, h, W, U)
    and through the gamma/Gaussian engine; a mismatch beyond 1e-12 raises
    EngineConsistencyError since it can only come from a bug.
    """
    q, r, h = point.q, point.r, point.h
    w_val, u_val = compute_WU(point)
    one_minus_q_sq = (1.0 - q) ** 2
    closed = {
        "e1": r,
        "e1^2": 1.0,
        "e1*e2": q,
        "e1^3": w_val + 3.0 * h * one_minus_q_sq,
        "e1*e2^2": w_val + h * one_minus_q_sq,
        "e1*e2*e3": w_val,
        "e1^2*e2^2": u_val + 1.0 - q * q,
        "e1*e2*e3^2": u_val + q - q * q,
        "e1*e2^3": u_val + 3.0 * q - 3.0 * q * q,
        "e1*e2*e3*e4": u_val,
    }
    for name, exps in RELATION_EXPONENTS.items():
        engine = nu0_monomial(exps, point)
        if abs(engine - closed[name]) > CONSISTENCY_TOL * max(1.0, abs(closed[name])):
            raise EngineConsistencyError(
                f"moment {name}: closed form {closed[name]!r} vs engine {engine!r}"
            )
    return closed


class EpsPolynomial:
    """Polynomial in the four replica coordinates eps_1..eps_4.

    Backed by a dict mapping exponent 4-tuples to coefficients.  Supports
    +, -, * (with scalars or polynomials) and small integer powers; just
    enough algebra to expand observable definitions into monomials.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Dict[Tuple[int, int, int, int], float] | None = None):
        self.coeffs = {k: float(v) for k, v in (coeffs or {}).items() if v != 0.0}

    @classmethod
    def constant(cls, value: float) -> "EpsPolynomial":
        return cls({(0, 0, 0, 0): float(value)})

    @classmethod
    def variable(cls, replica: int) -> "EpsPolynomial":
        if replica not in (1, 2, 3, 4):
            raise ValidationError(f"replica index must be 1..4, got {replica!r}")
        key = [0, 0, 0, 0]
        key[replica - 1] = 1
        return cls({tuple(key): 1.0})

    @staticmethod
    def _as_poly(other) -> "EpsPolynomial":
        if isinstance(other, EpsPolynomial):
            return other
        return EpsPolynomial.constant(other)

    def __add__(self, other) -> "EpsPolynomial":
        other = self._as_poly(other)
        out = dict(self.coeffs)
        for key, val in other.coeffs.items():
            out[key] = out.get(key, 0.0) + val
        return EpsPolynomial(out)

    __radd__ = __add__

    def __neg__(self) -> "EpsPolynomial":
        return EpsPolynomial({k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other) -> "EpsPolynomial":
        return self + (-self._as_poly(other))

    def __rsub__(self, other) -> "EpsPolynomial":
        return self._as_poly(other) + (-self)

    def __mul__(self, other) -> "EpsPolynomial":
        if not isinstance(other, EpsPolynomial):
            return EpsPolynomial({k: v * float(other) for k, v in self.coeffs.items()})
        out: Dict[Tuple[int, int, int, int], float] = {}
        for ka, va in self.coeffs.items():
            for kb, vb in other.coeffs.items():
                key = (ka[0] + kb[0], ka[1] + kb[1], ka[2] + kb[2], ka[3] + kb[3])
                out[key] = out.get(key, 0.0) + va * vb
        return EpsPolynomial(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "EpsPolynomial":
        if not isinstance(n, int) or n < 0:
            raise ValidationError(f"power must be a nonnegative integer, got {n!r}")
        out = EpsPolynomial.constant(1.0)
        for _ in range(n):
            out = out * self
        return out

    def terms(self) -> Iterable[tuple[Tuple[int, int, int, int], float]]:
        return sorted(self.coeffs.items())

    def total_degree(self) -> int:
        return max((sum(k) for k in self.coeffs), default=0)


def nu0_polynomial(poly: EpsPolynomial, point: RSPoint) -> float:
    """Limiting decoupled expectation of a polynomial in eps_1..eps_4."""
    if poly.total_degree() > MAX_TOTAL_DEGREE:
        raise ValidationError(
            f"total degree {poly.total_degree()} exceeds cap {MAX_TOTAL_DEGREE}"
        )
    return sum(c * nu0_monomial(exps, point) for exps, c in poly.terms())


def _surface_factor(replica: int) -> EpsPolynomial:
    """1 - eps_l^2, the single-replica surface correction weight."""
    var = EpsPolynomial.variable(replica)
    return 1.0 - var * var


def _coupling_factor(point: RSPoint, l: int, m: int) -> EpsPolynomial:
    """Pairwise coupling weight for replicas l != m:

        [ xi'(q) - (eps_l^2 + eps_m^2)(q xi''(q) + xi'(q)) / 2
          + eps_l eps_m xi''(q) ] / 2
    """
    q = point.q
    xi1 = point.mixture.eval(q, 1)
    xi2 = point.mixture.eval(q, 2)
    el = EpsPolynomial.variable(l)
    em = EpsPolynomial.variable(m)
    return (xi1 - (el * el + em * em) * ((q * xi2 + xi1) / 2.0) + el * em * xi2) * 0.5


def compute_Y(point: RSPoint) -> np.ndarray:
    """The nine coupling coefficients entering the fluctuation matrix.

    Each is nu0 of a coupling or surface factor times a centered monomial;
    the products are expanded symbolically and evaluated monomial by
    monomial, so no hand-derived closed forms enter here.
    """
    e1 = EpsPolynomial.variable(1)
    e2 = EpsPolynomial.variable(2)
    overlap_centered = e1 * e2 - point.q
    magnet_centered = e1 - point.r
    defs = [
        _coupling_factor(point, 1, 2) * overlap_centered,
        _coupling_factor(point, 1, 3) * overlap_centered,
        _coupling_factor(point, 3, 4) * overlap_centered,
        _surface_factor(1) * overlap_centered,
        _surface_factor(3) * overlap_centered,
        _coupling_factor(point, 1, 2) * magnet_centered,
        _coupling_factor(point, 2, 3) * magnet_centered,
        _surface_factor(1) * magnet_centered,
        _surface_factor(2) * magnet_centered,
    ]
    return np.array([nu0_polynomial(d, point) for d in defs])


def compute_v(point: RSPoint) -> np.ndarray:
    """Source vector of the seven-observable fluctuation system.

    Closed forms in (q, r, W, U).  The first entry is re-derived through
    the expansion chain nu0(e1^2 e2^2) - q nu0(e1 e2) - q nu0(e1^3 e2)
    + q^2 nu0(e1^2) as a guard against drift between the two routes.
    """
    q, r = point.q, point.r
    w_val, u_val = compute_WU(point)
    v = np.array([
        (1.0 - q) * u_val + 1.0 - 4.0 * q ** 2 + 3.0 * q ** 3,
        (1.0 - q) * u_val + q * (1.0 - q) * (1.0 - 2.0 * q),
        (1.0 - q) * u_val - q * q * (1.0 - q),
        w_val - 0.5 * r * u_val + 0.5 * r * (2.0 - 6.0 * q + 3.0 * q * q),
        w_val - 0.5 * r * u_val + 0.5 * r * (-2.0 * q + q * q),
        -0.5 * r * w_val + 1.0 + 0.5 * r * r * (-4.0 + 3.0 * q),
        -0.5 * r * w_val + q + 0.5 * r * r * (-2.0 + q),
    ])
    v1_chain = (
        nu0_monomial((2, 2), point)
        - q * nu0_monomial((1, 1), point)
        - q * nu0_monomial((3, 1), point)
        + q * q * nu0_monomial((2,), point)
    )
    if abs(v1_chain - v[0]) > CONSISTENCY_TOL * max(1.0, abs(v[0])):
        raise EngineConsistencyError(
            f"v[0]: closed form {v[0]!r} vs expansion chain {v1_chain!r}"
        )
    if not np.all(np.isfinite(v)):
        raise EngineConsistencyError(f"non-finite source vector {v!r}")
    return v
