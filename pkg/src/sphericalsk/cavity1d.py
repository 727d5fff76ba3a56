"""One-dimensional quadrature for the cavity coordinate.

At size N the single-coordinate reference density on [-sqrt(N), sqrt(N)]
is proportional to

    (1 - eps^2 / N)^((N-3)/2) * exp(a*eps - b*eps^2 / 2),

where a collects the cavity field and b the quadratic reaction term.  The
module computes its normalization Z1, the moments S_k = <eps^k>, the
residual of the three-term moment recursion

    S_k = [a S_{k-1} + (k-1) S_{k-2}] / (b + 1) + r_k,

and saddle-point helpers for the upper envelope.  S_k converges to the
polynomial moment gamma_k(a) with an O(1/N) error, which makes these
quadratures the finite-N oracle for the algebraic moment engine: the
Gauss-Hermite average of S-products over the field distribution must
approach nu0 of the matching monomial at first order in 1/N.

All integrands are evaluated in log space and shifted by their maximum
before exponentiation, so large N and large fields stay in range.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from .errors import EngineConsistencyError, NumericsError, ValidationError
from .rs_solver import RSPoint

MIN_SIZE = 5
MAX_MOMENT = 12
DEFAULT_HERMITE_ORDER = 40
QUAD_REL_TOL = 1e-12


@dataclass(frozen=True)
class CavityParams:
    """Size and field parameters of the one-dimensional density."""

    N: int
    a: float
    b: float

    def __post_init__(self) -> None:
        if not isinstance(self.N, (int, np.integer)) or self.N < MIN_SIZE:
            raise ValidationError(f"N must be an integer >= {MIN_SIZE}, got {self.N!r}")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValidationError("a and b must be finite")
        if self.b <= -1.0:
            raise ValidationError(f"b must be > -1, got {self.b!r}")


def _log_density(eps: np.ndarray, params: CavityParams) -> np.ndarray:
    n = params.N
    return (
        0.5 * (n - 3) * np.log1p(-np.square(eps) / n)
        + params.a * eps
        - 0.5 * params.b * np.square(eps)
    )


def _mode_and_shift(params: CavityParams) -> tuple[float, float]:
    """Locate the density maximum on a grid; used only to scale integrands."""
    half = math.sqrt(params.N)
    grid = np.linspace(-half * (1 - 1e-12), half * (1 - 1e-12), 4001)
    logs = _log_density(grid, params)
    i = int(np.argmax(logs))
    return float(grid[i]), float(logs[i])


def _quad(func, params: CavityParams, mode: float) -> float:
    half = math.sqrt(params.N)
    inner = [x for x in (mode - 20.0, mode, mode + 20.0) if -half < x < half]
    with warnings.catch_warnings():
        # the roundoff warning is redundant: the error estimate is checked below
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, abserr = integrate.quad(
            func, -half, half, points=inner, epsabs=0.0, epsrel=QUAD_REL_TOL, limit=500,
        )
    if not math.isfinite(val):
        raise NumericsError(f"quadrature diverged at {params}")
    if abserr > max(1e-11 * abs(val), 1e-12):
        raise NumericsError(f"quadrature error {abserr:.2e} too large for value {val:.6e}")
    return val


def log_z1(params: CavityParams) -> float:
    """log of the normalization integral Z1."""
    mode, shift = _mode_and_shift(params)
    val = _quad(lambda e: math.exp(float(_log_density(e, params)) - shift), params, mode)
    return math.log(val) + shift


def z1(params: CavityParams) -> float:
    """Normalization integral Z1; overflows only for extreme parameters,
    in which case log_z1 is the right interface."""
    return math.exp(log_z1(params))


@lru_cache(maxsize=100_000)
def _s_moment_cached(n: int, a: float, b: float, k: int) -> float:
    params = CavityParams(n, a, b)
    mode, shift = _mode_and_shift(params)
    base = _quad(lambda e: math.exp(float(_log_density(e, params)) - shift), params, mode)
    if k == 0:
        return 1.0
    num = _quad(
        lambda e: e ** k * math.exp(float(_log_density(e, params)) - shift), params, mode
    )
    return num / base


def s_moment(params: CavityParams, k: int) -> float:
    """k-th moment of the density, 0 <= k <= 12."""
    if not isinstance(k, (int, np.integer)) or k < 0 or k > MAX_MOMENT:
        raise ValidationError(f"moment order must be an integer in [0, {MAX_MOMENT}]")
    return _s_moment_cached(params.N, params.a, params.b, int(k))


def recursion_residual(params: CavityParams, k: int) -> float:
    """Defect of the three-term recursion at order k (k >= 2),

        r_k = S_k - [a S_{k-1} + (k-1) S_{k-2}] / (b + 1),

    computed from the quadrature moments themselves."""
    if k < 2:
        raise ValidationError("the recursion starts at k = 2")
    s_k = s_moment(params, k)
    s_km1 = s_moment(params, k - 1)
    s_km2 = s_moment(params, k - 2)
    return s_k - (params.a * s_km1 + (k - 1) * s_km2) / (params.b + 1.0)


def recursion_residual_direct(params: CavityParams, k: int) -> float:
    """The same defect from its integral representation,

        r_k = < eps^k (3 - eps^2) / (1 - eps^2/N) > / (N (b + 1)),

    integrated directly against the density.  Independent route: no
    moment differences are formed."""
    if k < 2:
        raise ValidationError("the recursion starts at k = 2")
    n = params.N
    mode, shift = _mode_and_shift(params)
    base = _quad(lambda e: math.exp(float(_log_density(e, params)) - shift), params, mode)
    num = _quad(
        lambda e: e ** k * (3.0 - e * e) / (1.0 - e * e / n)
        * math.exp(float(_log_density(e, params)) - shift),
        params,
        mode,
    )
    return num / base / (n * (params.b + 1.0))


def hermite_nodes(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights turning sum(w * f(z)) into E[f(Z)], Z standard."""
    if order < 20:
        raise ValidationError(f"Hermite order must be >= 20, got {order}")
    x, w = np.polynomial.hermite.hermgauss(order)
    return x * math.sqrt(2.0), w / math.sqrt(math.pi)


def nu0_monomial_quadrature(
    exponents: Sequence[int],
    point: RSPoint,
    N: int,
    order: int = DEFAULT_HERMITE_ORDER,
) -> float:
    """Finite-N quadrature value of the decoupled moment nu0.

    Replicas share one field draw, so the estimate is the Gauss-Hermite
    average over the field of the product of per-replica moments:

        E_Z [ prod_l S_{k_l}( a(Z) ) ],   a(Z) = h + beta sqrt(xi'(q)) Z.
    """
    exps = tuple(int(k) for k in exponents)
    if any(k < 0 or k > MAX_MOMENT for k in exps):
        raise ValidationError(f"exponents {exps} outside [0, {MAX_MOMENT}]")
    mean, sd = point.a_mean_sd()
    nodes, weights = hermite_nodes(order)
    total = 0.0
    for zval, wgt in zip(nodes, weights):
        field = mean + sd * float(zval)
        prod = 1.0
        for k in exps:
            if k:
                prod *= _s_moment_cached(int(N), field, point.b, k)
        total += wgt * prod
    return total


def richardson_limit(sizes: Sequence[int], values: Sequence[float]) -> float:
    """Polynomial extrapolation of values(N) to N = infinity in powers of 1/N."""
    ts = [1.0 / float(n) for n in sizes]
    if len(set(ts)) != len(ts):
        raise ValidationError("sizes must be distinct")
    total = 0.0
    for i, vi in enumerate(values):
        weight = 1.0
        for j, tj in enumerate(ts):
            if j != i:
                weight *= tj / (tj - ts[i])
        total += weight * vi
    return total


def phi(x: float, c: float, N: int) -> float:
    """Upper-envelope exponent phi(x) = c x + ((N-3)/(2N)) log(1 - x^2)."""
    if abs(x) >= 1.0:
        raise ValidationError(f"|x| < 1 required, got {x!r}")
    return c * x + (N - 3) / (2.0 * N) * math.log1p(-x * x)


def phi_max_numeric(c: float, N: int) -> tuple[float, float]:
    """Argmax and maximum of phi by root-finding on its derivative.

    phi'(x) = c - ((N-3)/N) x / (1-x^2) decreases from +inf to -inf on
    (-1, 1), so the bracket is the whole interval.
    """
    kappa = (N - 3) / float(N)

    def deriv(x: float) -> float:
        return c - kappa * x / (1.0 - x * x)

    edge = 1.0 - 1e-14
    if c == 0.0:
        x0 = 0.0
    else:
        x0 = float(optimize.brentq(deriv, -edge, edge, xtol=4e-16, rtol=8.9e-16))
    return x0, phi(x0, c, N)


def x0_closed_form(c_n: float) -> tuple[float, float]:
    """Closed-form argmax for the scaled slope c_N = c N/(N-3).

    Returns (x0, x0^2) with x0 = 2 c_N / (1 + sqrt(1 + 4 c_N^2)).  The
    square is also evaluated through 1 - 2/(1 + sqrt(1 + 4 c_N^2)); the
    two routes are asserted to agree.
    """
    root = math.sqrt(1.0 + 4.0 * c_n * c_n)
    x0 = 2.0 * c_n / (1.0 + root)
    direct = x0 * x0
    identity = 1.0 - 2.0 / (1.0 + root)
    if abs(direct - identity) > 1e-14 * (1.0 + abs(direct)):
        raise EngineConsistencyError(
            f"x0^2 routes disagree: {direct!r} vs {identity!r}"
        )
    return x0, direct


def field_free_energy(h: float, N: int) -> float:
    """Exact size-N free energy of the field-only model (no coupling).

    Rotating onto the field direction reduces the sphere average to the
    one-dimensional density with a = h sqrt(N), b = 0:

        F_N = (1/N) [ log a_N + log Z1 ],
        a_N = Gamma(N/2) / ( Gamma((N-1)/2) sqrt(pi N) ).
    """
    if not isinstance(N, (int, np.integer)) or N < MIN_SIZE:
        raise ValidationError(f"N must be an integer >= {MIN_SIZE}, got {N!r}")
    log_a_n = math.lgamma(N / 2.0) - math.lgamma((N - 1) / 2.0) - 0.5 * math.log(math.pi * N)
    return (log_a_n + log_z1(CavityParams(int(N), h * math.sqrt(N), 0.0))) / N
