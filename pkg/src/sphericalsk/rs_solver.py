"""Replica-symmetric fixed point and limiting free energy.

The overlap fixed point q solves

    q / (1 - q)^2 = h^2 + beta^2 * xi'(q),        0 <= q < 1,

and feeds the derived quantities r = h (1 - q) and
b = h^2 (1 - q) + beta^2 (1 - q) xi'(q), which satisfy
(b + 1)(1 - q) = 1 at the fixed point.  The limiting free energy is

    F = (1/2) [ h^2 (1 - q) + q / (1 - q) + log(1 - q)
                + beta^2 (xi(1) - xi(q)) ].

All solvers work only in the regime where the fixed-point equation has a
unique root; anything else raises RegionError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import RegionError, ValidationError
from .mixture import MixturePolynomial

GRID_POINTS = 10_000
Q_CEILING = 1.0 - 1e-9
DEFAULT_TOL = 1e-12


@dataclass(frozen=True)
class RSPoint:
    """A solved replica-symmetric fixed point."""

    mixture: MixturePolynomial
    beta: float
    h: float
    q: float
    r: float
    b: float

    def a_mean_sd(self) -> tuple[float, float]:
        """Mean and standard deviation of the effective cavity field
        a = h + beta * sqrt(xi'(q)) * Z with Z standard Gaussian."""
        return self.h, self.beta * math.sqrt(self.mixture.eval(self.q, 1))


@dataclass(frozen=True)
class HighTempDiagnostics:
    """Outcome of the validated-region check."""

    beta: float
    h: float
    sign_changes: int
    unique_root: bool
    q: Optional[float]
    m_norm1: Optional[float]
    passed: bool
    reason: str


def _check_params(beta: float, h: float) -> tuple[float, float]:
    beta = float(beta)
    h = float(h)
    if not (math.isfinite(beta) and beta >= 0.0):
        raise ValidationError(f"beta must be finite and >= 0, got {beta!r}")
    if not math.isfinite(h):
        raise ValidationError(f"h must be finite, got {h!r}")
    return beta, h


def _g(mixture: MixturePolynomial, beta: float, h: float, q) -> np.ndarray:
    """Fixed-point residual g(q) = q/(1-q)^2 - h^2 - beta^2 xi'(q)."""
    q = np.asarray(q, dtype=float)
    return q / (1.0 - q) ** 2 - h * h - beta * beta * mixture.eval(q, 1)


def _scan_roots(mixture: MixturePolynomial, beta: float, h: float):
    """Sign-scan g on a uniform grid; return (root_at_zero, brackets)."""
    grid = np.linspace(0.0, 1.0 - 1e-6, GRID_POINTS + 1)
    vals = _g(mixture, beta, h, grid)
    root_at_zero = vals[0] == 0.0
    brackets = []
    for i in range(1 if root_at_zero else 0, GRID_POINTS):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            brackets.append((grid[max(i - 1, 0)], grid[i + 1]))
        elif a * b < 0.0:
            brackets.append((grid[i], grid[i + 1]))
    return root_at_zero, brackets


def solve_q(
    mixture: MixturePolynomial,
    beta: float,
    h: float,
    tol: float = DEFAULT_TOL,
) -> float:
    """Solve the fixed-point equation for the overlap q.

    Brackets the root with a sign scan over a 10^4-point grid, bisects,
    then polishes with Newton steps.  Raises RegionError unless the scan
    finds exactly one root (a root pinned at q = 0 counts).
    """
    beta, h = _check_params(beta, h)
    root_at_zero, brackets = _scan_roots(mixture, beta, h)
    n_roots = int(root_at_zero) + len(brackets)
    if n_roots != 1:
        raise RegionError(
            f"fixed-point equation has {n_roots} candidate roots at "
            f"beta={beta}, h={h}; outside validated high-temperature region"
        )
    if root_at_zero:
        return 0.0

    lo, hi = brackets[0]
    glo = float(_g(mixture, beta, h, lo))
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        gmid = float(_g(mixture, beta, h, mid))
        if gmid == 0.0:
            lo = hi = mid
            break
        if (glo < 0.0) == (gmid < 0.0):
            lo, glo = mid, gmid
        else:
            hi = mid
    q = 0.5 * (lo + hi)

    # Newton polish; g'(q) = (1+q)/(1-q)^3 - beta^2 xi''(q)
    for _ in range(6):
        gq = float(_g(mixture, beta, h, q))
        if abs(gq) <= tol:
            break
        dg = (1.0 + q) / (1.0 - q) ** 3 - beta * beta * mixture.eval(q, 2)
        if dg == 0.0:
            break
        step = gq / dg
        q_new = q - step
        if not (lo - 1e-12 <= q_new <= hi + 1e-12):
            break
        q = q_new
    q = min(max(float(q), 0.0), Q_CEILING)
    if abs(float(_g(mixture, beta, h, q))) > max(tol, 1e-10):
        raise RegionError(
            f"fixed-point residual {float(_g(mixture, beta, h, q)):.3e} "
            f"did not reach tolerance at beta={beta}, h={h}"
        )
    return q


def rs_point(
    mixture: MixturePolynomial,
    beta: float,
    h: float,
    tol: float = DEFAULT_TOL,
) -> RSPoint:
    """Solve for q and package (beta, h, q, r, b)."""
    beta, h = _check_params(beta, h)
    q = solve_q(mixture, beta, h, tol)
    r = h * (1.0 - q)
    b = h * h * (1.0 - q) + beta * beta * (1.0 - q) * mixture.eval(q, 1)
    return RSPoint(mixture=mixture, beta=beta, h=h, q=q, r=r, b=b)


def free_energy_rs(point: RSPoint) -> float:
    """Limiting free energy at a solved fixed point."""
    q = point.q
    mix = point.mixture
    return 0.5 * (
        point.h ** 2 * (1.0 - q)
        + q / (1.0 - q)
        + math.log1p(-q)
        + point.beta ** 2 * (mix.eval(1.0) - mix.eval(q))
    )


def _free_energy_at(mixture: MixturePolynomial, beta: float, h: float, q: float) -> float:
    return 0.5 * (
        h * h * (1.0 - q)
        + q / (1.0 - q)
        + math.log1p(-q)
        + beta * beta * (mixture.eval(1.0) - mixture.eval(q))
    )


def free_energy_variational(
    mixture: MixturePolynomial,
    beta: float,
    h: float,
) -> tuple[float, float]:
    """Minimize the free-energy functional over q in [0, 1) directly.

    Independent route to the same answer as free_energy_rs(rs_point(...)):
    golden-section search plus a Newton polish on the stationarity
    condition.  Returns (free_energy, argmin_q).  Raises RegionError when
    the scan shows the stationary point is not unique.
    """
    beta, h = _check_params(beta, h)
    root_at_zero, brackets = _scan_roots(mixture, beta, h)
    if int(root_at_zero) + len(brackets) != 1:
        raise RegionError(
            f"free-energy functional has a non-unique interior stationary "
            f"point at beta={beta}, h={h}"
        )

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, Q_CEILING
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc = _free_energy_at(mixture, beta, h, c)
    fd = _free_energy_at(mixture, beta, h, d)
    for _ in range(90):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = _free_energy_at(mixture, beta, h, c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = _free_energy_at(mixture, beta, h, d)
    q = 0.5 * (lo + hi)

    if q > 1e-8:  # interior minimum: polish on the derivative (= g/2)
        for _ in range(6):
            gq = float(_g(mixture, beta, h, q))
            dg = (1.0 + q) / (1.0 - q) ** 3 - beta * beta * mixture.eval(q, 2)
            if dg <= 0.0 or abs(gq) < 1e-15:
                break
            q = min(max(q - gq / dg, 0.0), Q_CEILING)
    elif float(_g(mixture, beta, h, 0.0)) >= 0.0:
        q = 0.0
    return _free_energy_at(mixture, beta, h, q), q


def solve_q_finite_N(
    mixture: MixturePolynomial,
    beta: float,
    h: float,
    N: int,
    tol: float = DEFAULT_TOL,
) -> float:
    """Finite-size fixed point with the (N/(N-3))^2 coefficient.

    Solves q / (1-q)^2 = (N/(N-3))^2 (beta^2 xi'(q) + h^2), which is the
    same equation at rescaled couplings, so the unique-root machinery is
    shared with solve_q.
    """
    if not isinstance(N, (int, np.integer)) or N < 4:
        raise ValidationError(f"N must be an integer >= 4, got {N!r}")
    scale = N / (N - 3.0)
    return solve_q(mixture, beta * scale, abs(h) * scale, tol)


def high_temp_check(
    mixture: MixturePolynomial,
    beta: float,
    h: float,
) -> HighTempDiagnostics:
    """Grid-scan the fixed-point equation and bound the response matrix.

    Passes when the scan finds exactly one root and the 1-norm of the
    fluctuation matrix M at the solved point is below 1.
    """
    beta, h = _check_params(beta, h)
    root_at_zero, brackets = _scan_roots(mixture, beta, h)
    n_roots = int(root_at_zero) + len(brackets)
    if n_roots != 1:
        return HighTempDiagnostics(
            beta=beta, h=h, sign_changes=n_roots, unique_root=False,
            q=None, m_norm1=None, passed=False,
            reason=f"{n_roots} candidate roots in the sign scan",
        )
    point = rs_point(mixture, beta, h)

    from .fluctuation_system import assemble_M  # deferred: avoids an import cycle

    m_norm1 = float(np.linalg.norm(assemble_M(point), 1))
    passed = m_norm1 < 1.0
    return HighTempDiagnostics(
        beta=beta, h=h, sign_changes=n_roots, unique_root=True,
        q=point.q, m_norm1=m_norm1, passed=passed,
        reason="" if passed else f"matrix 1-norm {m_norm1:.6g} >= 1",
    )
