"""Linear system for the N-scaled limits of overlap and magnetization
covariances.

The seven observables are, with q and r the fixed-point overlap and
magnetization,

    f1 = (R_{1,2} - q)^2          f5 = (R_{1,2} - q)(R_3 - r)
    f2 = (R_{1,2} - q)(R_{1,3} - q)   f6 = (R_1 - r)^2
    f3 = (R_{1,2} - q)(R_{3,4} - q)   f7 = (R_1 - r)(R_2 - r)
    f4 = (R_{1,2} - q)(R_1 - r)

Their size-N expectations v_N satisfy (I - M) v_N = v / N up to o(1/N),
so the vector of limits of N * v_N is (I - M)^{-1} v.  M is filled from
the nine coupling coefficients of compute_Y in two dense blocks: rows
1..3 couple only to columns 1..5 and rows 4..7 only to columns 4..7; the
remaining blocks are exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NumericsError, RegionError
from .moment_engine import compute_Y, compute_v
from .rs_solver import RSPoint

OBSERVABLE_NAMES = (
    "N_var_R12",
    "N_cov_R12_R13",
    "N_cov_R12_R34",
    "N_cov_R12_R1",
    "N_cov_R12_R3",
    "N_var_R1",
    "N_cov_R1_R2",
)

RESIDUAL_TOL = 1e-10
CONDITION_CAP = 1e6


def assemble_M(point: RSPoint, couplings: np.ndarray | None = None) -> np.ndarray:
    """Fill the 7x7 response matrix from the coupling coefficients."""
    y = compute_Y(point) if couplings is None else np.asarray(couplings, dtype=float)
    if y.shape != (9,):
        raise ValueError(f"expected 9 coupling coefficients, got shape {y.shape}")
    y1, y2, y3, y4, y5, y6, y7, y8, y9 = y
    b2 = point.beta ** 2
    h = point.h
    m = np.zeros((7, 7))
    m[0, :5] = [2 * b2 * y1, -8 * b2 * y2, 6 * b2 * y3, h * y4, -h * y5]
    m[1, :5] = [
        2 * b2 * y2,
        2 * b2 * (y1 - 2 * y2 - 3 * y3),
        6 * b2 * (-y2 + 2 * y3),
        h / 2 * (y4 + y5),
        h / 2 * (y4 - 3 * y5),
    ]
    m[2, :5] = [
        2 * b2 * y3,
        8 * b2 * (y2 - 2 * y3),
        2 * b2 * (y1 - 8 * y2 + 10 * y3),
        h * y5,
        h * (y4 - 2 * y5),
    ]
    m[3, 3:] = [2 * b2 * (y1 - 2 * y2), 2 * b2 * (-2 * y2 + 3 * y3), h / 2 * y4, h / 2 * (y4 - 2 * y5)]
    m[4, 3:] = [2 * b2 * (2 * y2 - 3 * y4), 2 * b2 * (y1 - 6 * y2 + 6 * y3), h / 2 * y5, h / 2 * (2 * y4 - 3 * y5)]
    m[5, 3:] = [-2 * b2 * y6, 2 * b2 * y7, h / 2 * y8, -h / 2 * y9]
    m[6, 3:] = [2 * b2 * (y6 - 2 * y7), 2 * b2 * (-2 * y6 + 3 * y7), h / 2 * y9, h / 2 * (y8 - 2 * y9)]
    return m


def neumann_limits(m: np.ndarray, v: np.ndarray, terms: int = 40) -> np.ndarray:
    """Partial Neumann sum sum_{k<=terms} M^k v; a cross-check for the
    direct solve when the 1-norm of M is small."""
    acc = np.array(v, dtype=float)
    power = np.array(v, dtype=float)
    for _ in range(terms):
        power = m @ power
        acc += power
    return acc


@dataclass(frozen=True)
class FluctuationReport:
    """Solved fluctuation system at one replica-symmetric point."""

    point: RSPoint
    couplings: np.ndarray
    matrix: np.ndarray
    source: np.ndarray
    limits: np.ndarray
    m_norm1: float
    condition: float
    residual: float

    def limits_named(self) -> dict[str, float]:
        return {name: float(x) for name, x in zip(OBSERVABLE_NAMES, self.limits)}

    def to_json_obj(self) -> dict:
        return {
            "limits": self.limits_named(),
            "M": [[float(x) for x in row] for row in self.matrix],
            "v": [float(x) for x in self.source],
            "Y": [float(x) for x in self.couplings],
            "m_norm1": self.m_norm1,
            "condition": self.condition,
        }


def solve_limits(m: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, float, float]:
    """LU solve of (I - M) x = v with condition and residual guards.

    Returns (x, condition, residual).  Raises RegionError when the
    condition estimate of (I - M) exceeds 1e6 and NumericsError when the
    back-substituted residual misses 1e-10.
    """
    system = np.eye(len(v)) - np.asarray(m, dtype=float)
    condition = float(np.linalg.cond(system, 1))
    if condition > CONDITION_CAP:
        raise RegionError(
            f"condition estimate {condition:.3e} exceeds {CONDITION_CAP:.0e}"
        )
    lu, piv = linalg.lu_factor(system)
    x = linalg.lu_solve((lu, piv), np.asarray(v, dtype=float))
    residual = float(np.max(np.abs(system @ x - v)))
    if residual > RESIDUAL_TOL:
        raise NumericsError(f"solve residual {residual:.3e} above {RESIDUAL_TOL:.0e}")
    return x, condition, residual


def limiting_covariances(point: RSPoint) -> FluctuationReport:
    """Solve (I - M) x = v for the seven N-scaled covariance limits.

    Dense LU with partial pivoting; the residual must come back below
    1e-10.  Raises RegionError when the 1-norm of M reaches 1 or the
    condition estimate of (I - M) exceeds 1e6, since the linear response
    derivation is only trusted inside that region.
    """
    couplings = compute_Y(point)
    m = assemble_M(point, couplings)
    v = compute_v(point)
    m_norm1 = float(np.linalg.norm(m, 1))
    if m_norm1 >= 1.0:
        raise RegionError(
            f"matrix 1-norm {m_norm1:.6g} >= 1 at beta={point.beta}, h={point.h}; "
            "outside validated high-temperature region"
        )
    limits, condition, residual = solve_limits(m, v)
    return FluctuationReport(
        point=point,
        couplings=couplings,
        matrix=m,
        source=v,
        limits=limits,
        m_norm1=m_norm1,
        condition=condition,
        residual=residual,
    )


def limits_to_csv(report: FluctuationReport) -> str:
    """Flat name,value rows: the seven limits, then M and v entries."""
    lines = ["name,value"]
    for name, value in report.limits_named().items():
        lines.append(f"{name},{value!r}")
    for i in range(7):
        for j in range(7):
            lines.append(f"M_{i + 1}_{j + 1},{float(report.matrix[i, j])!r}")
    for i in range(7):
        lines.append(f"v_{i + 1},{float(report.source[i])!r}")
    return "\n".join(lines) + "\n"
