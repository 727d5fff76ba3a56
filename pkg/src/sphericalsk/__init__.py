"""Replica-symmetric theory, overlap fluctuation limits, and Monte Carlo
for mixed spherical spin-glass models in an external field."""

from .errors import (
    EngineConsistencyError,
    MixtureError,
    NumericsError,
    RegionError,
    SphericalSKError,
    ValidationError,
)
from .fluctuation_system import (
    OBSERVABLE_NAMES,
    FluctuationReport,
    limiting_covariances,
)
from .mixture import MixturePolynomial
from .moment_engine import compute_WU, nu0_monomial, relations_table
from .rs_solver import (
    RSPoint,
    free_energy_rs,
    free_energy_variational,
    high_temp_check,
    rs_point,
    solve_q,
    solve_q_finite_N,
)
from .simulator import (
    ExperimentReport,
    SimulationConfig,
    ThermoReport,
    read_overlap_dump,
    run_experiment,
    sample_disorder,
    thermo_integrate_free_energy,
    write_overlap_dump,
)

__all__ = [
    "EngineConsistencyError",
    "ExperimentReport",
    "FluctuationReport",
    "MixtureError",
    "MixturePolynomial",
    "NumericsError",
    "OBSERVABLE_NAMES",
    "RSPoint",
    "RegionError",
    "SimulationConfig",
    "SphericalSKError",
    "ThermoReport",
    "ValidationError",
    "compute_WU",
    "free_energy_rs",
    "free_energy_variational",
    "high_temp_check",
    "limiting_covariances",
    "nu0_monomial",
    "read_overlap_dump",
    "relations_table",
    "rs_point",
    "run_experiment",
    "sample_disorder",
    "solve_q",
    "solve_q_finite_N",
    "thermo_integrate_free_energy",
    "write_overlap_dump",
]

__version__ = "0.1.0"
