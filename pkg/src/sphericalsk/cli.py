"""Command line entry point: theory, the 1-D oracle, simulation, verify.

Every report is a JSON object that echoes its effective configuration
under "config", so a report file can be fed back through --config to
reproduce the run byte for byte at the same seed.  Flag precedence is
flags > config file > defaults.  --csv adds a flat lossy table next to
the JSON (or to stdout when no --out is given).

Exit codes: 0 success or verification pass, 1 verification failure,
2 configuration or region errors (argparse usage errors also exit 2).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .cavity1d import (
    CavityParams,
    nu0_monomial_quadrature,
    phi_max_numeric,
    recursion_residual,
    recursion_residual_direct,
    richardson_limit,
    x0_closed_form,
)
from .errors import SphericalSKError, ValidationError
from .fluctuation_system import limiting_covariances, limits_to_csv
from .mixture import MixturePolynomial
from .moment_engine import RELATION_EXPONENTS, compute_WU, nu0_monomial, relations_table
from .rs_solver import free_energy_rs, rs_point
from .simulator import SimulationConfig, run_experiment, write_overlap_dump

DEFAULT_MIXTURE = "p2:1"
DEFAULT_BETA = 0.2
DEFAULT_H = 0.3

Z_LIMIT = 3.0
RELATION_TOL = 1e-12
QUADRATURE_TOL = 1e-6
RECURSION_TOL = 1e-10
SADDLE_TOL = 1e-10
ORACLE_SIZES = (1_000, 10_000, 100_000)
DEFAULT_MONOMIALS = ((1,), (1, 1), (2,), (2, 2))

_SIM_KEYS = (
    "beta", "h", "N", "n_disorder", "n_chains", "sweeps",
    "burnin", "seed", "thin", "step_size", "workers",
)


# ---------------------------------------------------------------------------
# config plumbing


def _load_config_file(path: str) -> dict:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}")
    # a full report is accepted back as a config: descend into its echo
    if isinstance(obj, dict) and isinstance(obj.get("config"), dict):
        obj = obj["config"]
    if not isinstance(obj, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return obj


def _mixture_from(value) -> MixturePolynomial:
    if isinstance(value, MixturePolynomial):
        return value
    if isinstance(value, str):
        return MixturePolynomial.from_string(value)
    return MixturePolynomial.from_json_obj(value)


def _theory_params(args) -> tuple[MixturePolynomial, float, float]:
    file_obj = _load_config_file(args.config) if args.config else {}
    mixture = _mixture_from(
        args.mixture if args.mixture is not None else file_obj.get("mixture", DEFAULT_MIXTURE)
    )
    beta = args.beta if args.beta is not None else float(file_obj.get("beta", DEFAULT_BETA))
    h = args.h if args.h is not None else float(file_obj.get("h", DEFAULT_H))
    return mixture, beta, h


def _sim_config(args) -> SimulationConfig:
    merged = _load_config_file(args.config) if args.config else {}
    for key in _SIM_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    mixture = args.mixture if args.mixture is not None else merged.get("mixture", DEFAULT_MIXTURE)
    merged["mixture"] = _mixture_from(mixture).to_json_obj()["mixture"]
    return SimulationConfig.from_json_obj(merged)


# ---------------------------------------------------------------------------
# subcommands; each returns (report_obj, csv_text, exit_code)


def cmd_theory(args):
    mixture, beta, h = _theory_params(args)
    point = rs_point(mixture, beta, h)
    w_val, u_val = compute_WU(point)
    fluct = limiting_covariances(point)
    report = {
        "config": {**mixture.to_json_obj(), "beta": beta, "h": h},
        "q": point.q,
        "r": point.r,
        "b": point.b,
        "free_energy": free_energy_rs(point),
        "W": w_val,
        "U": u_val,
        "relations": relations_table(point),
        "fluctuation": fluct.to_json_obj(),
    }
    scalar_rows = "".join(
        f"{name},{float(report[name])!r}\n" for name in ("q", "r", "b", "free_energy", "W", "U")
    )
    csv_text = "name,value\n" + scalar_rows + limits_to_csv(fluct).split("\n", 1)[1]
    return report, csv_text, 0


def _parse_monomials(text: str):
    out = []
    for group in text.split(";"):
        exps = tuple(int(x) for x in group.split(",") if x.strip())
        if not exps:
            raise ValidationError(f"empty monomial in {text!r}")
        out.append(exps)
    return out


def cmd_oracle1d(args):
    mixture, beta, h = _theory_params(args)
    file_obj = _load_config_file(args.config) if args.config else {}
    sizes = (
        [int(x) for x in args.sizes.split(",")]
        if args.sizes is not None
        else [int(x) for x in file_obj.get("sizes", ORACLE_SIZES)]
    )
    order = args.order if args.order is not None else int(file_obj.get("order", 40))
    if args.monomials is not None:
        monomials = _parse_monomials(args.monomials)
    else:
        monomials = [tuple(int(x) for x in m) for m in file_obj.get("monomials", DEFAULT_MONOMIALS)]
    point = rs_point(mixture, beta, h)
    rows = []
    for exps in monomials:
        engine = nu0_monomial(exps, point)
        values = [nu0_monomial_quadrature(exps, point, n, order) for n in sizes]
        extrapolated = richardson_limit(sizes, values)
        rows.append({
            "exponents": list(exps),
            "engine": engine,
            "finite_size": [[n, v] for n, v in zip(sizes, values)],
            "scaled_gaps": [n * abs(v - engine) for n, v in zip(sizes, values)],
            "extrapolated": extrapolated,
            "delta": abs(extrapolated - engine),
        })
    report = {
        "config": {
            **mixture.to_json_obj(), "beta": beta, "h": h,
            "sizes": sizes, "order": order, "monomials": [list(m) for m in monomials],
        },
        "rows": rows,
    }
    lines = ["monomial,N,value"]
    for row in rows:
        label = "*".join(f"e{i + 1}^{k}" if k > 1 else f"e{i + 1}" for i, k in enumerate(row["exponents"]))
        for n, v in row["finite_size"]:
            lines.append(f"{label},{n},{v!r}")
        lines.append(f"{label},extrapolated,{row['extrapolated']!r}")
        lines.append(f"{label},engine,{row['engine']!r}")
    return report, "\n".join(lines) + "\n", 0


def _summary_csv(report_obj: dict) -> str:
    lines = ["name,mean,stderr,n_effective"]
    for name, entry in sorted(report_obj["scaled_limits_mc"].items()):
        lines.append(f"{name},{entry['mean']!r},{entry['stderr']!r},{entry['n_effective']!r}")
    for name in ("overlap_mean", "magnetization_mean", "tail_frequency"):
        entry = report_obj["observables"][name]
        lines.append(f"{name},{entry['mean']!r},{entry['stderr']!r},{entry['n_effective']!r}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args):
    config = _sim_config(args)
    result = run_experiment(config)
    if args.dump:
        write_overlap_dump(args.dump, config.N, result.overlap_samples)
    report = result.to_json_obj()
    return report, _summary_csv(report), 0


def _oracle_battery(point, seed: int) -> list[dict]:
    """Fast deterministic cross-checks of the closed forms against their
    independent routes; one row per check with its worst-case delta."""
    closed = relations_table(point)
    relation_delta = max(
        abs(nu0_monomial(exps, point) - closed[name])
        for name, exps in RELATION_EXPONENTS.items()
    )
    q = point.q
    v1_closed = (1.0 - q) * compute_WU(point)[1] + 1.0 - 4.0 * q ** 2 + 3.0 * q ** 3
    v1_chain = (
        nu0_monomial((2, 2), point)
        - q * nu0_monomial((1, 1), point)
        - q * nu0_monomial((3, 1), point)
        + q * q * nu0_monomial((2,), point)
    )
    values = [nu0_monomial_quadrature((1, 1), point, n) for n in ORACLE_SIZES]
    quad_delta = abs(richardson_limit(ORACLE_SIZES, values) - nu0_monomial((1, 1), point))
    rng = np.random.default_rng(seed)
    saddle_delta = 0.0
    for _ in range(50):
        c = float(rng.uniform(-5.0, 5.0))
        n = int(rng.integers(5, 10_000))
        x_num, _ = phi_max_numeric(c, n)
        x_closed, _ = x0_closed_form(c * n / (n - 3))
        saddle_delta = max(saddle_delta, abs(x_num - x_closed))
    recursion_delta = 0.0
    for a, b in ((0.8, 0.3), (-0.5, 0.1)):
        for n in (1_000, 10_000):
            params = CavityParams(N=n, a=a, b=b)
            for k in (2, 3):
                recursion_delta = max(
                    recursion_delta,
                    abs(recursion_residual(params, k) - recursion_residual_direct(params, k)),
                )
    rows = [
        ("relations_closed_vs_engine", relation_delta, RELATION_TOL),
        ("v1_expansion_vs_closed", abs(v1_chain - v1_closed), RELATION_TOL),
        ("quadrature_richardson_vs_engine", quad_delta, QUADRATURE_TOL),
        ("saddle_numeric_vs_closed", saddle_delta, SADDLE_TOL),
        ("cavity_recursion_dual_route", recursion_delta, RECURSION_TOL),
    ]
    return [
        {"name": name, "delta": float(delta), "tolerance": tol, "passed": bool(delta <= tol)}
        for name, delta, tol in rows
    ]


def _z_row(name: str, entry, target: float) -> dict:
    if entry.stderr > 0.0:
        z = (entry.mean - target) / entry.stderr
    else:
        z = 0.0 if entry.mean == target else float("inf")
    return {
        "name": name,
        "estimate": entry.mean,
        "stderr": entry.stderr,
        "target": float(target),
        "z": float(z),
        "passed": bool(abs(z) <= Z_LIMIT),
    }


def cmd_verify(args):
    config = _sim_config(args)
    point = rs_point(config.mixture, config.beta, config.h)
    fluct = limiting_covariances(point)
    oracle_rows = _oracle_battery(point, config.seed)
    result = run_experiment(config)
    targets = fluct.limits_named()
    z_rows = [
        _z_row(name, result.scaled_limits_mc[name], target)
        for name, target in targets.items()
    ]
    z_rows.append(_z_row("overlap_mean", result.observables["overlap_mean"], point.q))
    z_rows.append(
        _z_row("magnetization_mean", result.observables["magnetization_mean"], point.r)
    )
    passed = all(row["passed"] for row in oracle_rows + z_rows)
    report = {
        "config": config.to_json_obj(),
        "q": point.q,
        "r": point.r,
        "free_energy": free_energy_rs(point),
        "limits": targets,
        "oracle_checks": oracle_rows,
        "z_table": z_rows,
        "diagnostics": result.diagnostics,
        "passed": passed,
    }
    lines = ["name,estimate,stderr,target,z,passed"]
    for row in z_rows:
        lines.append(
            f"{row['name']},{row['estimate']!r},{row['stderr']!r},"
            f"{row['target']!r},{row['z']!r},{row['passed']}"
        )
    return report, "\n".join(lines) + "\n", 0 if passed else 1


# ---------------------------------------------------------------------------
# wiring


def _add_theory_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mixture", help="mixture as p<degree>:<weight>[,...]")
    parser.add_argument("--beta", type=float, help="inverse temperature")
    parser.add_argument("--h", type=float, help="external field")


def _add_sim_flags(parser: argparse.ArgumentParser) -> None:
    _add_theory_flags(parser)
    parser.add_argument("--N", type=int, help="system size")
    parser.add_argument("--n-disorder", dest="n_disorder", type=int,
                        help="independent disorder samples")
    parser.add_argument("--n-chains", dest="n_chains", type=int,
                        help="chains (replicas) per disorder sample")
    parser.add_argument("--sweeps", type=int, help="measurement sweeps per chain")
    parser.add_argument("--burnin", type=int, help="burn-in sweeps per chain")
    parser.add_argument("--thin", type=int, help="sweeps between measurements")
    parser.add_argument("--step-size", dest="step_size", type=float,
                        help="initial proposal angle scale")
    parser.add_argument("--workers", type=int, help="worker process cap")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (or a previous report)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--csv", action="store_true",
                        help="also emit a flat CSV view (next to --out, else stdout)")
    parser = argparse.ArgumentParser(
        prog="ssk",
        description="Mixed spherical model toolkit: fixed point, fluctuation "
                    "limits, 1-D oracle, Monte Carlo and self-verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_theory = sub.add_parser("theory", parents=[common],
                              help="fixed point, free energy and fluctuation limits")
    _add_theory_flags(p_theory)
    p_theory.set_defaults(func=cmd_theory)

    p_oracle = sub.add_parser("oracle1d", parents=[common],
                              help="finite-size quadrature vs engine moments")
    _add_theory_flags(p_oracle)
    p_oracle.add_argument("--sizes", help="comma-separated N grid (default 1000,10000,100000)")
    p_oracle.add_argument("--order", type=int, help="Gauss-Hermite order (default 40)")
    p_oracle.add_argument("--monomials",
                          help="semicolon-separated exponent lists, e.g. '1,1;2,2'")
    p_oracle.set_defaults(func=cmd_oracle1d)

    p_sim = sub.add_parser("simulate", parents=[common],
                           help="Monte Carlo estimate of the scaled covariances")
    _add_sim_flags(p_sim)
    p_sim.add_argument("--dump", help="write thinned overlap samples to this binary file")
    p_sim.set_defaults(func=cmd_simulate)

    p_verify = sub.add_parser("verify", parents=[common],
                              help="theory vs oracle vs Monte Carlo, with z-scores")
    _add_sim_flags(p_verify)
    p_verify.set_defaults(func=cmd_verify)
    return parser


def _emit(args, report_obj: dict, csv_text: str) -> None:
    text = json.dumps(report_obj, sort_keys=True, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.csv:
        if args.out:
            Path(args.out).with_suffix(".csv").write_text(csv_text)
        else:
            sys.stdout.write(csv_text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report_obj, csv_text, code = args.func(args)
    except SphericalSKError as exc:
        error_obj = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        _emit(args, error_obj, f"error,{type(exc).__name__}\n")
        return 2
    _emit(args, report_obj, csv_text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
