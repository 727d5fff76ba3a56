"""Monte Carlo sampling of mixed spherical models with quenched disorder.

A configuration sigma lives on the sphere of radius sqrt(N).  For each
active degree p the disorder is a full order-p array of iid standard
Gaussians g, and

    H(sigma) = sum_p sqrt(w_p) N^{-(p-1)/2}
               sum_{i_1..i_p} g_{i_1..i_p} sigma_{i_1} ... sigma_{i_p},

so E[H(s1) H(s2)] = N * xi(overlap(s1, s2)) holds exactly, with no
symmetrization correction.  The Gibbs weight is exp(beta H + h sum sigma).

Moves are geodesic random-walk Metropolis steps: a tangent Gaussian
direction u rescaled to |u| = sqrt(N), a Gaussian angle theta, and the
rotation sigma' = sigma cos(theta) + u sin(theta), accepted with
min(1, exp(E' - E)).  The proposal is symmetric, so this is plain
Metropolis on the sphere.

Randomness is counter-based (Philox) with one stream per role: tensor
entries are a pure function of (seed, disorder_index, degree, flat
index), and every (disorder, chain) pair owns its own stream, so results
are bitwise reproducible for a fixed seed no matter how many worker
processes run.  SSK_THREADS caps the worker count.
"""

from __future__ import annotations

import math
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np
from scipy import special

from .cavity1d import field_free_energy
from .errors import ValidationError
from .mixture import MixturePolynomial
from .rs_solver import free_energy_rs, rs_point

MAX_TENSOR_ENTRIES = 200_000_000
MAX_SIZE_WITH_CUBIC = 200
RENORM_INTERVAL = 1000
ADAPT_INTERVAL = 100
STEP_SIZE_MIN = 1e-3
STEP_SIZE_MAX = 1.5
TARGET_ACCEPTANCE = 0.5
SPLIT_CHAIN_THRESHOLD = 1.1
N_BATCHES = 20

DUMP_MAGIC = b"SSKD"
DUMP_VERSION = 1

_STREAM_DISORDER = 1
_STREAM_CHAIN = 2


# ---------------------------------------------------------------------------
# random streams and disorder


def philox_stream(seed: int, kind: int, index: int, sub: int = 0) -> np.random.Generator:
    """Independent counter-based stream keyed by (seed, kind, index, sub)."""
    if not 0 <= index < (1 << 32) or not 0 <= sub < (1 << 16):
        raise ValidationError(f"stream key out of range: index={index}, sub={sub}")
    tag = (kind << 56) | (index << 16) | sub
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(tag)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class DisorderSample:
    """One quenched draw of all coupling tensors for a mixture."""

    mixture: MixturePolynomial
    N: int
    seed: int
    index: int
    tensors: Dict[int, np.ndarray] = field(repr=False)


def sample_disorder(
    mixture: MixturePolynomial, N: int, seed: int, index: int = 0
) -> DisorderSample:
    """Draw the coupling tensors for disorder sample ``index``.

    Degrees with zero weight are skipped.  Memory guard: the total entry
    count sum_p N^p must stay below 2e8, and N is capped at
    200 as soon as any degree >= 3 is active.
    """
    if not isinstance(N, (int, np.integer)) or N < 2:
        raise ValidationError(f"N must be an integer >= 2, got {N!r}")
    active = [(p, w) for p, w in mixture.terms if w > 0.0]
    total_entries = sum(N ** p for p, _ in active)
    if total_entries > MAX_TENSOR_ENTRIES:
        raise ValidationError(
            f"disorder needs {total_entries:.3g} tensor entries, cap is {MAX_TENSOR_ENTRIES:.3g}"
        )
    if any(p >= 3 for p, _ in active) and N > MAX_SIZE_WITH_CUBIC:
        raise ValidationError(
            f"N = {N} exceeds the cap {MAX_SIZE_WITH_CUBIC} for mixtures with degree >= 3"
        )
    tensors = {}
    for p, _ in active:
        stream = philox_stream(seed, _STREAM_DISORDER, index, p)
        tensors[p] = stream.standard_normal(size=(N,) * p)
    return DisorderSample(mixture=mixture, N=int(N), seed=int(seed), index=int(index), tensors=tensors)


def hamiltonian(disorder: DisorderSample, sigma: np.ndarray) -> float:
    """H(sigma) by full tensor contraction (cost N^p per degree-p term)."""
    total = 0.0
    for p, tensor in disorder.tensors.items():
        contracted = tensor
        for _ in range(p):
            contracted = contracted @ sigma
        total += math.sqrt(disorder.mixture.weight(p)) * disorder.N ** (-(p - 1) / 2.0) * float(contracted)
    return total


def energy(disorder: Optional[DisorderSample], sigma: np.ndarray, beta: float, h: float) -> float:
    """Log Gibbs weight beta * H(sigma) + h * sum_i sigma_i."""
    ham = hamiltonian(disorder, sigma) if (disorder is not None and beta != 0.0) else 0.0
    return beta * ham + h * float(sigma.sum())


# ---------------------------------------------------------------------------
# chain ensemble: all chains of one disorder sample advance in lockstep


class _ChainEnsemble:
    """Vectorized Metropolis state over the chains of one disorder sample.

    When every active degree is <= 2 the Hamiltonian is a quadratic form
    and proposals cost one matrix product for the whole ensemble; the
    per-chain quadratic form and its matrix-vector cache are updated
    incrementally on acceptance.  Higher degrees fall back to a full
    contraction per proposal.
    """

    def __init__(
        self,
        disorder: Optional[DisorderSample],
        N: int,
        beta: float,
        h: float,
        rngs: list[np.random.Generator],
        block_size: int = 256,
    ):
        self.disorder = disorder
        self.N = int(N)
        self.beta = float(beta)
        self.h = float(h)
        self.rngs = rngs
        self.n_chains = len(rngs)
        self.block_size = int(block_size)
        self.steps = 0
        self.accepted = 0
        self.max_incremental_drift = 0.0
        self.max_radius_drift = 0.0

        degrees = [p for p in (disorder.tensors if disorder else {})]
        self.fast = all(p <= 2 for p in degrees)
        self.sym_matrix = None
        self.lin_vector = None
        if disorder is not None and self.fast:
            if 2 in disorder.tensors:
                raw = disorder.tensors[2]
                scale = math.sqrt(disorder.mixture.weight(2)) / math.sqrt(self.N)
                # the quadratic form only sees the symmetric part
                self.sym_matrix = scale * 0.5 * (raw + raw.T)
            if 1 in disorder.tensors:
                self.lin_vector = math.sqrt(disorder.mixture.weight(1)) * disorder.tensors[1]

        root_n = math.sqrt(self.N)
        cols = []
        for rng in rngs:
            start = rng.standard_normal(self.N)
            cols.append(start * (root_n / np.linalg.norm(start)))
        self.sigma = np.stack(cols, axis=1)
        self._refresh_caches()

    # -- energy bookkeeping

    def _refresh_caches(self) -> None:
        if self.disorder is not None and not self.fast:
            self.ham = np.array(
                [hamiltonian(self.disorder, self.sigma[:, j]) for j in range(self.n_chains)]
            )
        else:
            self.quad = np.zeros(self.n_chains)
            self.lin = np.zeros(self.n_chains)
            if self.sym_matrix is not None:
                self.cache_mv = self.sym_matrix @ self.sigma
                self.quad = np.einsum("ij,ij->j", self.sigma, self.cache_mv)
            if self.lin_vector is not None:
                self.lin = self.lin_vector @ self.sigma
            self.ham = self.quad + self.lin
        self.field_sum = self.sigma.sum(axis=0)

    def _proposal_energy(self, u, cos_t, sin_t):
        """Hamiltonian and field sum of sigma' = sigma cos + u sin."""
        if self.disorder is not None and not self.fast:
            sig_new = self.sigma * cos_t + u * sin_t
            ham_new = np.array(
                [hamiltonian(self.disorder, sig_new[:, j]) for j in range(self.n_chains)]
            )
            extras = (sig_new,)
        else:
            quad_new = np.zeros(self.n_chains)
            lin_new = np.zeros(self.n_chains)
            mv_u = None
            if self.sym_matrix is not None:
                mv_u = self.sym_matrix @ u
                cross = np.einsum("ij,ij->j", self.sigma, mv_u)
                quad_u = np.einsum("ij,ij->j", u, mv_u)
                quad_new = cos_t * cos_t * self.quad + 2.0 * cos_t * sin_t * cross + sin_t * sin_t * quad_u
            if self.lin_vector is not None:
                lin_new = cos_t * self.lin + sin_t * (self.lin_vector @ u)
            ham_new = quad_new + lin_new
            extras = (quad_new, lin_new, mv_u)
        field_new = cos_t * self.field_sum + sin_t * u.sum(axis=0)
        return ham_new, field_new, extras

    def run(self, n_steps: int, step_size: float, adapt: bool, measure_every: int = 0):
        """Advance all chains n_steps; optionally adapt step_size and
        record measurement snapshots.  Returns (step_size, snapshots)."""
        n_c = self.n_chains
        root_n = math.sqrt(self.N)
        snapshots = []
        accepted_window = 0
        done = 0
        while done < n_steps:
            block = min(self.block_size, n_steps - done)
            tangents = np.empty((block, self.N, n_c))
            angles = np.empty((block, n_c))
            log_unifs = np.empty((block, n_c))
            for j, rng in enumerate(self.rngs):
                tangents[:, :, j] = rng.standard_normal((block, self.N))
                angles[:, j] = rng.standard_normal(block)
                log_unifs[:, j] = np.log(rng.random(block))
            for t in range(block):
                g = tangents[t]
                overlap = np.einsum("ij,ij->j", self.sigma, g) / self.N
                u = g - self.sigma * overlap
                u *= root_n / np.sqrt(np.einsum("ij,ij->j", u, u))
                theta = angles[t] * step_size
                cos_t, sin_t = np.cos(theta), np.sin(theta)
                ham_new, field_new, extras = self._proposal_energy(u, cos_t, sin_t)
                delta_e = self.beta * (ham_new - self.ham) + self.h * (field_new - self.field_sum)
                acc = log_unifs[t] < delta_e
                if np.any(acc):
                    if self.disorder is not None and not self.fast:
                        (sig_new,) = extras
                        self.sigma[:, acc] = sig_new[:, acc]
                    else:
                        quad_new, lin_new, mv_u = extras
                        upd = self.sigma * cos_t + u * sin_t
                        self.sigma[:, acc] = upd[:, acc]
                        if self.sym_matrix is not None:
                            mv_upd = self.cache_mv * cos_t + mv_u * sin_t
                            self.cache_mv[:, acc] = mv_upd[:, acc]
                        self.quad[acc] = quad_new[acc]
                        self.lin[acc] = lin_new[acc]
                    self.ham[acc] = ham_new[acc]
                    self.field_sum[acc] = field_new[acc]
                    n_acc = int(acc.sum())
                    self.accepted += n_acc
                    accepted_window += n_acc
                self.steps += 1
                if self.steps % RENORM_INTERVAL == 0:
                    self._renormalize_and_check()
                if adapt and self.steps % ADAPT_INTERVAL == 0:
                    rate = accepted_window / (ADAPT_INTERVAL * n_c)
                    step_size = float(
                        np.clip(step_size * math.exp(0.6 * (rate - TARGET_ACCEPTANCE)),
                                STEP_SIZE_MIN, STEP_SIZE_MAX)
                    )
                    accepted_window = 0
                if measure_every and (done + t + 1) % measure_every == 0:
                    snapshots.append(self._snapshot())
            done += block
        return step_size, snapshots

    def _renormalize_and_check(self) -> None:
        norms_sq = np.einsum("ij,ij->j", self.sigma, self.sigma)
        self.max_radius_drift = max(
            self.max_radius_drift, float(np.max(np.abs(norms_sq / self.N - 1.0)))
        )
        self.sigma *= math.sqrt(self.N) / np.sqrt(norms_sq)
        cached = self.ham.copy()
        self._refresh_caches()
        drift = float(np.max(np.abs(cached - self.ham))) / (1.0 + float(np.max(np.abs(self.ham))))
        self.max_incremental_drift = max(self.max_incremental_drift, drift)

    def _snapshot(self) -> np.ndarray:
        """Overlaps and magnetizations read off the current ensemble:
        (R12, R13, R34, R1..Rn_chains)."""
        s = self.sigma
        pairs = []
        if self.n_chains >= 2:
            pairs.append(float(s[:, 0] @ s[:, 1]) / self.N)
        if self.n_chains >= 4:
            pairs.append(float(s[:, 0] @ s[:, 2]) / self.N)
            pairs.append(float(s[:, 2] @ s[:, 3]) / self.N)
        mags = self.field_sum / self.N
        return np.concatenate([pairs, mags])


# ---------------------------------------------------------------------------
# single-chain reference interface


@dataclass
class ChainState:
    """One Metropolis chain with fully recomputed energies.

    Reference implementation: every proposal is evaluated from scratch
    through ``energy``.  The vectorized ensemble must match it draw for
    draw, which is what the equivalence test checks.
    """

    disorder: Optional[DisorderSample]
    N: int
    beta: float
    h: float
    sigma: np.ndarray
    ham: float
    field_sum: float
    rng: np.random.Generator
    steps: int = 0
    accepted: int = 0

    def radius_error(self) -> float:
        return abs(float(self.sigma @ self.sigma) / self.N - 1.0)


def make_chain(
    disorder: Optional[DisorderSample],
    N: int,
    beta: float,
    h: float,
    rng: np.random.Generator,
) -> ChainState:
    start = rng.standard_normal(N)
    start *= math.sqrt(N) / np.linalg.norm(start)
    ham = hamiltonian(disorder, start) if (disorder is not None and beta != 0.0) else 0.0
    return ChainState(
        disorder=disorder, N=N, beta=beta, h=h, sigma=start,
        ham=ham, field_sum=float(start.sum()), rng=rng,
    )


def mcmc_step(state: ChainState, step_size: float) -> ChainState:
    """One geodesic Metropolis move; mutates and returns the state."""
    n = state.N
    g = state.rng.standard_normal(n)
    u = g - state.sigma * (float(state.sigma @ g) / n)
    u *= math.sqrt(n) / np.linalg.norm(u)
    theta = float(state.rng.standard_normal()) * step_size
    log_unif = math.log(float(state.rng.random()))
    sig_new = state.sigma * math.cos(theta) + u * math.sin(theta)
    ham_new = (
        hamiltonian(state.disorder, sig_new)
        if (state.disorder is not None and state.beta != 0.0)
        else 0.0
    )
    field_new = float(sig_new.sum())
    delta_e = state.beta * (ham_new - state.ham) + state.h * (field_new - state.field_sum)
    if log_unif < delta_e:
        state.sigma = sig_new
        state.ham = ham_new
        state.field_sum = field_new
        state.accepted += 1
    state.steps += 1
    if state.steps % RENORM_INTERVAL == 0:
        state.sigma *= math.sqrt(n) / np.linalg.norm(state.sigma)
        state.field_sum = float(state.sigma.sum())
        if state.disorder is not None and state.beta != 0.0:
            state.ham = hamiltonian(state.disorder, state.sigma)
    return state


def coordinate_marginal_cdf(x, N: int):
    """CDF of a single coordinate of sigma/sqrt(N) under the uniform
    sphere measure: x^2 follows Beta(1/2, (N-1)/2)."""
    arr = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
    return 0.5 * (1.0 + np.sign(arr) * special.betainc(0.5, (N - 1) / 2.0, arr * arr))


# ---------------------------------------------------------------------------
# experiment configuration and reports


@dataclass(frozen=True)
class SimulationConfig:
    mixture: MixturePolynomial
    beta: float = 0.2
    h: float = 0.3
    N: int = 400
    n_disorder: int = 32
    n_chains: int = 4
    sweeps: int = 100_000
    burnin: int = 20_000
    seed: int = 12345
    thin: int = 10
    step_size: float = 0.6
    workers: Optional[int] = None

    def __post_init__(self) -> None:
        if self.N < 2 or self.n_disorder < 1 or self.n_chains < 1:
            raise ValidationError("N, n_disorder and n_chains must be positive")
        if self.sweeps < self.thin or self.thin < 1 or self.burnin < 0:
            raise ValidationError("need sweeps >= thin >= 1 and burnin >= 0")
        if not (self.beta >= 0.0 and math.isfinite(self.beta) and math.isfinite(self.h)):
            raise ValidationError("beta must be >= 0 and h finite")

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SimulationConfig":
        if "mixture" not in obj:
            raise ValidationError("config needs a 'mixture' entry")
        known = {
            "beta", "h", "N", "n_disorder", "n_chains", "sweeps",
            "burnin", "seed", "thin", "step_size", "workers",
        }
        unknown = set(obj) - known - {"mixture"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {k: obj[k] for k in known if k in obj}
        for int_key in ("N", "n_disorder", "n_chains", "sweeps", "burnin", "seed", "thin", "workers"):
            if int_key in kwargs and kwargs[int_key] is not None:
                kwargs[int_key] = int(kwargs[int_key])
        return cls(mixture=MixturePolynomial.from_json_obj(obj["mixture"]), **kwargs)

    def to_json_obj(self) -> dict:
        # workers is an execution detail, not an experiment parameter: two
        # runs of the same config must produce identical reports no matter
        # how the disorder samples were scheduled
        out = self.mixture.to_json_obj()
        out.update(
            beta=self.beta, h=self.h, N=self.N, n_disorder=self.n_disorder,
            n_chains=self.n_chains, sweeps=self.sweeps, burnin=self.burnin,
            seed=self.seed, thin=self.thin, step_size=self.step_size,
        )
        return out


@dataclass(frozen=True)
class EstimatorSummary:
    """Quenched-average estimate of one observable.

    ``stderr`` is the spread of per-disorder means over sqrt(n_disorder)
    (which in expectation already contains the within-chain Monte Carlo
    noise), floored by the batch-means within-chain error so it stays
    honest when n_disorder is small.  ``n_effective`` sums the batch-means
    effective sample counts over disorder samples.
    """

    mean: float
    stderr: float
    n_effective: float
    n_disorder: int

    def to_json_obj(self) -> dict:
        return {
            "mean": self.mean, "stderr": self.stderr,
            "n_effective": self.n_effective, "n_disorder": self.n_disorder,
        }


def _summarize(per_disorder_means, per_disorder_sem_sq, n_effective) -> EstimatorSummary:
    means = np.asarray(per_disorder_means, dtype=float)
    n_d = len(means)
    across = float(np.std(means, ddof=1) / math.sqrt(n_d)) if n_d > 1 else 0.0
    within = math.sqrt(max(float(np.mean(per_disorder_sem_sq)), 0.0) / n_d)
    return EstimatorSummary(
        mean=float(means.mean()),
        stderr=max(across, within),
        n_effective=float(n_effective),
        n_disorder=n_d,
    )


def batch_means_error(series: np.ndarray, n_batches: int = N_BATCHES) -> tuple[float, float]:
    """(squared standard error of the series mean, effective sample count)
    by the method of batch means."""
    n = len(series)
    k = max(min(n_batches, n // 2), 1)
    usable = (n // k) * k
    batches = series[:usable].reshape(k, -1).mean(axis=1)
    if k < 2:
        var_mean = float(np.var(series, ddof=1) / n) if n > 1 else 0.0
        return var_mean, float(n)
    var_mean = float(np.var(batches, ddof=1) / k)
    var_series = float(np.var(series, ddof=1))
    if var_mean <= 0.0:
        return 0.0, float(n)
    return var_mean, min(var_series / var_mean, float(n))


FLUCTUATION_KEYS = ("f1", "f2", "f3", "f4", "f5", "f6", "f7")


def _run_disorder_sample(task: dict) -> dict:
    """Worker: simulate every chain of one disorder sample and reduce to
    measurement series.  Top-level function so process pools can ship it."""
    mixture = MixturePolynomial.from_pairs(task["mixture_terms"])
    n = task["N"]
    beta = task["beta"]
    index = task["index"]
    disorder = (
        sample_disorder(mixture, n, task["seed"], index) if beta != 0.0 else None
    )
    rngs = [
        philox_stream(task["seed"], _STREAM_CHAIN, index, c)
        for c in range(task["n_chains"])
    ]
    ensemble = _ChainEnsemble(disorder, n, beta, task["h"], rngs)
    step_size, _ = ensemble.run(task["burnin"], task["step_size"], adapt=True)
    accepted_mark = ensemble.accepted
    _, snapshots = ensemble.run(
        task["sweeps"], step_size, adapt=False, measure_every=task["thin"]
    )
    stacked = np.array(snapshots)
    n_pairs = 3 if task["n_chains"] >= 4 else (1 if task["n_chains"] >= 2 else 0)
    series = {}
    if n_pairs >= 1:
        series["R12"] = stacked[:, 0]
    if n_pairs == 3:
        series["R13"] = stacked[:, 1]
        series["R34"] = stacked[:, 2]
    mags = stacked[:, n_pairs:]
    for c in range(min(task["n_chains"], 4)):
        series[f"R{c + 1}"] = mags[:, c]
    return {
        "index": index,
        "series": series,
        "mag_all": mags,
        "acceptance": (ensemble.accepted - accepted_mark)
        / max(task["sweeps"] * ensemble.n_chains, 1),
        "step_size": step_size,
        "incremental_drift": ensemble.max_incremental_drift,
        "radius_drift": ensemble.max_radius_drift,
    }


def split_chain_statistic(mag_all: np.ndarray) -> float:
    """Split-half convergence ratio over the per-chain magnetization
    series; values near 1 indicate equilibrated chains."""
    n, c = mag_all.shape
    half = n // 2
    if half < 2:
        return float("nan")
    halves = []
    for j in range(c):
        halves.append(mag_all[:half, j])
        halves.append(mag_all[half: 2 * half, j])
    arr = np.array(halves)
    within = float(np.mean(np.var(arr, axis=1, ddof=1)))
    between = half * float(np.var(arr.mean(axis=1), ddof=1))
    if within <= 0.0:
        return float("nan")
    var_plus = (half - 1) / half * within + between / half
    return math.sqrt(var_plus / within)


def _resolve_workers(config: SimulationConfig) -> int:
    limit = os.cpu_count() or 1
    env = os.environ.get("SSK_THREADS")
    if env is not None:
        try:
            limit = min(limit, max(int(env), 1))
        except ValueError:
            raise ValidationError(f"SSK_THREADS must be an integer, got {env!r}")
    workers = config.workers if config.workers is not None else limit
    return max(min(workers, config.n_disorder), 1)


@dataclass(frozen=True)
class ExperimentReport:
    config: SimulationConfig
    q: float
    r: float
    observables: Dict[str, EstimatorSummary]
    scaled_limits_mc: Dict[str, EstimatorSummary]
    diagnostics: Dict[str, float]
    per_disorder: list
    overlap_samples: np.ndarray

    def to_json_obj(self) -> dict:
        return {
            "config": self.config.to_json_obj(),
            "q": self.q,
            "r": self.r,
            "observables": {k: s.to_json_obj() for k, s in self.observables.items()},
            "scaled_limits_mc": {k: s.to_json_obj() for k, s in self.scaled_limits_mc.items()},
            "diagnostics": self.diagnostics,
            "per_disorder": self.per_disorder,
        }


SCALED_NAME_BY_KEY = {
    "f1": "N_var_R12",
    "f2": "N_cov_R12_R13",
    "f3": "N_cov_R12_R34",
    "f4": "N_cov_R12_R1",
    "f5": "N_cov_R12_R3",
    "f6": "N_var_R1",
    "f7": "N_cov_R1_R2",
}


def run_experiment(config: SimulationConfig) -> ExperimentReport:
    """Quenched Monte Carlo estimate of the seven fluctuation observables.

    Requires n_chains >= 4 so each replica index in an observable maps to
    a distinct chain (the four-replica observable f3 consumes chains 3
    and 4).  Centering values q and r come from the fixed-point solver,
    which also guards the parameter region.
    """
    if config.n_chains < 4:
        raise ValidationError("run_experiment needs n_chains >= 4")
    point = rs_point(config.mixture, config.beta, config.h)
    q, r = point.q, point.r
    results = _map_disorder_tasks(config)

    threshold = 2.0 * (math.log(config.N) / config.N) ** 0.25
    collected: Dict[str, list] = {}
    sem_sq: Dict[str, list] = {}
    n_eff: Dict[str, float] = {}
    per_disorder_rows = []
    overlap_samples = []
    rhats = []
    for res in results:
        s = res["series"]
        overlap_samples.append(s["R12"])
        rhats.append(split_chain_statistic(res["mag_all"]))
        d_o = s["R12"] - q
        obs_series = {
            "f1": d_o * d_o,
            "f2": d_o * (s["R13"] - q),
            "f3": d_o * (s["R34"] - q),
            "f4": d_o * (s["R1"] - r),
            "f5": d_o * (s["R3"] - r),
            "f6": (s["R1"] - r) ** 2,
            "f7": (s["R1"] - r) * (s["R2"] - r),
            "overlap_mean": s["R12"],
            "magnetization_mean": s["R1"],
            "tail_frequency": (np.abs(d_o) >= threshold).astype(float),
            "xi_overlap_mean": config.mixture.eval(np.clip(s["R12"], -1.0, 1.0)),
        }
        row = {"index": res["index"], "acceptance": res["acceptance"]}
        for key, series in obs_series.items():
            var_mean, eff = batch_means_error(series)
            collected.setdefault(key, []).append(float(series.mean()))
            sem_sq.setdefault(key, []).append(var_mean)
            n_eff[key] = n_eff.get(key, 0.0) + eff
            row[key] = float(series.mean())
        per_disorder_rows.append(row)

    observables = {
        key: _summarize(collected[key], sem_sq[key], n_eff[key]) for key in collected
    }
    scaled = {}
    for key in FLUCTUATION_KEYS:
        summary = observables[key]
        scaled[SCALED_NAME_BY_KEY[key]] = EstimatorSummary(
            mean=config.N * summary.mean,
            stderr=config.N * summary.stderr,
            n_effective=summary.n_effective,
            n_disorder=summary.n_disorder,
        )
    diagnostics = {
        "acceptance_rate": float(np.mean([res["acceptance"] for res in results])),
        "step_size": float(np.mean([res["step_size"] for res in results])),
        "split_chain_max": float(np.nanmax(rhats)),
        "split_chain_flag": bool(np.nanmax(rhats) > SPLIT_CHAIN_THRESHOLD),
        "incremental_drift_max": float(max(res["incremental_drift"] for res in results)),
        "radius_drift_max": float(max(res["radius_drift"] for res in results)),
        "tail_threshold": threshold,
    }
    return ExperimentReport(
        config=config,
        q=q,
        r=r,
        observables=observables,
        scaled_limits_mc=scaled,
        diagnostics=diagnostics,
        per_disorder=per_disorder_rows,
        overlap_samples=np.concatenate(overlap_samples),
    )


def _map_disorder_tasks(config: SimulationConfig) -> list:
    tasks = [
        {
            "mixture_terms": config.mixture.terms,
            "beta": config.beta,
            "h": config.h,
            "N": config.N,
            "n_chains": config.n_chains,
            "sweeps": config.sweeps,
            "burnin": config.burnin,
            "seed": config.seed,
            "thin": config.thin,
            "step_size": config.step_size,
            "index": d,
        }
        for d in range(config.n_disorder)
    ]
    workers = _resolve_workers(config)
    if workers <= 1 or len(tasks) <= 1:
        return [_run_disorder_sample(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_disorder_sample, tasks))


# ---------------------------------------------------------------------------
# thermodynamic integration


@dataclass(frozen=True)
class ThermoReport:
    config: SimulationConfig
    beta_grid: np.ndarray
    integrand_means: np.ndarray
    integrand_stderrs: np.ndarray
    free_energy_zero: float
    free_energy: float
    stderr: float
    simpson_error: float
    grid_warning: bool
    reference_rs: float

    def to_json_obj(self) -> dict:
        return {
            "config": self.config.to_json_obj(),
            "beta_grid": [float(x) for x in self.beta_grid],
            "integrand_means": [float(x) for x in self.integrand_means],
            "integrand_stderrs": [float(x) for x in self.integrand_stderrs],
            "free_energy_zero": self.free_energy_zero,
            "free_energy": self.free_energy,
            "stderr": self.stderr,
            "simpson_error": self.simpson_error,
            "grid_warning": self.grid_warning,
            "reference_rs": self.reference_rs,
        }


def _simpson_weights(n_points: int, spacing: float) -> np.ndarray:
    if n_points < 3 or n_points % 2 == 0:
        raise ValidationError("Simpson integration needs an odd number of points >= 3")
    w = np.ones(n_points)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * spacing / 3.0


def thermo_integrate_free_energy(config: SimulationConfig, n_points: int = 9) -> ThermoReport:
    """Free energy at config.beta by thermodynamic integration from 0.

    Uses dF/dbeta = beta * (xi(1) - quenched mean of xi(overlap)); the
    derivative is estimated by Monte Carlo on a uniform beta grid and
    integrated with Simpson weights.  The endpoint F_N(0) is the exact
    field-only sphere integral.  The reported Simpson error compares the
    full grid against its every-other-point subgrid; a warning flag is
    raised when it exceeds the propagated Monte Carlo error.
    """
    if config.n_chains < 2:
        raise ValidationError("thermo integration needs n_chains >= 2 for overlaps")
    grid = np.linspace(0.0, config.beta, n_points)
    xi_one = config.mixture.eval(1.0)
    means = np.zeros(n_points)
    stderrs = np.zeros(n_points)
    for j, beta_j in enumerate(grid):
        if beta_j == 0.0:
            continue  # the integrand carries a factor beta, exactly zero here
        sub = replace(config, beta=float(beta_j))
        results = _map_disorder_tasks(sub)
        per_mean, per_sem_sq, eff = [], [], 0.0
        for res in results:
            series = config.mixture.eval(np.clip(res["series"]["R12"], -1.0, 1.0))
            var_mean, n_e = batch_means_error(series)
            per_mean.append(float(series.mean()))
            per_sem_sq.append(var_mean)
            eff += n_e
        summary = _summarize(per_mean, per_sem_sq, eff)
        means[j] = beta_j * (xi_one - summary.mean)
        stderrs[j] = beta_j * summary.stderr

    spacing = float(grid[1] - grid[0])
    weights = _simpson_weights(n_points, spacing)
    integral = float(weights @ means)
    stderr = float(math.sqrt(np.sum((weights * stderrs) ** 2)))
    simpson_error = float("nan")
    if (n_points - 1) % 4 == 0:
        coarse = _simpson_weights((n_points + 1) // 2, 2 * spacing)
        integral_coarse = float(coarse @ means[::2])
        simpson_error = abs(integral - integral_coarse) / 15.0
    f_zero = field_free_energy(config.h, config.N)
    point = rs_point(config.mixture, config.beta, config.h)
    return ThermoReport(
        config=config,
        beta_grid=grid,
        integrand_means=means,
        integrand_stderrs=stderrs,
        free_energy_zero=f_zero,
        free_energy=f_zero + integral,
        stderr=stderr,
        simpson_error=simpson_error,
        grid_warning=bool(simpson_error > max(stderr, 1e-12)),
        reference_rs=free_energy_rs(point),
    )


# ---------------------------------------------------------------------------
# binary sample dumps


def write_overlap_dump(path, N: int, samples: np.ndarray) -> None:
    """Write thinned overlap samples: header magic 'SSKD', version u32,
    N u32, count u64, then count little-endian float64 values."""
    data = np.ascontiguousarray(np.asarray(samples, dtype="<f8"))
    header = struct.pack("<4sIIQ", DUMP_MAGIC, DUMP_VERSION, int(N), data.size)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_overlap_dump(path) -> tuple[int, np.ndarray]:
    with open(path, "rb") as fh:
        header = fh.read(struct.calcsize("<4sIIQ"))
        magic, version, n, count = struct.unpack("<4sIIQ", header)
        if magic != DUMP_MAGIC:
            raise ValidationError(f"bad dump magic {magic!r}")
        if version != DUMP_VERSION:
            raise ValidationError(f"unsupported dump version {version}")
        payload = np.frombuffer(fh.read(8 * count), dtype="<f8")
        if payload.size != count:
            raise ValidationError("truncated dump payload")
    return int(n), payload
