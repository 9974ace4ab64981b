"""Sequential Bayesian estimation of (omega, gamma) from 3-qubit syndrome streams.

The posterior lives on a fixed rectangular grid.  Each round a control policy
picks the round duration ``tau`` and counter-rotation ``omega_c``; a syndrome
is sampled from the true channel, and the grid weights are multiplied by the
syndrome likelihood at ``omega - omega_c``.

Unitary control sets ``omega_c = mean - std`` so the residual rotation seen
by the qubits is ``omega - omega_c ~ std``.  The alternative literal reading,
``omega_c = -(mean) + std``, would double the rotation under the
``omega -> omega - omega_c`` convention used here; it is not implemented.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import bisect

from . import _kernels
from .channels import bitflip_probability
from .codes import REP3_SYNDROMES, TAU_XTOL, _upper_tail

GRID_POINTS = 201
GRID_HALF_WIDTH = 6.0  # prior standard deviations
THREADS_ENV = "QECINSITU_THREADS"


class GridExhaustedError(RuntimeError):
    """All posterior mass underflowed; the truth is outside the grid."""


@dataclass(frozen=True)
class GaussianPrior2D:
    mean: tuple[float, float] = (1.0, 0.01)
    variance: tuple[float, float] = (1e-2, 1e-6)

    def __post_init__(self):
        if min(self.variance) <= 0:
            raise ValueError(f"prior variances must be positive, got {self.variance}")

    @property
    def std(self) -> tuple[float, float]:
        return (math.sqrt(self.variance[0]), math.sqrt(self.variance[1]))


def sample_true_params(prior: GaussianPrior2D, rng: np.random.Generator) -> tuple[float, float]:
    """Draw (omega, gamma) from the prior truncated to the nonnegative quadrant."""
    out = []
    for mean, sd in zip(prior.mean, prior.std):
        x = rng.normal(mean, sd)
        while x < 0:
            x = rng.normal(mean, sd)
        out.append(float(x))
    return out[0], out[1]


def _rep3_grid_likelihood(P: np.ndarray, syndrome: str) -> np.ndarray:
    odd = P * (1.0 - P)
    if syndrome == "00":
        return 1.0 - 3.0 * odd
    if syndrome in REP3_SYNDROMES:
        return odd
    raise ValueError(f"unknown syndrome {syndrome!r}")


@dataclass
class GridPosterior:
    omega_axis: np.ndarray
    gamma_axis: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.omega_axis = np.asarray(self.omega_axis, dtype=float)
        self.gamma_axis = np.asarray(self.gamma_axis, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.omega_axis.size, self.gamma_axis.size):
            raise ValueError("weights shape does not match axes")
        if np.any(np.diff(self.omega_axis) <= 0) or np.any(np.diff(self.gamma_axis) <= 0):
            raise ValueError("grid axes must be strictly increasing")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if not total > 0:
            raise GridExhaustedError("posterior has no mass")
        self.weights = w / total

    @classmethod
    def from_prior(cls, prior: GaussianPrior2D, points: int = GRID_POINTS,
                   half_width: float = GRID_HALF_WIDTH) -> "GridPosterior":
        axes = []
        for mean, sd in zip(prior.mean, prior.std):
            lo = max(0.0, mean - half_width * sd)
            axes.append(np.linspace(lo, mean + half_width * sd, points))
        om, ga = axes
        (m0, g0), (so, sg) = prior.mean, prior.std
        w = np.outer(np.exp(-0.5 * ((om - m0) / so) ** 2), np.exp(-0.5 * ((ga - g0) / sg) ** 2))
        return cls(om, ga, w)

    @property
    def cell(self) -> tuple[float, float]:
        return (self.omega_axis[1] - self.omega_axis[0], self.gamma_axis[1] - self.gamma_axis[0])

    def mean(self) -> tuple[float, float]:
        w = self.weights
        return float(w.sum(axis=1) @ self.omega_axis), float(w.sum(axis=0) @ self.gamma_axis)

    def variance(self) -> tuple[float, float]:
        w = self.weights
        mo, mg = self.mean()
        vo = w.sum(axis=1) @ (self.omega_axis - mo) ** 2
        vg = w.sum(axis=0) @ (self.gamma_axis - mg) ** 2
        return float(vo), float(vg)

    def flip_probability(self, tau: float, omega_c: float = 0.0) -> np.ndarray:
        """P on every grid node for a round of duration ``tau``."""
        return bitflip_probability(self.omega_axis[:, None] - omega_c, self.gamma_axis[None, :], tau)

    def copy(self) -> "GridPosterior":
        return GridPosterior(self.omega_axis.copy(), self.gamma_axis.copy(), self.weights.copy())


def bayes_update(post: GridPosterior, syndrome: str, tau: float, omega_c: float = 0.0) -> GridPosterior:
    like = _rep3_grid_likelihood(post.flip_probability(tau, omega_c), syndrome)
    w = post.weights * like
    if not w.sum() > 0:
        raise GridExhaustedError(f"syndrome {syndrome} has zero likelihood on the whole grid")
    return GridPosterior(post.omega_axis, post.gamma_axis, w)


def bayes_update_counts(post: GridPosterior, counts: dict[str, int], tau: float,
                        omega_c: float = 0.0) -> GridPosterior:
    """Apply many exchangeable rounds at one setting, given syndrome counts.

    Equivalent to calling :func:`bayes_update` once per round; done in log space.
    """
    P = post.flip_probability(tau, omega_c)
    with np.errstate(divide="ignore"):
        logw = np.log(post.weights)
        for s, n in counts.items():
            if n:
                logw = logw + n * np.log(_rep3_grid_likelihood(P, s))
    top = logw.max()
    if not np.isfinite(top):
        raise GridExhaustedError("counts have zero likelihood on the whole grid")
    return GridPosterior(post.omega_axis, post.gamma_axis, np.exp(logw - top))


class Policy(enum.Enum):
    NO_CONTROL = "no-control"
    UNITARY_CONTROL = "unitary-control"
    RANDOM_TAU = "random-tau"
    UNITARY_AND_RANDOM_TAU = "unitary-and-random-tau"

    @property
    def unitary(self) -> bool:
        return self in (Policy.UNITARY_CONTROL, Policy.UNITARY_AND_RANDOM_TAU)

    @property
    def random_tau(self) -> bool:
        return self in (Policy.RANDOM_TAU, Policy.UNITARY_AND_RANDOM_TAU)


_KERNEL_CODES = {
    Policy.NO_CONTROL: _kernels.NO_CONTROL,
    Policy.UNITARY_CONTROL: _kernels.UNITARY,
    Policy.RANDOM_TAU: _kernels.RANDOM_TAU,
    Policy.UNITARY_AND_RANDOM_TAU: _kernels.UNITARY_RANDOM_TAU,
}


@dataclass(frozen=True)
class ControlPolicy:
    variant: Policy
    fixed_tau: float | None = None
    tau_range: tuple[float, float] = (0.0, 100.0)

    def __post_init__(self):
        object.__setattr__(self, "variant", Policy(self.variant))
        if self.tau_range[0] < 0 or self.tau_range[1] < self.tau_range[0]:
            raise ValueError(f"bad tau_range {self.tau_range}")
        if not self.variant.random_tau and self.fixed_tau is None:
            raise ValueError(f"{self.variant.value} needs fixed_tau")


def choose_control(policy: ControlPolicy, post: GridPosterior, rng: np.random.Generator) -> tuple[float, float]:
    if policy.variant.random_tau:
        lo, hi = policy.tau_range
        tau = lo + (hi - lo) * rng.random()
    else:
        tau = policy.fixed_tau
    omega_c = 0.0
    if policy.variant.unitary:
        mean_omega, _ = post.mean()
        omega_c = mean_omega - math.sqrt(post.variance()[0])
    return float(tau), float(omega_c)


@dataclass
class RunTrace:
    omega_true: float
    gamma_true: float
    tau: np.ndarray
    omega_c: np.ndarray
    syndrome: np.ndarray  # index into REP3_SYNDROMES
    uncorrectable: np.ndarray
    omega_mean: np.ndarray
    omega_var: np.ndarray
    gamma_mean: np.ndarray
    gamma_var: np.ndarray
    final_posterior: GridPosterior | None = field(default=None, repr=False)

    def __len__(self):
        return self.tau.size

    @property
    def sq_err_omega(self) -> np.ndarray:
        return (self.omega_mean - self.omega_true) ** 2

    @property
    def sq_err_gamma(self) -> np.ndarray:
        return (self.gamma_mean - self.gamma_true) ** 2

    @property
    def survival(self) -> np.ndarray:
        """1 while no uncorrectable error has occurred, 0 afterwards."""
        return np.cumprod(~self.uncorrectable).astype(float)

    def syndromes(self) -> list[str]:
        return [REP3_SYNDROMES[s] for s in self.syndrome]


def run_simulation(prior: GaussianPrior2D, policy: ControlPolicy, rounds: int, rng: np.random.Generator,
                   true_params: tuple[float, float] | None = None,
                   posterior: GridPosterior | None = None) -> RunTrace:
    """One run: draw the truth (unless given), then ``rounds`` of control/sample/update.

    Random numbers are consumed as: truth draws, then per round
    ``[tau uniform (random-tau policies only)], three flip uniforms``.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if true_params is None:
        true_params = sample_true_params(prior, rng)
    omega_true, gamma_true = true_params
    post = posterior.copy() if posterior is not None else GridPosterior.from_prior(prior)
    width = 4 if policy.variant.random_tau else 3
    uniforms = rng.random((rounds, width))
    lo, hi = policy.tau_range
    fixed = policy.fixed_tau if policy.fixed_tau is not None else 0.0
    w = np.ascontiguousarray(post.weights)
    taus, omega_cs, synd, bad, stats, status = _kernels.simulate_rounds(
        w, post.omega_axis, post.gamma_axis, _KERNEL_CODES[policy.variant],
        float(fixed), float(lo), float(hi), uniforms, float(omega_true), float(gamma_true),
    )
    if status:
        raise GridExhaustedError("posterior grid lost all mass during the run")
    return RunTrace(
        omega_true=omega_true, gamma_true=gamma_true, tau=taus, omega_c=omega_cs,
        syndrome=synd, uncorrectable=bad,
        omega_mean=stats[:, 0], omega_var=stats[:, 1], gamma_mean=stats[:, 2], gamma_var=stats[:, 3],
        final_posterior=GridPosterior(post.omega_axis, post.gamma_axis, w),
    )


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    """Per-run PCG64 substream, seeded with ``seed XOR run_index``."""
    return np.random.Generator(np.random.PCG64(seed ^ run_index))


def worker_count(jobs: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, min(n, jobs))


def run_batch(prior: GaussianPrior2D, policy: ControlPolicy, rounds: int, runs: int, seed: int,
              keep_posterior: bool = False) -> list[RunTrace]:
    """Independent runs on per-run substreams; results ordered by run index."""
    def one(i):
        trace = run_simulation(prior, policy, rounds, run_rng(seed, i))
        if not keep_posterior:
            trace.final_posterior = None
        return trace

    workers = worker_count(runs)
    if workers == 1:
        return [one(i) for i in range(runs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(runs)))


def wilson_interval(successes: np.ndarray, n: int, z: float = 1.959963984540054) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(successes, dtype=float) / n
    denom = 1.0 + z**2 / n
    centre = (p + z**2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
    # the ends are exact: lo = 0 at k = 0, hi = 1 at k = n
    lo = np.where(p == 0.0, 0.0, centre - half)
    hi = np.where(p == 1.0, 1.0, centre + half)
    return lo, hi


GAMMA_ERROR_SCALE = 1e4


@dataclass
class EstimationSummary:
    """Per-round quantiles over runs; gamma errors are multiplied by 1e4."""

    round: np.ndarray
    omega_err_median: np.ndarray
    omega_err_q25: np.ndarray
    omega_err_q75: np.ndarray
    gamma_err_median: np.ndarray
    gamma_err_q25: np.ndarray
    gamma_err_q75: np.ndarray
    survival_mean: np.ndarray
    survival_lo: np.ndarray
    survival_hi: np.ndarray
    runs: int

    COLUMNS = (
        "round", "omega_sqerr_median", "omega_sqerr_q25", "omega_sqerr_q75",
        "gamma_sqerr_x1e4_median", "gamma_sqerr_x1e4_q25", "gamma_sqerr_x1e4_q75",
        "survival_mean", "survival_ci95_lo", "survival_ci95_hi",
    )

    def rows(self):
        cols = (self.round, self.omega_err_median, self.omega_err_q25, self.omega_err_q75,
                self.gamma_err_median, self.gamma_err_q25, self.gamma_err_q75,
                self.survival_mean, self.survival_lo, self.survival_hi)
        for k in range(self.round.size):
            yield (int(self.round[k]),) + tuple(float(c[k]) for c in cols[1:])


def aggregate_runs(traces: list[RunTrace]) -> EstimationSummary:
    if len(traces) < 2:
        raise ValueError("need at least two traces to aggregate")
    om = np.stack([t.sq_err_omega for t in traces])
    ga = np.stack([t.sq_err_gamma for t in traces]) * GAMMA_ERROR_SCALE
    alive = np.stack([t.survival for t in traces])
    oq = np.quantile(om, [0.25, 0.5, 0.75], axis=0)
    gq = np.quantile(ga, [0.25, 0.5, 0.75], axis=0)
    n = len(traces)
    lo, hi = wilson_interval(alive.sum(axis=0), n)
    return EstimationSummary(
        round=np.arange(1, om.shape[1] + 1),
        omega_err_median=oq[1], omega_err_q25=oq[0], omega_err_q75=oq[2],
        gamma_err_median=gq[1], gamma_err_q25=gq[0], gamma_err_q75=gq[2],
        survival_mean=alive.mean(axis=0), survival_lo=lo, survival_hi=hi, runs=n,
    )


def half_life_round(survival_mean: np.ndarray) -> int:
    """First round (1-based) at which mean survival drops below one half; 0 if never."""
    below = np.nonzero(survival_mean < 0.5)[0]
    return int(below[0]) + 1 if below.size else 0


@lru_cache(maxsize=None)
def _prior_nodes(prior: GaussianPrior2D, order: int = 100):
    x, wts = np.polynomial.hermite_e.hermegauss(order)
    wts = wts / wts.sum()
    (mo, mg), (so, sg) = prior.mean, prior.std
    om = np.repeat(mo + so * x, order)
    ga = np.tile(mg + sg * x, order)
    return om, np.clip(ga, 0.0, None), np.outer(wts, wts).ravel()


def prior_average_failure(prior: GaussianPrior2D, tau: float, M: int = 3) -> float:
    """Failure probability per round averaged over the prior (100x100 Gauss-Hermite)."""
    om, ga, wt = _prior_nodes(prior)
    return float(wt @ _upper_tail(bitflip_probability(om, ga, tau), M))


@lru_cache(maxsize=None)
def fiducial_tau(prior: GaussianPrior2D = GaussianPrior2D(), R_th: float = 0.05, M: int = 3) -> float:
    """Round duration at which the prior-averaged failure probability equals ``R_th``."""
    lo, hi = 1e-6, 5.0
    grid = np.linspace(lo, hi, 2001)
    vals = np.array([prior_average_failure(prior, t, M) for t in grid]) - R_th
    k = int(np.nonzero(vals >= 0)[0][0])
    return bisect(lambda t: prior_average_failure(prior, t, M) - R_th, grid[k - 1], grid[k], xtol=TAU_XTOL)


def prior_average_flip_probability(prior: GaussianPrior2D, tau: float) -> float:
    om, ga, wt = _prior_nodes(prior)
    return float(wt @ bitflip_probability(om, ga, tau))


@dataclass
class DegeneracyResult:
    """Outcome of the two-stage contour experiment for one run."""

    omega_true: float
    gamma_true: float
    contour_mass: float  # after stage 1: mass with |P - P_true| < band
    cell_mass: float  # after stage 2: mass on nodes within one cell of the truth


def degeneracy_run(prior: GaussianPrior2D, tau: float, rng: np.random.Generator, first_rounds: int = 1000,
                   extra_rounds: int = 10_000_000, omega_c_alt: float = 0.75,
                   band: float = 0.02) -> DegeneracyResult:
    """Fixed-setting rounds pin a P-contour; rounds at a second ``omega_c`` cut it.

    Stage 1 runs ``first_rounds`` at ``omega_c = 0``.  Stage 2 adds ``extra_rounds``
    at each of ``omega_c = 0`` and ``omega_c_alt``.  Rounds at a fixed setting are
    exchangeable, so the syndrome counts are sampled directly.
    """
    omega_true, gamma_true = sample_true_params(prior, rng)
    post = GridPosterior.from_prior(prior)

    def counts(n, omega_c):
        P = float(bitflip_probability(omega_true - omega_c, gamma_true, tau))
        odd = P * (1 - P)
        draw = rng.multinomial(n, [1 - 3 * odd, odd, odd, odd])
        return dict(zip(REP3_SYNDROMES, draw.tolist()))

    post = bayes_update_counts(post, counts(first_rounds, 0.0), tau, 0.0)
    P_true = float(bitflip_probability(omega_true, gamma_true, tau))
    near = np.abs(post.flip_probability(tau) - P_true) < band
    contour_mass = float(post.weights[near].sum())

    post = bayes_update_counts(post, counts(extra_rounds, 0.0), tau, 0.0)
    post = bayes_update_counts(post, counts(extra_rounds, omega_c_alt), tau, omega_c_alt)
    d_om, d_ga = post.cell
    ok_o = np.abs(post.omega_axis - omega_true) <= d_om
    ok_g = np.abs(post.gamma_axis - gamma_true) <= d_ga
    cell_mass = float(post.weights[np.ix_(ok_o, ok_g)].sum())
    return DegeneracyResult(omega_true, gamma_true, contour_mass, cell_mass)
