"""Seeded experiment runners that produce CSV tables with a metadata header.

Every table carries the derived constants (threshold flip probability, the
round duration tau_1 at omega=1, gamma=0.01, and the prior-averaged duration
tau_bar), the full configuration, the code version and the RNG description,
so an output file is enough to reproduce itself.  No timestamps are written.
"""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .channels import (
    AnisotropicParams,
    ChannelParams,
    FlipProbs,
    RateTriple,
    anisotropic_effective,
    bitflip_probability,
    bloch_ode_solve,
    choi_of_unital,
    composite_coeffs,
    flip_probs_of_choi,
    p_of_tau,
    rotation_matrix,
    transfer_matrix_of_anisotropic,
)
from .codes import (
    FIVE_QUBIT_CLASSES,
    chernoff_exponent,
    five_qubit_brute_force,
    five_qubit_class_likelihood,
    five_qubit_depolarizing,
    parity_syndrome,
    repM_uncorrectable,
    tau_threshold,
    threshold_flip_probability,
)
from .estimation import (
    ControlPolicy,
    GaussianPrior2D,
    Policy,
    aggregate_runs,
    fiducial_tau,
    run_batch,
)
from .model_select import (
    CorrelatedParams,
    HypothesisPrior,
    correlated_brute_force,
    correlated_error_string_probs,
    correlated_flip_count_probs,
    correlated_syndrome_probs,
    correlated_syndrome_probs_reduced,
    simulate_hypothesis_experiment,
)

RNG_DESCRIPTION = "numpy PCG64; run i uses PCG64(seed XOR i)"
EXPERIMENTS = ("sweep-r", "estimate", "hypothesis", "validate", "five-qubit-likelihood", "choi")


class ConfigError(ValueError):
    """Raised for missing or invalid configuration values."""


@dataclass
class ExperimentConfig:
    """All knobs for one experiment.  Loaded from JSON; CLI flags override keys."""

    experiment: str
    seed: int | None = None
    runs: int = 100
    rounds: int = 10_000
    out: str | None = None
    # estimation
    policy: str = "no-control"
    prior_mean: tuple[float, float] = (1.0, 0.01)
    prior_variance: tuple[float, float] = (1e-2, 1e-6)
    tau: float | None = None  # fixed duration; None means tau_bar
    tau_range: tuple[float, float] = (0.0, 100.0)
    # hypothesis
    true_hypothesis: str = "H0"
    p_range: tuple[float, float] = (0.0, 0.1)
    q_range: tuple[float, float] = (0.0, 0.1)
    grid_points: int = 201
    true_p: float | None = None
    true_q: float | None = None
    # sweep-r
    gamma: float = 0.01
    omegas: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    tau_grid: tuple[float, float, int] = (0.01, 3.0, 300)
    code_sizes: tuple[int, ...] = (3, 5)
    R_th: float = 0.05
    # validate
    samples: int = 1000
    # five-qubit-likelihood / choi
    p_x: float = 0.01
    p_y: float = 0.01
    p_z: float = 0.01
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    theta: float = 0.0

    STOCHASTIC = ("estimate", "hypothesis")

    def __post_init__(self):
        tuple_fields = ("prior_mean", "prior_variance", "tau_range", "p_range", "q_range",
                        "omegas", "tau_grid", "code_sizes", "axis")
        for name in tuple_fields:
            setattr(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.experiment in self.STOCHASTIC and self.seed is None:
            raise ConfigError(f"{self.experiment} needs an explicit seed")
        if self.seed is not None and not (isinstance(self.seed, int) and 0 <= self.seed < 2**64):
            raise ConfigError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")
        for name in ("runs", "rounds", "samples", "grid_points"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.experiment == "estimate" and self.runs < 2:
            raise ConfigError("estimate needs at least 2 runs")
        try:
            Policy(self.policy)
        except ValueError:
            names = [p.value for p in Policy]
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {names}") from None
        if self.true_hypothesis not in ("H0", "H1"):
            raise ConfigError(f"true_hypothesis must be H0 or H1, got {self.true_hypothesis!r}")
        if any(M < 3 for M in self.code_sizes):
            raise ConfigError("code sizes must be >= 3")
        if self.tau_grid[2] < 1 or self.tau_grid[0] < 0:
            raise ConfigError("tau_grid must be (start >= 0, stop, points >= 1)")

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in data:
            raise ConfigError("config needs an 'experiment' key")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str, **overrides) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(data)

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def echo(self) -> dict[str, Any]:
        """Settings that affect results (the output path does not)."""
        d = self.to_dict()
        d.pop("out")
        return d

    def prior(self) -> GaussianPrior2D:
        return GaussianPrior2D(self.prior_mean, self.prior_variance)

    def hypothesis_prior(self) -> HypothesisPrior:
        return HypothesisPrior(self.p_range, self.q_range, self.grid_points, self.grid_points)


def derived_constants() -> dict[str, float]:
    return {
        "P_th": threshold_flip_probability(0.05, 3),
        "tau_1": tau_threshold(1.0, 0.01, 0.05, 3),
        "tau_bar": fiducial_tau(GaussianPrior2D()),
    }


@dataclass
class ResultTable:
    columns: tuple[str, ...]
    rows: list[tuple]
    metadata: dict[str, Any] = field(default_factory=dict)
    passed: bool = True

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row {row!r} does not match header {self.columns}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.metadata.items():
            buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def write(self, path: str | None) -> str:
        text = self.to_csv()
        if path:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def read_csv(text: str) -> tuple[dict[str, Any], list[str], list[list[str]]]:
    """Parse a table written by :meth:`ResultTable.to_csv`."""
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = json.loads(value)
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return meta, rows[0], rows[1:]


def _metadata(cfg: ExperimentConfig, **extra) -> dict[str, Any]:
    meta = {
        "experiment": cfg.experiment,
        "code_version": __version__,
        "seed": cfg.seed,
        "rng": RNG_DESCRIPTION,
        **derived_constants(),
        "config": cfg.echo(),
    }
    meta.update(extra)
    return meta


def cmd_sweep_R(cfg: ExperimentConfig) -> ResultTable:
    """Per-round failure probability R versus tau for each omega and code size."""
    start, stop, points = cfg.tau_grid
    taus = np.linspace(start, stop, int(points))
    rows = []
    for omega in cfg.omegas:
        for M in cfg.code_sizes:
            try:
                crossing = tau_threshold(omega, cfg.gamma, cfg.R_th, M)
            except ValueError:
                crossing = float("nan")
            for tau in taus:
                P = float(bitflip_probability(omega, cfg.gamma, tau))
                rows.append((float(omega), float(tau), int(M), P, repM_uncorrectable(P, M), crossing))
    return ResultTable(("omega", "tau", "M", "P", "R", "tau_threshold"), rows, _metadata(cfg))


def cmd_estimation(cfg: ExperimentConfig) -> ResultTable:
    """Batch of Bayesian estimation runs under one control policy."""
    prior = cfg.prior()
    tau = cfg.tau if cfg.tau is not None else fiducial_tau(prior)
    variant = Policy(cfg.policy)
    policy = ControlPolicy(variant, fixed_tau=None if variant.random_tau else tau, tau_range=cfg.tau_range)
    traces = run_batch(prior, policy, cfg.rounds, cfg.runs, cfg.seed)
    summary = aggregate_runs(traces)
    meta = _metadata(cfg, fixed_tau=None if variant.random_tau else tau)
    return ResultTable(summary.COLUMNS, list(summary.rows()), meta)


def cmd_hypothesis(cfg: ExperimentConfig) -> ResultTable:
    """Posterior probabilities of both hypotheses per round; round 0 is the prior."""
    true_params = None
    if cfg.true_p is not None:
        q = cfg.true_q if cfg.true_q is not None else 0.0
        true_params = CorrelatedParams(cfg.true_p, q)
    summary = simulate_hypothesis_experiment(cfg.true_hypothesis, cfg.rounds, cfg.runs, cfg.seed,
                                             cfg.hypothesis_prior(), true_params)
    return ResultTable(summary.COLUMNS, list(summary.rows()), _metadata(cfg))


# --- oracle-equivalence suites -------------------------------------------------

def _suite_five_qubit(rng: np.random.Generator, n: int) -> float:
    dev = 0.0
    for _ in range(n):
        fp = FlipProbs(*rng.dirichlet(np.ones(4)))
        brute = five_qubit_brute_force(fp)
        closed = five_qubit_class_likelihood(fp).as_syndrome_map()
        dev = max(dev, max(abs(brute[s] - closed[s]) for s in brute))
    for P in np.linspace(0.0, 1.0, 101):
        pr0, prs = five_qubit_depolarizing(P)
        cls = five_qubit_class_likelihood(FlipProbs(1 - P, P / 3, P / 3, P / 3))
        dev = max(dev, abs(pr0 - cls.pS0), *(abs(prs - v) for v in cls.as_tuple()[1:]))
    return dev


def _suite_correlated(rng: np.random.Generator, n: int) -> float:
    dev = 0.0
    grid = np.linspace(0.0, 1.0, 50)
    for p in grid:
        for q in grid:
            cp = CorrelatedParams(float(p), float(q))
            a1 = correlated_error_string_probs(cp)
            brute = correlated_brute_force(cp)
            dev = max(dev, max(abs(a1[k] - brute[k]) for k in brute))
            counts = np.zeros(4)
            synd = dict.fromkeys(("00", "10", "01", "11"), 0.0)
            for pattern, pr in brute.items():
                counts[pattern.count("1")] += pr
                synd[parity_syndrome(pattern)] += pr
            dev = max(dev, float(np.max(np.abs(correlated_flip_count_probs(cp) - counts))))
            for table in (correlated_syndrome_probs(cp), correlated_syndrome_probs_reduced(cp)):
                dev = max(dev, max(abs(table[s] - synd[s]) for s in synd))
    return dev


def _suite_channel_cross(rng: np.random.Generator, n: int) -> float:
    dev = 0.0
    for _ in range(n):
        px, py, pz = rng.dirichlet(np.ones(4))[:3]
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        theta = rng.uniform(0, 2 * math.pi)
        direct = anisotropic_effective(AnisotropicParams(px, py, pz, tuple(axis), theta))
        B = rotation_matrix(axis, theta) @ transfer_matrix_of_anisotropic(px, py, pz)
        via_choi = flip_probs_of_choi(choi_of_unital(B))
        dev = max(dev, float(np.max(np.abs(direct.as_array() - via_choi.as_array()))))
    return dev


def _suite_bloch_commuting(rng: np.random.Generator, n: int) -> float:
    dev = 0.0
    for _ in range(min(n, 20)):
        omega = rng.uniform(0, 3)
        gamma = rng.uniform(0, 0.5)
        tau = rng.uniform(0, 3)
        B = bloch_ode_solve(omega, (1, 0, 0), RateTriple(gamma, 0, 0), tau)
        cc = composite_coeffs(ChannelParams(omega, gamma, tau))
        decay = 1 - 2 * p_of_tau(gamma, tau)
        closed = rotation_matrix((1, 0, 0), omega * tau) @ np.diag([1.0, decay, decay])
        chi = choi_of_unital(B)
        with warnings.catch_warnings():
            # Py, Pz are zero up to rounding here
            warnings.simplefilter("ignore", RuntimeWarning)
            fp = flip_probs_of_choi(chi)
        dev = max(dev, float(np.max(np.abs(B - closed))), abs(fp.Px - cc.P),
                  abs(chi[0, 1].imag - 2 * cc.C))
    return dev


def chernoff_grid(M: int, points: int = 100) -> list[Fraction]:
    """Exact rational grid on [0, (1 + 1/M)/4]."""
    top = Fraction(M + 1, 4 * M)
    return [top * Fraction(k, points - 1) for k in range(points)]


def _suite_chernoff(rng: np.random.Generator, n: int) -> float:
    """Largest of (tail - bound) and (M/12 - exponent); both must be <= 0.

    The second comparison is done in exact rationals because it is an
    equality at the top of the range.
    """
    worst = -math.inf
    for M in range(3, 102, 2):
        for P in chernoff_grid(M):
            exponent = chernoff_exponent(P, M)
            worst = max(worst, repM_uncorrectable(float(P), M) - math.exp(-float(exponent)),
                        float(Fraction(M, 12) - exponent))
    return worst


@dataclass(frozen=True)
class Suite:
    name: str
    run: Callable[[np.random.Generator, int], float]
    tolerance: float


VALIDATION_SUITES = (
    Suite("five-qubit", _suite_five_qubit, 1e-10),
    Suite("correlated-flips", _suite_correlated, 1e-14),
    Suite("channel-cross", _suite_channel_cross, 1e-10),
    Suite("bloch-commuting", _suite_bloch_commuting, 1e-6),
    Suite("chernoff", _suite_chernoff, 0.0),
)


def cmd_validate(cfg: ExperimentConfig, suites: Sequence[Suite] = VALIDATION_SUITES) -> ResultTable:
    """Run every oracle-equivalence suite; ``passed`` is False if any exceeds its tolerance."""
    seed = cfg.seed if cfg.seed is not None else 0
    rows = []
    for suite in suites:
        dev = suite.run(np.random.Generator(np.random.PCG64(seed)), cfg.samples)
        rows.append((suite.name, float(dev), suite.tolerance, bool(dev <= suite.tolerance)))
    ok = all(r[3] for r in rows)
    return ResultTable(("suite", "max_deviation", "tolerance", "passed"), rows, _metadata(cfg), passed=ok)


def cmd_five_qubit_likelihood(cfg: ExperimentConfig) -> ResultTable:
    fp = FlipProbs.from_paulis(cfg.p_x, cfg.p_y, cfg.p_z)
    closed = five_qubit_class_likelihood(fp).as_syndrome_map()
    brute = five_qubit_brute_force(fp)
    cls_of = {s: k for k, group in FIVE_QUBIT_CLASSES.items() for s in group}
    rows = [(s, cls_of[s], closed[s], brute[s]) for s in sorted(closed)]
    return ResultTable(("syndrome", "class", "probability", "enumerated"), rows, _metadata(cfg))


def cmd_choi(cfg: ExperimentConfig) -> ResultTable:
    """Process matrix of the rotated anisotropic channel, plus the flip probabilities."""
    params = AnisotropicParams(cfg.p_x, cfg.p_y, cfg.p_z, cfg.axis, cfg.theta)
    B = rotation_matrix(params.axis, params.theta) @ transfer_matrix_of_anisotropic(cfg.p_x, cfg.p_y, cfg.p_z)
    chi = choi_of_unital(B)
    labels = "IXYZ"
    rows = [(labels[a], labels[b], float(chi[a, b].real), float(chi[a, b].imag))
            for a in range(4) for b in range(4)]
    fp = flip_probs_of_choi(chi)
    meta = _metadata(cfg, flip_probs=dict(zip(("Q", "Px", "Py", "Pz"), fp.as_array().tolist())))
    return ResultTable(("row", "col", "chi_re", "chi_im"), rows, meta)


COMMANDS: dict[str, Callable[[ExperimentConfig], ResultTable]] = {
    "sweep-r": cmd_sweep_R,
    "estimate": cmd_estimation,
    "hypothesis": cmd_hypothesis,
    "validate": cmd_validate,
    "five-qubit-likelihood": cmd_five_qubit_likelihood,
    "choi": cmd_choi,
}


def run(cfg: ExperimentConfig) -> ResultTable:
    return COMMANDS[cfg.experiment](cfg)


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
