"""Uncorrelated vs. pairwise-correlated bit flips on the 3-qubit repetition code.

H0: independent flips with probability p on each qubit.
H1: the same, followed by simultaneous flips of qubit pairs (1,2) and (2,3),
each with probability q.

Evidence for each hypothesis is the product of predictive syndrome
probabilities, with the parameter prior represented by trapezoid-weighted
grid points.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .codes import REP3_SYNDROMES, parity_syndrome

FLIP_PATTERNS = tuple("".join(b) for b in itertools.product("01", repeat=3))
HYPOTHESES = ("H0", "H1")


@dataclass(frozen=True)
class CorrelatedParams:
    p: float
    q: float = 0.0

    def __post_init__(self):
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def correlated_error_string_probs(params: CorrelatedParams) -> dict[str, float]:
    """Probability of each flip pattern (qubit 1, 2, 3) under the correlated channel."""
    p, q = params.p, params.q
    P = 1.0 - p
    single_end = p * P**2 * (1 - q + q**2) + p**3 * q * (1 - q)
    pair_adjacent = P**3 * q * (1 - q) + p**2 * P * (1 - q + q**2)
    return {
        "000": P**3 * (1 - q) ** 2 + p**2 * P * q * (2 - q),
        "100": single_end,
        "001": single_end,
        "010": p * P**2 * (1 - q**2) + p**3 * q**2,
        "110": pair_adjacent,
        "011": pair_adjacent,
        "101": P**3 * q**2 + p**2 * P * (1 - q**2),
        "111": p * P**2 * q * (2 - q) + p**3 * (1 - q) ** 2,
    }


def correlated_brute_force(params: CorrelatedParams) -> dict[str, float]:
    """Enumerate 8 independent flip patterns x 2 x 2 pair events and XOR them."""
    p, q = params.p, params.q
    out = dict.fromkeys(FLIP_PATTERNS, 0.0)
    for bits in itertools.product((0, 1), repeat=3):
        w = np.prod([p if b else 1 - p for b in bits])
        for e12, e23 in itertools.product((0, 1), repeat=2):
            we = (q if e12 else 1 - q) * (q if e23 else 1 - q)
            final = (bits[0] ^ e12, bits[1] ^ e12 ^ e23, bits[2] ^ e23)
            out["".join(map(str, final))] += w * we
    return out


def correlated_flip_count_probs(params: CorrelatedParams) -> np.ndarray:
    """Probability of m = 0..3 flipped qubits under the correlated channel."""
    p, q = params.p, params.q
    P = 1.0 - p
    both = q * (2 - q)
    return np.array([
        P**3 * (1 - q) ** 2 + p**2 * P * both,
        p * P**2 * (3 - both) + p**3 * both,
        P**3 * both + p**2 * P * (3 - both),
        p * P**2 * both + p**3 * (1 - q) ** 2,
    ])


def correlated_syndrome_probs(params: CorrelatedParams) -> dict[str, float]:
    p, q = params.p, params.q
    even = 1.0 - 3.0 * p * (1 - p)
    odd = p * (1 - p)
    end = even * q * (1 - q) + odd * (1 - q + q**2)
    return {
        "00": even * (1 - q) ** 2 + odd * q * (2 - q),
        "10": end,
        "01": end,
        "11": even * q**2 + odd * (1 - q**2),
    }


def correlated_syndrome_probs_reduced(params: CorrelatedParams) -> dict[str, float]:
    """Same probabilities written around the uncorrelated ones, with (1-2p)^2 factors."""
    p, q = params.p, params.q
    base = p * (1 - p)
    d = (1 - 2 * p) ** 2
    return {
        "00": 1 - 3 * base - q * (2 - q) * d,
        "10": base + q * (1 - q) * d,
        "01": base + q * (1 - q) * d,
        "11": base + q**2 * d,
    }


def uncorrelated_syndrome_probs(p: float) -> dict[str, float]:
    odd = p * (1 - p)
    return {"00": 1 - 3 * odd, "10": odd, "01": odd, "11": odd}


def _syndrome_table(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Array [4, ...] of syndrome probabilities, broadcasting p against q."""
    base = p * (1 - p)
    d = (1 - 2 * p) ** 2
    end = base + q * (1 - q) * d
    return np.stack(np.broadcast_arrays(1 - 3 * base - q * (2 - q) * d, end, end, base + q**2 * d))


def trapezoid_weights(axis: np.ndarray) -> np.ndarray:
    """Normalized trapezoid-rule weights; a single point gets weight 1."""
    if axis.size == 1:
        return np.ones(1)
    w = np.empty_like(axis)
    h = np.diff(axis)
    w[0] = h[0] / 2
    w[-1] = h[-1] / 2
    w[1:-1] = (h[:-1] + h[1:]) / 2
    return w / w.sum()


@dataclass(frozen=True)
class HypothesisPrior:
    p_range: tuple[float, float] = (0.0, 0.1)
    q_range: tuple[float, float] = (0.0, 0.1)
    p_points: int = 201
    q_points: int = 201

    def __post_init__(self):
        for lo, hi in (self.p_range, self.q_range):
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"range ({lo}, {hi}) not inside [0, 1]")

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        p = np.linspace(*self.p_range, self.p_points) if self.p_range[1] > self.p_range[0] else np.array([self.p_range[0]])
        q = np.linspace(*self.q_range, self.q_points) if self.q_range[1] > self.q_range[0] else np.array([self.q_range[0]])
        return p, q


@dataclass
class EvidenceState:
    """Running evidence for H0 and H1 plus each hypothesis's parameter posterior.

    ``weights[0]`` is over the p axis (H0); ``weights[1]`` over the (p, q) grid (H1).
    Log-evidences are sums of log predictive probabilities, so they never underflow.
    """

    p_axis: np.ndarray
    q_axis: np.ndarray
    weights: list[np.ndarray]
    log_evidence: np.ndarray
    rounds: int = 0
    log_prior: np.ndarray = field(default_factory=lambda: np.log([0.5, 0.5]))
    _tables: list[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_prior(cls, prior: HypothesisPrior = HypothesisPrior(),
                   hypothesis_prior: tuple[float, float] = (0.5, 0.5)) -> "EvidenceState":
        p, q = prior.axes()
        wp, wq = trapezoid_weights(p), trapezoid_weights(q)
        return cls(p, q, [wp.copy(), np.outer(wp, wq)], np.zeros(2), 0, np.log(np.asarray(hypothesis_prior, float)))

    def __post_init__(self):
        if self._tables is None:
            self._tables = [
                _syndrome_table(self.p_axis, 0.0),
                _syndrome_table(self.p_axis[:, None], self.q_axis[None, :]),
            ]

    def copy(self) -> "EvidenceState":
        return EvidenceState(self.p_axis, self.q_axis, [w.copy() for w in self.weights],
                             self.log_evidence.copy(), self.rounds, self.log_prior.copy(), self._tables)

    def posterior(self) -> np.ndarray:
        """(Pr(H0|D), Pr(H1|D))."""
        z = self.log_evidence + self.log_prior
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()

    def predictive(self, hypothesis: int | str, syndrome: str) -> float:
        h = _hyp_index(hypothesis)
        return float(np.sum(self.weights[h] * self._tables[h][REP3_SYNDROMES.index(syndrome)]))

    def update_inplace(self, syndrome_index: int) -> None:
        for h in (0, 1):
            w = self.weights[h] * self._tables[h][syndrome_index]
            pred = w.sum()
            self.log_evidence[h] += np.log(pred)
            w /= pred
            self.weights[h] = w
        self.rounds += 1


def _hyp_index(hypothesis) -> int:
    if isinstance(hypothesis, str):
        return HYPOTHESES.index(hypothesis)
    return int(hypothesis)


def marginal_syndrome_prob(hypothesis, state: EvidenceState, syndrome: str) -> float:
    """Predictive probability of ``syndrome`` under a hypothesis's current parameter weights."""
    return state.predictive(hypothesis, syndrome)


def sequential_update(state: EvidenceState, syndrome: str) -> EvidenceState:
    new = state.copy()
    new.update_inplace(REP3_SYNDROMES.index(syndrome))
    return new


def sample_syndromes(params: CorrelatedParams, rounds: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw flip patterns from the 8-outcome distribution; return syndrome indices and failure flags."""
    probs = correlated_error_string_probs(params)
    weights = np.array([probs[s] for s in FLIP_PATTERNS])
    draws = rng.choice(len(FLIP_PATTERNS), size=rounds, p=weights / weights.sum())
    synd_of = np.array([REP3_SYNDROMES.index(parity_syndrome(s)) for s in FLIP_PATTERNS])
    flips_of = np.array([s.count("1") for s in FLIP_PATTERNS])
    return synd_of[draws], flips_of[draws] >= 2


@dataclass
class HypothesisSummary:
    """Per-round quantiles (over runs) of both hypothesis posteriors; row 0 is the prior."""

    round: np.ndarray
    h0: np.ndarray  # shape (3, rounds+1): q25, median, q75
    h1: np.ndarray
    runs: int
    true_hypothesis: str

    COLUMNS = ("round", "h0_median", "h0_q25", "h0_q75", "h1_median", "h1_q25", "h1_q75")

    def rows(self):
        for k in range(self.round.size):
            yield (int(self.round[k]), float(self.h0[1, k]), float(self.h0[0, k]), float(self.h0[2, k]),
                   float(self.h1[1, k]), float(self.h1[0, k]), float(self.h1[2, k]))

    def median_true(self) -> np.ndarray:
        return (self.h0 if self.true_hypothesis == "H0" else self.h1)[1]


def run_hypothesis(true_hypothesis: str, rounds: int, rng: np.random.Generator,
                   prior: HypothesisPrior = HypothesisPrior(),
                   true_params: CorrelatedParams | None = None) -> np.ndarray:
    """One run; returns Pr(H0|D) after rounds 0..rounds."""
    if true_params is None:
        p = rng.uniform(*prior.p_range)
        q = rng.uniform(*prior.q_range) if true_hypothesis == "H1" else 0.0
        true_params = CorrelatedParams(p, q)
    synd, _ = sample_syndromes(true_params, rounds, rng)
    state = EvidenceState.from_prior(prior)
    trace = np.empty(rounds + 1)
    trace[0] = state.posterior()[0]
    for r, s in enumerate(synd, start=1):
        state.update_inplace(s)
        trace[r] = state.posterior()[0]
    return trace


def simulate_hypothesis_experiment(true_hypothesis: str, rounds: int, n_runs: int, seed: int,
                                   prior: HypothesisPrior = HypothesisPrior(),
                                   true_params: CorrelatedParams | None = None) -> HypothesisSummary:
    """Repeat :func:`run_hypothesis` on per-run substreams and take quantiles over runs."""
    from .estimation import run_rng

    if true_hypothesis not in HYPOTHESES:
        raise ValueError(f"true_hypothesis must be one of {HYPOTHESES}")
    if rounds < 1 or n_runs < 1:
        raise ValueError("rounds and n_runs must be >= 1")
    h0 = np.stack([run_hypothesis(true_hypothesis, rounds, run_rng(seed, i), prior, true_params)
                   for i in range(n_runs)])
    qs = [0.25, 0.5, 0.75]
    return HypothesisSummary(np.arange(rounds + 1), np.quantile(h0, qs, axis=0),
                             np.quantile(1.0 - h0, qs, axis=0), n_runs, true_hypothesis)
