"""Shared, expensive simulation batches (computed once per session)."""
import time

import pytest

from qecinsitu.estimation import ControlPolicy, GaussianPrior2D, aggregate_runs, fiducial_tau, run_batch

ESTIMATION_SEED = 2014
RUNS = 100
ROUNDS = 10_000


class TimedBatch:
    def __init__(self, policy_name: str, seed: int = ESTIMATION_SEED):
        prior = GaussianPrior2D()
        start = time.perf_counter()
        tau = fiducial_tau(prior)
        fixed = None if policy_name in ("random-tau", "unitary-and-random-tau") else tau
        self.traces = run_batch(prior, ControlPolicy(policy_name, fixed_tau=fixed), ROUNDS, RUNS, seed)
        self.summary = aggregate_runs(self.traces)
        self.seconds = time.perf_counter() - start


_cache = {}


def estimation_batch(policy_name: str) -> TimedBatch:
    if policy_name not in _cache:
        _cache[policy_name] = TimedBatch(policy_name)
    return _cache[policy_name]


@pytest.fixture(scope="session")
def batch():
    return estimation_batch


HYPOTHESIS_SEED = 7
_hyp_cache = {}


def hypothesis_batch(true_hypothesis: str, forced: tuple[float, float] | None = None):
    """100 runs x 1000 rounds; returns (summary, seconds)."""
    from qecinsitu.model_select import CorrelatedParams, simulate_hypothesis_experiment

    key = (true_hypothesis, forced)
    if key not in _hyp_cache:
        start = time.perf_counter()
        params = CorrelatedParams(*forced) if forced else None
        summary = simulate_hypothesis_experiment(true_hypothesis, 1000, 100, HYPOTHESIS_SEED, true_params=params)
        _hyp_cache[key] = (summary, time.perf_counter() - start)
    return _hyp_cache[key]


@pytest.fixture(scope="session")
def hyp_batch():
    return hypothesis_batch
