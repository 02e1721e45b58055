"""Benchmark fitness: how strongly a function separates GA from DE.

A candidate benchmark is scored by running T seeded trials of each
algorithm and pooling the 2T best objective values into one ascending
ranking.  The fitness is the rank share of the target algorithm A1 plus
a penalty that discourages unboundedly negative landscapes:

    fitness = sum(rank(q_A1_i)) / sum(1..2T) + alpha * max(0, -min_i q_A1_i)

Lower is better; with all A1 trials strictly ahead the rank share
reaches its floor sum(1..T)/sum(1..2T) (about 0.2561 at T=20).  Ranking
is scale free, so only the ordering of outcomes matters.  A benchmark
that produces any invalid trial receives a large constant penalty
instead.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expressions import Expression
from .kernels import CAUSE_OK, compile_program, eval_program
from .optimizers import DeConfig, GaConfig, SearchSpace, TrialOutcome, run_de, run_ga

ALGORITHM_TAGS = ("GA", "DE")
_TAG_CODES = {"GA": 1, "DE": 2}


@dataclass(frozen=True)
class FitnessConfig:
    trials: int = 20
    alpha: float = 10.0
    invalid_penalty: float = 1e6
    a1: str = "GA"
    a2: str = "DE"
    base_seed: int = 0
    prevalidation_samples: int = 1000

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.invalid_penalty <= 0:
            raise ValueError("invalid_penalty must be positive")
        for tag in (self.a1, self.a2):
            if tag not in ALGORITHM_TAGS:
                raise ValueError(f"unknown algorithm tag {tag!r}; choose from {ALGORITHM_TAGS}")
        if self.a1 == self.a2:
            raise ValueError("a1 and a2 must differ")


@dataclass(frozen=True)
class BenchmarkEvaluation:
    fitness: float
    rank_term: float
    penalty_term: float
    a1_best: tuple[float, ...]
    a2_best: tuple[float, ...]
    any_invalid: bool


# ------------------------------------------------------------------ ranking


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """Ascending 1-based ranks with ties sharing their average rank."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    order = np.argsort(values, kind="stable")
    ranks = np.empty(n, dtype=np.float64)
    sorted_values = values[order]
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_values[j + 1] == sorted_values[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def pooled_rank_fitness(
    a1_values: Sequence[float],
    a2_values: Sequence[float],
    alpha: float,
) -> tuple[float, float, float]:
    """Returns (fitness, rank_term, penalty_term) for valid trial bests.

    The penalty activates only when A1's best trial value over all
    trials is negative.
    """
    a1 = np.asarray(a1_values, dtype=np.float64)
    a2 = np.asarray(a2_values, dtype=np.float64)
    if a1.size == 0 or a2.size == 0:
        raise ValueError("both algorithms need at least one trial value")
    if not (np.all(np.isfinite(a1)) and np.all(np.isfinite(a2))):
        raise ValueError("trial best values must be finite")
    pooled = np.concatenate([a1, a2])
    ranks = average_ranks(pooled)
    total = pooled.size * (pooled.size + 1) / 2.0
    rank_term = float(ranks[: a1.size].sum() / total)
    penalty_term = float(alpha * max(0.0, -a1.min()))
    return rank_term + penalty_term, rank_term, penalty_term


def rank_term_floor(trials: int) -> float:
    """Best achievable rank term: A1 sweeps ranks 1..T of the 2T pool."""
    top = trials * (trials + 1) / 2.0
    total = 2 * trials * (2 * trials + 1) / 2.0
    return top / total


# ------------------------------------------------------------ trial running


def derive_trial_seed(base_seed: int, tag: str, index: int) -> int:
    """Stable per-trial seed from (base seed, algorithm tag, trial index)."""
    words = np.random.SeedSequence([base_seed, _TAG_CODES[tag], index]).generate_state(2)
    return int(words[0]) | (int(words[1]) << 32)


def _run_one(tag: str, objective, space, ga_config, de_config, seed: int) -> TrialOutcome:
    if tag == "GA":
        return run_ga(objective, space, ga_config, seed)
    return run_de(objective, space, de_config, seed)


def run_trials(
    expr: Expression,
    config: FitnessConfig,
    space: SearchSpace,
    ga_config: GaConfig,
    de_config: DeConfig,
    workers: int = 1,
) -> dict[str, list[TrialOutcome]]:
    """All 2T seeded trials, keyed by algorithm tag.

    Trials are independent, so they may run on a thread pool; results
    are assembled by index and identical to a sequential run.
    """
    program = compile_program(expr)
    jobs = [
        (tag, i, derive_trial_seed(config.base_seed, tag, i))
        for tag in (config.a1, config.a2)
        for i in range(config.trials)
    ]
    outcomes: dict[str, list[TrialOutcome | None]] = {
        config.a1: [None] * config.trials,
        config.a2: [None] * config.trials,
    }
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = pool.map(
                lambda job: _run_one(job[0], program, space, ga_config, de_config, job[2]),
                jobs,
            )
            for (tag, i, _), outcome in zip(jobs, results):
                outcomes[tag][i] = outcome
    else:
        for tag, i, seed in jobs:
            outcomes[tag][i] = _run_one(tag, program, space, ga_config, de_config, seed)
    return {tag: list(row) for tag, row in outcomes.items()}


def evaluate_benchmark(
    expr: Expression,
    config: FitnessConfig = FitnessConfig(),
    space: SearchSpace | None = None,
    ga_config: GaConfig = GaConfig(),
    de_config: DeConfig = DeConfig(),
    workers: int = 1,
) -> BenchmarkEvaluation:
    """Score one benchmark; invalid trials collapse to the flat penalty."""
    if space is None:
        space = SearchSpace(dimension=expr.dimension)
    outcomes = run_trials(expr, config, space, ga_config, de_config, workers)
    a1_best = tuple(o.best_value for o in outcomes[config.a1])
    a2_best = tuple(o.best_value for o in outcomes[config.a2])
    invalid = any(not o.valid for row in outcomes.values() for o in row)
    if invalid:
        return BenchmarkEvaluation(
            fitness=config.invalid_penalty,
            rank_term=float("nan"),
            penalty_term=float("nan"),
            a1_best=a1_best,
            a2_best=a2_best,
            any_invalid=True,
        )
    fitness, rank_term, penalty_term = pooled_rank_fitness(a1_best, a2_best, config.alpha)
    return BenchmarkEvaluation(
        fitness=fitness,
        rank_term=rank_term,
        penalty_term=penalty_term,
        a1_best=a1_best,
        a2_best=a2_best,
        any_invalid=False,
    )


# -------------------------------------------------------------- validation


def prevalidate(
    expr: Expression,
    space: SearchSpace | None = None,
    samples: int = 1000,
    seed: int = 0,
) -> bool:
    """True when the expression is finite at ``samples`` uniform points.

    This is the acceptance gate for LLM-proposed formulas: a candidate
    enters the population only if it survives this sweep.
    """
    if space is None:
        space = SearchSpace(dimension=expr.dimension)
    rng = np.random.default_rng(seed)
    X = rng.uniform(space.lower, space.upper, (samples, space.dimension))
    _, causes = eval_program(compile_program(expr), X)
    return bool(np.all(causes == CAUSE_OK))
