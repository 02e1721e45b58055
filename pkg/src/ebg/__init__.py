"""Evolutionary generation of symbolic benchmarks that separate optimizers.

The package evolves closed-form objective functions with an LLM acting
as the variation operator, scores each candidate by how strongly a
target algorithm (GA or DE) outperforms its rival on it, and ships the
landscape tooling (Sobol indices, curvature features, lineage analysis)
used to study the evolved functions.
"""

from ebg.engine import Benchmark, EngineConfig, RunRecord, load_run, run
from ebg.expressions import Expression, parse
from ebg.fitness import FitnessConfig, evaluate_benchmark

__version__ = "0.1.0"

__all__ = [
    "Benchmark",
    "EngineConfig",
    "Expression",
    "FitnessConfig",
    "RunRecord",
    "evaluate_benchmark",
    "load_run",
    "parse",
    "run",
    "__version__",
]
