"""Landscape and lineage analysis for generated benchmarks.

Three families of tools live here.  Global sensitivity: Sobol' first
and total order indices from a Saltelli sampling scheme.  Local
curvature: finite-difference gradient and Hessian summaries over a
Latin hypercube.  Lineage: Levenshtein distances between expression
strings, a classical MDS embedding of those distances, operator usage
counts along an individual's ancestry, and plot-ready fitness and
convergence tables for a finished run.

Everything is deterministic given a seed and returns plain data; no
figures are rendered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .engine import Benchmark, LineageEvent, RunRecord
from .expressions import Expression
from .fitness import run_trials
from .kernels import CAUSE_OK, cause_string, compile_program, eval_program
from .optimizers import SearchSpace

DEGENERATE_MAGNITUDE = 1e-12


class InvalidSamplePoint(ValueError):
    """An analysis sample hit an undefined region of the expression."""

    def __init__(self, point: np.ndarray, cause: str):
        coords = ", ".join(f"{v:.6g}" for v in np.asarray(point))
        super().__init__(f"invalid evaluation ({cause}) at point [{coords}]")
        self.point = np.asarray(point)
        self.cause = cause


# ------------------------------------------------------------ Sobol indices


@dataclass(frozen=True)
class SobolResult:
    first_order: tuple[float, ...]
    total_order: tuple[float, ...]
    total_variance: float
    base_samples: int


def _eval_or_raise(program, X: np.ndarray) -> np.ndarray:
    values, causes = eval_program(program, X)
    bad = np.flatnonzero(causes != CAUSE_OK)
    if bad.size:
        i = int(bad[0])
        raise InvalidSamplePoint(X[i], cause_string(int(causes[i])))
    return values


def sobol_indices(
    expr: Expression,
    space: SearchSpace | None = None,
    base_samples: int = 1024,
    seed: int = 0,
) -> SobolResult:
    """Saltelli-scheme first/total order indices over the uniform box.

    Two independent base matrices A and B are drawn uniformly; the
    cross matrices A_B^(i) swap one column of A for B's.  First-order
    indices use the covariance estimator mean(fB (fABi - fA)) / V and
    total-order indices use 0.5 mean((fA - fABi)^2) / V, with outputs
    centered by the pooled mean of fA and fB.  Costs (D + 2) x
    base_samples evaluations; any invalid evaluation aborts.
    """
    if space is None:
        space = SearchSpace(dimension=expr.dimension)
    if base_samples < 2:
        raise ValueError("base_samples must be >= 2")
    d = space.dimension
    rng = np.random.default_rng(seed)
    A = rng.uniform(space.lower, space.upper, (base_samples, d))
    B = rng.uniform(space.lower, space.upper, (base_samples, d))
    program = compile_program(expr)
    f_a = _eval_or_raise(program, A)
    f_b = _eval_or_raise(program, B)
    pooled = np.concatenate([f_a, f_b])
    mean = pooled.mean()
    variance = float(np.mean((pooled - mean) ** 2))
    if variance <= 0.0:
        raise ValueError("constant output: total variance is zero")
    f_a = f_a - mean
    f_b = f_b - mean
    first = np.empty(d)
    total = np.empty(d)
    for i in range(d):
        AB = A.copy()
        AB[:, i] = B[:, i]
        f_ab = _eval_or_raise(program, AB) - mean
        first[i] = np.mean(f_b * (f_ab - f_a)) / variance
        total[i] = 0.5 * np.mean((f_a - f_ab) ** 2) / variance
    return SobolResult(
        first_order=tuple(float(v) for v in first),
        total_order=tuple(float(v) for v in total),
        total_variance=variance,
        base_samples=base_samples,
    )


# -------------------------------------------------------- curvature features


@dataclass(frozen=True)
class CurvatureFeatures:
    grad_ratio_median: float
    hessian_cond_lower_quartile: float
    sample_count: int
    skipped_count: int
    fd_step_gradient: float
    fd_step_hessian: float


def _stencil(x: np.ndarray, h_grad: float, h_hess: float) -> np.ndarray:
    """All evaluation points needed for one gradient plus Hessian."""
    d = x.size
    rows = [x]
    for i in range(d):
        for h in (h_grad, h_hess):
            for sign in (1.0, -1.0):
                p = x.copy()
                p[i] += sign * h
                rows.append(p)
    for i in range(d):
        for j in range(i + 1, d):
            for si in (1.0, -1.0):
                for sj in (1.0, -1.0):
                    p = x.copy()
                    p[i] += si * h_hess
                    p[j] += sj * h_hess
                    rows.append(p)
    return np.asarray(rows)


def _point_features(
    program, x: np.ndarray, h_grad: float, h_hess: float
) -> tuple[float, float] | None:
    """(gradient ratio, Hessian condition) at x, or None to skip the point."""
    d = x.size
    points = _stencil(x, h_grad, h_hess)
    values, causes = eval_program(program, points)
    if np.any(causes != CAUSE_OK):
        return None
    f0 = values[0]
    grad = np.empty(d)
    diag = np.empty(d)
    k = 1
    for i in range(d):
        gp, gm, hp, hm = values[k], values[k + 1], values[k + 2], values[k + 3]
        grad[i] = (gp - gm) / (2.0 * h_grad)
        diag[i] = (hp - 2.0 * f0 + hm) / h_hess**2
        k += 4
    hess = np.diag(diag)
    for i in range(d):
        for j in range(i + 1, d):
            fpp, fpm, fmp, fmm = values[k], values[k + 1], values[k + 2], values[k + 3]
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4.0 * h_hess**2)
            k += 4
    hess = 0.5 * (hess + hess.T)
    eigenvalues = np.linalg.eigvalsh(hess)
    grad_mag = np.abs(grad)
    eig_mag = np.abs(eigenvalues)
    if grad_mag.min() < DEGENERATE_MAGNITUDE or eig_mag.min() < DEGENERATE_MAGNITUDE:
        return None
    return float(grad_mag.max() / grad_mag.min()), float(eig_mag.max() / eig_mag.min())


def curvature_features(
    expr: Expression,
    space: SearchSpace | None = None,
    sample_points: int = 100,
    fd_step_gradient: float = 1e-5,
    fd_step_hessian: float = 1e-3,
    seed: int = 0,
) -> CurvatureFeatures:
    """Median gradient anisotropy and lower-quartile Hessian condition.

    Sample points come from a Latin hypercube over the box.  At each
    point the gradient and Hessian are estimated by central
    differences; the gradient feature is max|g_i| / min|g_i| and the
    Hessian feature is max|lambda| / min|lambda| of the symmetrized
    estimate.  Points with a magnitude below 1e-12 in either minimum,
    or with any invalid stencil evaluation, are skipped and counted.
    """
    if space is None:
        space = SearchSpace(dimension=expr.dimension)
    if sample_points < 4:
        raise ValueError("sample_points must be >= 4")
    sampler = qmc.LatinHypercube(d=space.dimension, seed=seed)
    unit = sampler.random(sample_points)
    X = qmc.scale(unit, space.lower, space.upper)
    program = compile_program(expr)
    ratios: list[float] = []
    conditions: list[float] = []
    skipped = 0
    for x in X:
        features = _point_features(program, x, fd_step_gradient, fd_step_hessian)
        if features is None:
            skipped += 1
            continue
        ratios.append(features[0])
        conditions.append(features[1])
    if len(ratios) < 4:
        raise ValueError(
            f"only {len(ratios)} usable sample points ({skipped} skipped); need at least 4"
        )
    return CurvatureFeatures(
        grad_ratio_median=float(np.median(ratios)),
        hessian_cond_lower_quartile=float(np.percentile(conditions, 25)),
        sample_count=len(ratios),
        skipped_count=skipped,
        fd_step_gradient=fd_step_gradient,
        fd_step_hessian=fd_step_hessian,
    )


# ------------------------------------------------------- string distances


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, two-row dynamic program."""
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def pairwise_levenshtein(texts: list[str]) -> np.ndarray:
    n = len(texts)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = levenshtein(texts[i], texts[j])
    return out


def mds_embed(distances: np.ndarray, k: int = 2) -> np.ndarray:
    """Classical (Torgerson) MDS of a symmetric distance matrix.

    Double-centers -0.5 D^2, takes the top-k positive eigenpairs, and
    scales eigenvectors by the square root of their eigenvalues.
    Missing positive eigenvalues zero-pad the remaining axes.  Each
    axis's sign is fixed so its largest-magnitude coordinate is
    positive, which makes the embedding deterministic.
    """
    D = np.asarray(distances, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("distance matrix must be square")
    if not np.allclose(D, D.T):
        raise ValueError("distance matrix must be symmetric")
    if np.any(D < 0):
        raise ValueError("distances must be nonnegative")
    if not np.allclose(np.diag(D), 0.0):
        raise ValueError("distance matrix must have a zero diagonal")
    n = D.shape[0]
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ (D**2) @ J
    eigenvalues, eigenvectors = np.linalg.eigh(B)
    order = np.argsort(eigenvalues)[::-1]
    coords = np.zeros((n, k))
    for axis, idx in enumerate(order[:k]):
        value = eigenvalues[idx]
        if value <= 0.0:
            continue
        coords[:, axis] = eigenvectors[:, idx] * np.sqrt(value)
    for axis in range(k):
        column = coords[:, axis]
        anchor = int(np.argmax(np.abs(column)))
        if column[anchor] < 0:
            coords[:, axis] = -column
    return coords


# ---------------------------------------------------------- lineage counts


@dataclass(frozen=True)
class OperatorStats:
    individuals: int
    operations: int
    crossover_ratio: float
    ratio_defined: bool


def operator_stats(lineage: list[LineageEvent], best_id: int) -> OperatorStats:
    """Ancestry counts for one individual.

    Walks parent edges of crossover and mutation events only; seed and
    initialization members are terminal ancestors.  Events whose
    offspring text was identical to a prompt example are excluded from
    the operation counts, matching how lineage statistics discount
    no-op generations, though their edges are still traversed.
    """
    events = {event.child_id: event for event in lineage}
    if best_id not in events:
        raise ValueError(f"unknown benchmark id {best_id}")
    visited: set[int] = set()
    frontier = [best_id]
    crossover = 0
    mutation = 0
    while frontier:
        node = frontier.pop()
        if node in visited:
            continue
        visited.add(node)
        event = events[node]
        if event.kind not in ("crossover", "mutation"):
            continue
        if not event.identical:
            if event.kind == "crossover":
                crossover += 1
            else:
                mutation += 1
        frontier.extend(event.parent_ids)
    operations = crossover + mutation
    return OperatorStats(
        individuals=len(visited),
        operations=operations,
        crossover_ratio=crossover / operations if operations else 0.0,
        ratio_defined=operations > 0,
    )


# ------------------------------------------------------- run trajectories


@dataclass(frozen=True)
class TraceTable:
    benchmark_id: int
    expression: str
    columns: tuple[str, ...]
    rows: tuple[tuple[float | None, ...], ...]


@dataclass(frozen=True)
class TrajectoryTables:
    fitness_rows: tuple[tuple[int, float, float], ...]
    traces: tuple[TraceTable, ...]


def _distinct_benchmarks(record: RunRecord) -> list[Benchmark]:
    seen: set[str] = set()
    out = []
    for population in record.populations:
        for benchmark in population:
            if benchmark.text in seen:
                continue
            seen.add(benchmark.text)
            out.append(benchmark)
    return out


def trajectory_export(record: RunRecord, workers: int = 1) -> TrajectoryTables:
    """Plot-ready tables: fitness by generation plus convergence traces.

    The fitness table has one row per generation: (generation, best
    fitness, median fitness).  Each distinct benchmark in the run gets
    a trace table whose columns are the per-generation best objective
    value of every inner-optimizer trial, recomputed under the run's
    seeds so they match the values the run scored.
    """
    fitness_rows = tuple(
        (g, float(min(b.fitness for b in pop)), float(np.median([b.fitness for b in pop])))
        for g, pop in enumerate(record.populations)
    )
    config = record.config
    tables = []
    for benchmark in _distinct_benchmarks(record):
        outcomes = run_trials(
            benchmark.expression,
            config.fitness,
            SearchSpace(dimension=config.dimension),
            config.ga,
            config.de,
            workers,
        )
        columns = []
        traces = []
        for tag in (config.fitness.a1, config.fitness.a2):
            for t, outcome in enumerate(outcomes[tag]):
                columns.append(f"{tag}_trial{t}")
                traces.append(outcome.best_trace)
        depth = max(len(trace) for trace in traces)
        rows = tuple(
            tuple(trace[g] if g < len(trace) else None for trace in traces)
            for g in range(depth)
        )
        tables.append(
            TraceTable(
                benchmark_id=benchmark.id,
                expression=benchmark.text,
                columns=tuple(columns),
                rows=rows,
            )
        )
    return TrajectoryTables(fitness_rows=fitness_rows, traces=tuple(tables))
