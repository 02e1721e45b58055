"""Command-line interface: generate runs, score and analyze benchmarks.

One JSON config file carries every knob: the engine block at the top
level, plus ``backend`` (chat endpoint or transcript replay) and
``analysis`` (sample counts and finite-difference steps) blocks.
``--print-default-config`` emits the full schema with defaults.

Exit codes: 0 success, 1 for validation problems (every violated field
is listed), 2 for runtime aborts such as transport failures, exhausted
retry budgets, or invalid analysis samples.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

from .analysis import (
    InvalidSamplePoint,
    curvature_features,
    mds_embed,
    operator_stats,
    pairwise_levenshtein,
    sobol_indices,
    trajectory_export,
)
from .engine import (
    EngineAbort,
    EngineConfig,
    RunRecord,
    config_from_dict,
    load_run,
    run,
)
from .expressions import ParseError, SymbolError, DimensionError, parse
from .fitness import FitnessConfig, evaluate_benchmark, prevalidate
from .llm import (
    LiveBackend,
    RecordingBackend,
    ReplayBackend,
    RetryPolicy,
    TranscriptMissError,
    TransportError,
)
from .optimizers import DeConfig, GaConfig, SearchSpace

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

BACKEND_MODES = ("live", "replay", "record")

ENV_ENDPOINT = "EBG_API_URL"
ENV_API_KEY = "EBG_API_KEY"
ENV_MODEL = "EBG_MODEL"


# ------------------------------------------------------------------ config


def default_config() -> dict:
    """The full config schema with every default filled in."""
    return {
        "population_size": 10,
        "max_generations": 20,
        "crossover_rate": 0.5,
        "dimension": 5,
        "seed": 0,
        "workers": 1,
        "fitness": dataclasses.asdict(FitnessConfig()),
        "ga": dataclasses.asdict(GaConfig()),
        "de": dataclasses.asdict(DeConfig()),
        "retry": dataclasses.asdict(RetryPolicy()),
        "backend": {
            "mode": "live",
            "endpoint_url": "",
            "api_key": None,
            "model": "",
            "temperature": 0.8,
            "max_tokens": 512,
            "transcript": None,
            "strict_replay": True,
        },
        "analysis": {
            "sobol_base_samples": 1024,
            "curvature_points": 100,
            "fd_step_gradient": 1e-5,
            "fd_step_hessian": 1e-3,
            "seed": 0,
        },
    }


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | None) -> dict:
    """User config merged over defaults; a missing path means defaults."""
    data = default_config()
    if path is not None:
        with open(path, encoding="utf-8") as handle:
            user = json.load(handle)
        unknown = set(user) - set(data)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data = _merge(data, user)
    return data


def apply_env_overrides(data: dict, env: dict[str, str] | None = None) -> dict:
    env = os.environ if env is None else env
    backend = dict(data["backend"])
    if env.get(ENV_ENDPOINT):
        backend["endpoint_url"] = env[ENV_ENDPOINT]
    if env.get(ENV_API_KEY):
        backend["api_key"] = env[ENV_API_KEY]
    if env.get(ENV_MODEL):
        backend["model"] = env[ENV_MODEL]
    return {**data, "backend": backend}


def validate_config(data: dict, require_backend: bool = True) -> list[str]:
    """Every violated field, one message each; empty means valid.

    Commands that never contact a backend (evaluate, analyze) skip the
    backend block so a bare default config works offline.
    """
    problems: list[str] = []
    if data["population_size"] < 2:
        problems.append("population_size: must be >= 2")
    if data["max_generations"] < 1:
        problems.append("max_generations: must be >= 1")
    if not 0.0 <= data["crossover_rate"] <= 1.0:
        problems.append("crossover_rate: must lie in [0, 1]")
    if data["dimension"] < 1:
        problems.append("dimension: must be >= 1")
    if data["workers"] < 1:
        problems.append("workers: must be >= 1")
    for block, factory in (
        ("fitness", FitnessConfig),
        ("ga", GaConfig),
        ("de", DeConfig),
        ("retry", RetryPolicy),
    ):
        try:
            factory(**data[block])
        except (TypeError, ValueError) as err:
            problems.append(f"{block}: {err}")
    if require_backend:
        backend = data["backend"]
        mode = backend.get("mode")
        if mode not in BACKEND_MODES:
            problems.append(f"backend.mode: must be one of {', '.join(BACKEND_MODES)}")
        if mode in ("live", "record") and not backend.get("endpoint_url"):
            problems.append("backend.endpoint_url: required in live and record modes")
        if mode == "replay" and not backend.get("transcript"):
            problems.append("backend.transcript: replay mode needs a transcript path")
    analysis = data["analysis"]
    if analysis["sobol_base_samples"] < 2:
        problems.append("analysis.sobol_base_samples: must be >= 2")
    if analysis["curvature_points"] < 4:
        problems.append("analysis.curvature_points: must be >= 4")
    for step in ("fd_step_gradient", "fd_step_hessian"):
        if analysis[step] <= 0:
            problems.append(f"analysis.{step}: must be positive")
    return problems


def engine_config_from(data: dict, output_dir: str | None) -> EngineConfig:
    engine_keys = {
        k: data[k]
        for k in (
            "population_size",
            "max_generations",
            "crossover_rate",
            "dimension",
            "seed",
            "workers",
            "fitness",
            "ga",
            "de",
            "retry",
        )
    }
    engine_keys["output_dir"] = output_dir
    return config_from_dict(engine_keys)


def build_backend(data: dict, out_dir: Path | None):
    backend = data["backend"]
    mode = backend["mode"]
    if mode == "replay":
        return ReplayBackend.from_path(backend["transcript"], strict=backend["strict_replay"])
    live = LiveBackend(
        endpoint_url=backend["endpoint_url"],
        api_key=backend["api_key"],
        model=backend["model"],
        temperature=backend["temperature"],
        max_tokens=backend["max_tokens"],
    )
    if mode == "record":
        if out_dir is None:
            raise ValueError("record mode needs an output directory")
        return RecordingBackend(live, out_dir / "transcript.jsonl")
    return live


# ------------------------------------------------------------ subcommands


def _fail_validation(problems: list[str]) -> int:
    for problem in problems:
        print(f"config error: {problem}", file=sys.stderr)
    return EXIT_VALIDATION


def cmd_generate(args: argparse.Namespace) -> int:
    try:
        data = load_config(args.config)
    except (OSError, ValueError) as err:
        return _fail_validation([str(err)])
    data = apply_env_overrides(data)
    if args.replay is not None:
        data["backend"] = {**data["backend"], "mode": "replay", "transcript": args.replay}
    if args.seed is not None:
        data["seed"] = args.seed
    if args.workers is not None:
        data["workers"] = args.workers
    problems = validate_config(data)
    if problems:
        return _fail_validation(problems)
    out_dir = Path(args.out)
    config = engine_config_from(data, str(out_dir))
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        backend = build_backend(data, out_dir)
        record = run(config, backend)
    except (EngineAbort, TransportError, TranscriptMissError) as err:
        print(f"run aborted: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"best expression: {record.best.text}")
    print(f"best fitness: {record.best.fitness:.10g}")
    print(f"run directory: {out_dir}")
    return EXIT_OK


def _load_expression(args: argparse.Namespace, dimension: int):
    if args.expr is not None:
        text = args.expr
    else:
        text = Path(args.file).read_text(encoding="utf-8").strip()
    return parse(text, dimension)


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        data = load_config(args.config)
    except (OSError, ValueError) as err:
        return _fail_validation([str(err)])
    if args.seed is not None:
        data["fitness"] = {**data["fitness"], "base_seed": args.seed}
    problems = validate_config(data, require_backend=False)
    if problems:
        return _fail_validation(problems)
    try:
        expr = _load_expression(args, data["dimension"])
    except (OSError, ParseError, SymbolError, DimensionError) as err:
        print(f"bad expression: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    fitness_config = FitnessConfig(**data["fitness"])
    space = SearchSpace(dimension=data["dimension"])
    if not prevalidate(expr, space, fitness_config.prevalidation_samples, fitness_config.base_seed):
        print("expression failed pre-validation: invalid values on the search box", file=sys.stderr)
        return EXIT_VALIDATION
    workers = args.workers if args.workers is not None else data["workers"]
    evaluation = evaluate_benchmark(
        expr,
        fitness_config,
        space,
        GaConfig(**data["ga"]),
        DeConfig(**data["de"]),
        workers,
    )
    a1, a2 = fitness_config.a1, fitness_config.a2
    print(f"fitness: {evaluation.fitness:.10g}")
    print(f"rank term: {evaluation.rank_term:.10g}")
    print(f"penalty term: {evaluation.penalty_term:.10g}")
    print(f"trial  {a1:>12}  {a2:>12}")
    for i, (va, vb) in enumerate(zip(evaluation.a1_best, evaluation.a2_best)):
        print(f"{i:5d}  {va:12.5g}  {vb:12.5g}")
    payload = {
        "expression": args.expr if args.expr is not None else Path(args.file).read_text().strip(),
        "fitness": evaluation.fitness,
        "rank_term": None if math.isnan(evaluation.rank_term) else evaluation.rank_term,
        "penalty_term": None if math.isnan(evaluation.penalty_term) else evaluation.penalty_term,
        "any_invalid": evaluation.any_invalid,
        "trials": fitness_config.trials,
        a1: list(evaluation.a1_best),
        a2: list(evaluation.a2_best),
    }
    out = Path(args.out)
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        data = load_config(args.config)
    except (OSError, ValueError) as err:
        return _fail_validation([str(err)])
    problems = validate_config(data, require_backend=False)
    if problems:
        return _fail_validation(problems)
    analysis = data["analysis"]
    out_dir = Path(args.out)
    if args.run is not None:
        try:
            record = load_run(args.run)
        except (OSError, ValueError, KeyError) as err:
            print(f"cannot load run: {err}", file=sys.stderr)
            return EXIT_VALIDATION
        expr = record.best.expression
        text = record.best.text
    else:
        try:
            expr = parse(args.expr, data["dimension"])
        except (ParseError, SymbolError, DimensionError) as err:
            print(f"bad expression: {err}", file=sys.stderr)
            return EXIT_VALIDATION
        text = args.expr
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if args.what in ("sobol", "both"):
            result = sobol_indices(
                expr,
                base_samples=analysis["sobol_base_samples"],
                seed=analysis["seed"],
            )
            payload = {
                "expression": text,
                "first_order": list(result.first_order),
                "total_order": list(result.total_order),
                "total_variance": result.total_variance,
                "base_samples": result.base_samples,
            }
            (out_dir / "sobol.json").write_text(json.dumps(payload, indent=2) + "\n")
            print(f"wrote {out_dir / 'sobol.json'}")
        if args.what in ("curvature", "both"):
            features = curvature_features(
                expr,
                sample_points=analysis["curvature_points"],
                fd_step_gradient=analysis["fd_step_gradient"],
                fd_step_hessian=analysis["fd_step_hessian"],
                seed=analysis["seed"],
            )
            payload = {"expression": text, **dataclasses.asdict(features)}
            (out_dir / "curvature.json").write_text(json.dumps(payload, indent=2) + "\n")
            print(f"wrote {out_dir / 'curvature.json'}")
    except InvalidSamplePoint as err:
        print(f"analysis aborted: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as err:
        print(f"analysis aborted: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _dot_line(parent: int, child: int, style: str) -> str:
    return f"  b{parent} -> b{child} [style={style}];"


def write_lineage_outputs(record: RunRecord, out_dir: Path) -> None:
    individuals: dict[int, object] = {}
    for population in record.populations:
        for benchmark in population:
            individuals.setdefault(benchmark.id, benchmark)
    ids = sorted(individuals)
    texts = [individuals[i].text for i in ids]

    distances = pairwise_levenshtein(texts)
    with open(out_dir / "distances.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id_a", "id_b", "distance"])
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                writer.writerow([ids[i], ids[j], int(distances[i, j])])

    coords = mds_embed(distances, 2)
    with open(out_dir / "embedding.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "x", "y"])
        for i, benchmark_id in enumerate(ids):
            writer.writerow([benchmark_id, f"{coords[i, 0]:.6f}", f"{coords[i, 1]:.6f}"])

    stats = operator_stats(record.lineage, record.best.id)
    payload = {"best_id": record.best.id, **dataclasses.asdict(stats)}
    (out_dir / "operator_stats.json").write_text(json.dumps(payload, indent=2) + "\n")

    styles = {"crossover": "solid", "mutation": "dashed", "init_llm": "dotted"}
    lines = ["digraph lineage {", "  node [shape=box];"]
    for event in record.lineage:
        known = individuals.get(event.child_id)
        if known is not None:
            label = f"{event.child_id}\\n{known.fitness:.4g}"
        else:
            label = str(event.child_id)
        lines.append(f'  b{event.child_id} [label="{label}"];')
    for event in record.lineage:
        style = styles.get(event.kind)
        if style is None:
            continue
        for parent in event.parent_ids:
            lines.append(_dot_line(parent, event.child_id, style))
    lines.append("}")
    (out_dir / "lineage.dot").write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_lineage(args: argparse.Namespace) -> int:
    try:
        record = load_run(args.run)
    except (OSError, ValueError, KeyError) as err:
        print(f"cannot load run: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = Path(args.out if args.out is not None else args.run)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        write_lineage_outputs(record, out_dir)
    except ValueError as err:
        print(f"lineage analysis failed: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    for name in ("distances.csv", "embedding.csv", "operator_stats.json", "lineage.dot"):
        print(f"wrote {out_dir / name}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ebg",
        description="Evolve optimizer-discriminating benchmark functions and analyze them.",
    )
    parser.add_argument(
        "--print-default-config",
        action="store_true",
        help="print the full default config as JSON and exit",
    )
    sub = parser.add_subparsers(dest="command")

    generate = sub.add_parser("generate", help="run the evolutionary loop")
    generate.add_argument("--config", default=None, help="JSON config file")
    generate.add_argument("--out", required=True, help="run directory to create")
    generate.add_argument("--seed", type=int, default=None, help="override the run seed")
    generate.add_argument("--replay", default=None, help="transcript to replay instead of a live endpoint")
    generate.add_argument("--workers", type=int, default=None, help="evaluation pool size")
    generate.set_defaults(func=cmd_generate)

    evaluate = sub.add_parser("evaluate", help="score one expression")
    target = evaluate.add_mutually_exclusive_group(required=True)
    target.add_argument("--expr", default=None, help="expression text")
    target.add_argument("--file", default=None, help="file holding the expression")
    evaluate.add_argument("--config", default=None, help="JSON config file")
    evaluate.add_argument("--seed", type=int, default=None, help="override the trial base seed")
    evaluate.add_argument("--out", default="evaluation.json", help="where to write the report")
    evaluate.add_argument("--workers", type=int, default=None, help="evaluation pool size")
    evaluate.set_defaults(func=cmd_evaluate)

    analyze = sub.add_parser("analyze", help="sensitivity and curvature analysis")
    target = analyze.add_mutually_exclusive_group(required=True)
    target.add_argument("--expr", default=None, help="expression text")
    target.add_argument("--run", default=None, help="run directory; analyzes its best benchmark")
    analyze.add_argument("--what", choices=("sobol", "curvature", "both"), default="both")
    analyze.add_argument("--config", default=None, help="JSON config file")
    analyze.add_argument("--out", default=".", help="directory for analysis files")
    analyze.set_defaults(func=cmd_analyze)

    lineage = sub.add_parser("lineage", help="distances, embedding, operator stats, DOT graph")
    lineage.add_argument("--run", required=True, help="run directory")
    lineage.add_argument("--out", default=None, help="output directory (default: the run directory)")
    lineage.set_defaults(func=cmd_lineage)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        print(json.dumps(default_config(), indent=2))
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_VALIDATION
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
