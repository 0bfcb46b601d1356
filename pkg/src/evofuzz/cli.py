"""Command-line interface: ``evofuzz {learn,generate,fuzz,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import List, Optional

from .bench import run_bench
from .evolution import CampaignConfig, ReportWriter, VirtualClock, run_campaign
from .fitness import default_lambda
from .generator import DEFAULT_DEPTH_LIMIT, DEFAULT_MAX_EXPANSIONS, export_population, generate_population
from .grammar import GrammarError, check_valid, load_grammar
from .harness import AdapterError, Classifier, parse_target
from .learner import LearningError, is_parseable, learn_from_corpus, read_corpus

log = logging.getLogger("evofuzz")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_ADAPTER = 3


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("evofuzz").joinpath("data", *parts)))


def _campaign_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grammar", help="grammar file (defaults to the shipped JSON grammar for builtin:json)")
    p.add_argument("--seeds", help="seed corpus directory, one input per file")
    p.add_argument("--target", default="builtin:json", help="builtin:json, builtin:noop or cmd:<template with {}>")
    p.add_argument("--mode", choices=("evo", "evolutionary", "baseline"), default="evo")
    p.add_argument("--budget-secs", "--budget", dest="budget_secs", type=float, default=600.0,
                   help="time budget in seconds")
    p.add_argument("--max-generations", type=int, default=None)
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--elitism", type=float, default=0.05, help="elitism rate as a fraction of the population")
    p.add_argument("--tournaments", type=int, default=10)
    p.add_argument("--tournament-size", type=int, default=10)
    p.add_argument("--mutations", type=int, default=1)
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="fitness lambda (default 1.5 for JSON grammars, 2.0 otherwise)")
    p.add_argument("--depth-limit", type=int, default=DEFAULT_DEPTH_LIMIT)
    p.add_argument("--max-expansions", type=int, default=DEFAULT_MAX_EXPANSIONS)
    p.add_argument("--timeout-ms", type=int, default=3000)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1, help="parallel target executions per generation")
    p.add_argument("--clock", choices=("wall", "virtual"), default="wall",
                   help="virtual: every execution costs --virtual-ms-per-exec, making runs reproducible")
    p.add_argument("--virtual-ms-per-exec", type=float, default=1.0)
    p.add_argument("--config", help="JSON file with defaults for any flag, plus classifier settings")
    p.add_argument("--out", help="output directory")
    p.add_argument("--report", help="report file (JSON lines)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evofuzz", description="Evolutionary probabilistic grammar fuzzing")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn choice probabilities from a seed corpus")
    p.add_argument("--grammar", required=True)
    p.add_argument("--seeds", required=True)
    p.add_argument("--out", required=True, help="where to write the probabilistic grammar")

    p = sub.add_parser("generate", help="generate inputs from a probabilistic grammar")
    p.add_argument("--grammar", required=True, help="probabilistic grammar file")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--depth-limit", type=int, default=DEFAULT_DEPTH_LIMIT)
    p.add_argument("--max-expansions", type=int, default=DEFAULT_MAX_EXPANSIONS)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--check", action="store_true", help="re-parse every generated input")

    p = sub.add_parser("fuzz", help="run one campaign")
    _campaign_flags(p)

    p = sub.add_parser("bench", help="compare evolutionary and baseline modes over repeated runs")
    _campaign_flags(p)
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--jobs", type=int, default=1, help="campaigns to run in parallel")
    return parser


class UsageError(Exception):
    pass


def _load_config(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _apply_config(args: argparse.Namespace, parser_defaults: dict, config: dict) -> None:
    """Config values fill in flags left at their defaults."""
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest == "lambda":
            dest = "lam"
        if dest in ("classifiers", "nonzero_exit_is_exception"):
            continue
        if not hasattr(args, dest):
            raise UsageError(f"unknown config key {key!r}")
        if getattr(args, dest) == parser_defaults.get(dest):
            setattr(args, dest, value)


def _resolve_inputs(args):
    grammar_path = args.grammar
    seeds_path = args.seeds
    if args.target == "builtin:json":
        grammar_path = grammar_path or str(data_path("grammars", "json.grammar"))
        seeds_path = seeds_path or str(data_path("seeds", "json"))
    if not grammar_path:
        raise UsageError("--grammar is required for this target")
    if not seeds_path:
        raise UsageError("--seeds is required for this target")
    if not Path(grammar_path).is_file():
        raise UsageError(f"grammar file not found: {grammar_path}")
    if not Path(seeds_path).is_dir():
        raise UsageError(f"seed directory not found: {seeds_path}")
    return grammar_path, seeds_path


def _campaign_setup(args, config: dict):
    grammar_path, seeds_path = _resolve_inputs(args)
    try:
        grammar = load_grammar(grammar_path)
        check_valid(grammar)
    except GrammarError as exc:
        raise UsageError(f"{grammar_path}: {exc}")
    _, seeds = read_corpus(seeds_path)
    if not seeds:
        raise UsageError(f"seed directory {seeds_path} is empty")
    classifiers = [Classifier(c["pattern"], int(c.get("type_group", 1))) for c in config.get("classifiers", [])]
    try:
        target = parse_target(
            args.target,
            timeout_ms=args.timeout_ms,
            classifiers=classifiers,
            nonzero_exit_is_exception=bool(config.get("nonzero_exit_is_exception", True)),
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    lam = args.lam if args.lam is not None else default_lambda(Path(grammar_path).stem + " " + args.target)
    try:
        cfg = CampaignConfig(
            population_size=args.population,
            elitism_rate=args.elitism,
            tournament_count=args.tournaments,
            tournament_size=args.tournament_size,
            mutation_count=args.mutations,
            lam=lam,
            depth_limit=args.depth_limit,
            max_expansions=args.max_expansions if args.max_expansions and args.max_expansions > 0 else None,
            time_budget=args.budget_secs,
            max_generations=args.max_generations,
            rng_seed=args.rng_seed,
            mode="baseline" if args.mode == "baseline" else "evolutionary",
            workers=args.workers,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    return cfg, grammar, seeds, target


def cmd_learn(args) -> int:
    if not Path(args.grammar).is_file():
        raise UsageError(f"grammar file not found: {args.grammar}")
    if not Path(args.seeds).is_dir():
        raise UsageError(f"seed directory not found: {args.seeds}")
    try:
        grammar = load_grammar(args.grammar)
        check_valid(grammar)
    except GrammarError as exc:
        raise UsageError(f"{args.grammar}: {exc}")
    names, texts = read_corpus(args.seeds)
    if not texts:
        print(f"error: seed directory {args.seeds} is empty", file=sys.stderr)
        return EXIT_FAILURE
    try:
        pg, statuses = learn_from_corpus(grammar, texts, names)
    except LearningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for name in names:
            print(f"  unparseable: {name}", file=sys.stderr)
        return EXIT_FAILURE
    failures = [s for s in statuses if not s.ok]
    for s in failures:
        print(f"unparseable seed {s.name}: {s.error}", file=sys.stderr)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(pg.to_text(), encoding="utf-8")
    print(f"learned from {len(statuses) - len(failures)} seeds, {len(failures)} parse failures")
    return EXIT_OK


def cmd_generate(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be non-negative")
    if not Path(args.grammar).is_file():
        raise UsageError(f"grammar file not found: {args.grammar}")
    try:
        pg = load_grammar(args.grammar, probabilistic=True)
        pop = generate_population(
            pg, args.count, args.depth_limit, args.rng_seed, 0, args.max_expansions or None
        )
    except GrammarError as exc:
        print(f"error: {args.grammar}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    export_population(pop, args.out)
    if args.check:
        bad = [ind.filename for ind in pop if not is_parseable(pg.grammar, ind.text)]
        if bad:
            print(f"error: {len(bad)} generated inputs do not re-parse: {', '.join(bad[:10])}", file=sys.stderr)
            return EXIT_FAILURE
        print(f"round-trip check passed for {len(pop)} inputs")
    print(f"wrote {len(pop)} inputs to {args.out}")
    return EXIT_OK


def cmd_fuzz(args, config: dict) -> int:
    cfg, grammar, seeds, target = _campaign_setup(args, config)
    out = Path(args.out) if args.out else None
    report_path = args.report or (str(out / "report.jsonl") if out else None)
    writer = ReportWriter.open(report_path) if report_path else None
    clock = VirtualClock(args.virtual_ms_per_exec) if args.clock == "virtual" else None
    try:
        report = run_campaign(
            cfg, grammar, seeds, target, clock=clock, writer=writer,
            archive_dir=(out / "exceptions") if out else None,
        )
    except AdapterError as exc:
        print(f"error: target could not be executed: {exc}", file=sys.stderr)
        return EXIT_ADAPTER
    except LearningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    finally:
        if writer:
            writer.close()
    line = f"{report.mode}: {report.generations} generations, {report.inputs_executed} executions, " \
           f"{len(report.first_seen)} exception types"
    if report.coverage is not None:
        line += f", coverage {report.coverage.percent:.1f}%"
    print(line)
    for kind, gen in sorted(report.first_seen.items()):
        print(f"  {kind}: first seen in generation {gen}")
    return EXIT_OK


def cmd_bench(args, config: dict) -> int:
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    cfg, grammar, seeds, target = _campaign_setup(args, config)
    if not target.has_coverage:
        raise UsageError("bench needs a builtin target with coverage, e.g. builtin:json")

    def progress(o):
        print(f"{o.mode:12s} run {o.repeat:2d} seed {o.rng_seed}: coverage {o.coverage_percent:.1f}% "
              f"types {','.join(o.exception_types) or '-'}", file=sys.stderr, flush=True)

    try:
        summary = run_bench(
            cfg, grammar, seeds, target, args.repeats, jobs=args.jobs,
            virtual_ms_per_exec=args.virtual_ms_per_exec if args.clock == "virtual" else 0.0,
            progress=progress,
        )
    except LearningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    result = summary.to_dict()
    text = json.dumps(result, indent=2)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    print(f"median coverage: evolutionary {result['evolutionary']['median_coverage']:.2f}% "
          f"baseline {result['baseline']['median_coverage']:.2f}%  U={result['u']} p={result['p']:.3g}"
          f" ({'significant' if result['significant'] else 'not significant'} at 0.05)")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "learn":
            return cmd_learn(args)
        if args.command == "generate":
            return cmd_generate(args)
        config = _load_config(args.config)
        _apply_config(args, vars(parser.parse_args([args.command])), config)
        if args.command == "fuzz":
            return cmd_fuzz(args, config)
        return cmd_bench(args, config)
    except UsageError as exc:
        parser.exit(EXIT_USAGE, f"{parser.prog}: error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
