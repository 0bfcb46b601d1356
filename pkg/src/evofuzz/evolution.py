"""The evolutionary loop and the "more of the same" baseline.

Each generation is generated from the current probabilistic grammar,
executed, and scored.  The fittest individuals (elites plus tournament
winners) are used to re-learn choice probabilities from their derivation
trees; the learned grammar is then mutated and drives the next generation.
The baseline keeps generating from the seed-learned grammar.
"""

from __future__ import annotations

import json
import logging
import math
import random
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import IO, Dict, List, Optional, Sequence, Set, Tuple, Union

from .fitness import FitnessConfig, fitness
from .generator import DEFAULT_DEPTH_LIMIT, DEFAULT_MAX_EXPANSIONS, Individual, generate_population, substream
from .grammar import Grammar, ProbabilisticGrammar, multi_choice_rules
from .harness import ExceptionRecord, TargetSpec, execute
from .harness.coverage import CoverageSummary
from .learner import count_choices, learn_from_corpus, learn_probabilities

log = logging.getLogger(__name__)

MODES = ("evolutionary", "baseline")


@dataclass(frozen=True)
class CampaignConfig:
    population_size: int = 100
    elitism_rate: float = 0.05
    tournament_count: int = 10
    tournament_size: int = 10
    mutation_count: int = 1
    lam: float = 2.0
    depth_limit: int = DEFAULT_DEPTH_LIMIT
    max_expansions: Optional[int] = DEFAULT_MAX_EXPANSIONS
    time_budget: float = 600.0  # seconds
    max_generations: Optional[int] = None
    rng_seed: int = 0
    mode: str = "evolutionary"
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.elitism_rate <= 1.0:
            raise ValueError("elitism rate must lie in [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament size must be at least 1")
        if self.tournament_count < 0 or self.mutation_count < 0:
            raise ValueError("tournament and mutation counts must be non-negative")
        if self.population_size < 1:
            raise ValueError("population size must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.time_budget < 0:
            raise ValueError("time budget must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        FitnessConfig(self.lam)


class WallClock:
    def __init__(self):
        self._start = time.monotonic()

    def elapsed_ms(self) -> float:
        return (time.monotonic() - self._start) * 1000.0

    def charge(self, result) -> None:
        pass


class VirtualClock:
    """Deterministic clock: every execution costs ``ms_per_execution``."""

    def __init__(self, ms_per_execution: float = 1.0):
        self.ms_per_execution = ms_per_execution
        self._now = 0.0

    def elapsed_ms(self) -> float:
        return self._now

    def charge(self, result) -> None:
        self._now += self.ms_per_execution


class ReportWriter:
    """Writes one JSON object per line and flushes after each."""

    def __init__(self, stream: IO[str]):
        self.stream = stream

    @classmethod
    def open(cls, path) -> "ReportWriter":
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        return cls(open(path, "w", encoding="utf-8"))

    def write(self, kind: str, **fields) -> None:
        self.stream.write(json.dumps({"kind": kind, **fields}) + "\n")
        self.stream.flush()

    def close(self) -> None:
        self.stream.close()


@dataclass
class GenerationRecord:
    gen: int
    best_structure: float
    median_structure: float
    exceptional: int
    elapsed_ms: float


@dataclass
class CampaignReport:
    mode: str
    records: List[GenerationRecord] = field(default_factory=list)
    archive: List[ExceptionRecord] = field(default_factory=list)
    first_seen: Dict[str, int] = field(default_factory=dict)
    inputs_generated: int = 0
    inputs_executed: int = 0
    coverage: Optional[CoverageSummary] = None
    seed_grammar: Optional[ProbabilisticGrammar] = None
    # grammar learned from each generation's selection, before mutation
    learned: List[ProbabilisticGrammar] = field(default_factory=list)
    # grammar each generation was generated from
    grammars: List[ProbabilisticGrammar] = field(default_factory=list)

    @property
    def generations(self) -> int:
        return len(self.records)

    @property
    def exception_types(self) -> Set[str]:
        return set(self.first_seen)

    def summary(self) -> dict:
        return {
            "generations": self.generations,
            "inputs_generated": self.inputs_generated,
            "inputs_executed": self.inputs_executed,
            "unique_exception_types": len(self.first_seen),
        }


def _elite_count(rate: float, size: int) -> int:
    # guard against float noise such as 0.07 * 100 == 7.000000000000001
    return min(size, math.ceil(rate * size - 1e-9))


def _rank_key(pair: Tuple[int, Individual]):
    idx, ind = pair
    return (ind.fitness, -idx)


def select(individuals: Sequence[Individual], cfg: CampaignConfig, rng: random.Random) -> List[Individual]:
    """Elites by fitness, then ``tournament_count`` tournament winners from the rest.

    Ties in fitness keep population order.  Winners may repeat.
    """
    if any(ind.fitness is None for ind in individuals):
        raise ValueError("every individual needs a fitness before selection")
    indexed = list(enumerate(individuals))
    ranked = sorted(indexed, key=_rank_key, reverse=True)
    n_elite = _elite_count(cfg.elitism_rate, len(individuals))
    elites = ranked[:n_elite]
    elite_ids = {idx for idx, _ in elites}
    remainder = [pair for pair in indexed if pair[0] not in elite_ids]
    chosen = [ind for _, ind in elites]
    if remainder:
        k = min(cfg.tournament_size, len(remainder))
        for _ in range(cfg.tournament_count):
            participants = rng.sample(remainder, k)
            chosen.append(max(participants, key=_rank_key)[1])
    return chosen


def mutate_grammar(pg: ProbabilisticGrammar, n_mut: int, rng: random.Random) -> ProbabilisticGrammar:
    """Redraw the probabilities of ``n_mut`` randomly chosen rules.

    Each mutation picks a rule with at least two choices, draws
    ``r_i ~ U(0, 1]`` per choice and sets ``p_i = r_i / sum(r)``.
    """
    if n_mut < 0:
        raise ValueError("mutation count must be non-negative")
    eligible = multi_choice_rules(pg.grammar)
    if n_mut and not eligible:
        log.info("grammar has no rule with two or more choices; mutation skipped")
        return pg
    updates: Dict[str, Tuple[float, ...]] = {}
    for _ in range(n_mut):
        lhs = eligible[int(rng.random() * len(eligible))]
        r = [1.0 - rng.random() for _ in pg.grammar.rules[lhs].choices]
        total = math.fsum(r)
        updates[lhs] = tuple(x / total for x in r)
    return pg.replace(updates) if updates else pg


class _Campaign:
    def __init__(self, cfg, target, clock, writer, archive_dir):
        self.cfg = cfg
        self.target = target
        self.clock = clock if clock is not None else WallClock()
        self.writer = writer
        self.archive_dir = Path(archive_dir) if archive_dir is not None else None
        self.fitness_cfg = FitnessConfig(cfg.lam)
        self.report = CampaignReport(cfg.mode)
        self.seen: Set[Tuple[str, bytes]] = set()
        self.covered: Set[str] = set()
        self.budget_ms = cfg.time_budget * 1000.0

    def exhausted(self) -> bool:
        if self.cfg.max_generations is not None and self.report.generations >= self.cfg.max_generations:
            return True
        return self.clock.elapsed_ms() >= self.budget_ms

    def _run_all(self, individuals):
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(self.cfg.workers) as pool:
                return list(pool.map(lambda ind: execute(self.target, ind.data), individuals))
        return [execute(self.target, ind.data) for ind in individuals]

    def evaluate(self, pop) -> None:
        gen = pop.generation
        individuals = pop.individuals
        self.report.inputs_generated += len(individuals)
        results = self._run_all(individuals)
        exceptional = 0
        for ind, result in zip(individuals, results):
            self.clock.charge(result)
            self.report.inputs_executed += 1
            ind.fitness = fitness(ind, result, self.fitness_cfg)
            if result.coverage:
                self.covered |= result.coverage
            kind = result.failure_type
            if kind is None:
                continue
            exceptional += 1
            key = (kind, ind.data)
            if key in self.seen:
                continue
            self.seen.add(key)
            self.report.first_seen.setdefault(kind, gen)
            rel, path = self._archive(ind, kind)
            record = ExceptionRecord(kind, ind.data, gen, self.clock.elapsed_ms(), path)
            self.report.archive.append(record)
            if self.writer:
                # relative to the archive directory so reports do not depend on where they were written
                self.writer.write("exception", gen=gen, type=kind, input_path=rel, elapsed_ms=record.elapsed_ms)
        structures = [ind.fitness.structure for ind in individuals]
        rec = GenerationRecord(
            gen=gen,
            best_structure=max(structures) if structures else 0.0,
            median_structure=statistics.median(structures) if structures else 0.0,
            exceptional=exceptional,
            elapsed_ms=self.clock.elapsed_ms(),
        )
        self.report.records.append(rec)
        if self.writer:
            self.writer.write("generation", **asdict(rec))

    def _archive(self, ind: Individual, kind: str) -> Tuple[str, str]:
        safe = "".join(ch if ch.isalnum() or ch in "._-" else "_" for ch in kind)
        rel = f"{safe}/{ind.filename}"
        if self.archive_dir is None:
            return rel, rel
        path = self.archive_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(ind.data)
        return rel, str(path)

    def generate(self, pg: ProbabilisticGrammar, gen: int):
        self.report.grammars.append(pg)
        return generate_population(
            pg, self.cfg.population_size, self.cfg.depth_limit, self.cfg.rng_seed, gen, self.cfg.max_expansions
        )

    def finish(self) -> CampaignReport:
        if self.target.has_coverage:
            self.report.coverage = CoverageSummary(frozenset(self.covered), self.target.branch_total)
        if self.writer:
            self.writer.write("summary", **self.report.summary())
        return self.report


def _seed_grammar(grammar: Grammar, seed_corpus) -> ProbabilisticGrammar:
    pg, statuses = learn_from_corpus(grammar, list(seed_corpus))
    failed = sum(not s.ok for s in statuses)
    if failed:
        log.warning("%d of %d seed inputs did not parse", failed, len(statuses))
    return pg


def run_campaign(
    cfg: CampaignConfig,
    grammar: Grammar,
    seed_corpus: Sequence[Union[str, bytes]],
    target: TargetSpec,
    clock=None,
    writer: Optional[ReportWriter] = None,
    archive_dir=None,
) -> CampaignReport:
    """Run the evolutionary loop until the time or generation budget is used up."""
    if cfg.mode == "baseline":
        return run_baseline(cfg, grammar, seed_corpus, target, clock, writer, archive_dir)
    pg = _seed_grammar(grammar, seed_corpus)
    camp = _Campaign(cfg, target, clock, writer, archive_dir)
    camp.report.seed_grammar = pg
    if camp.exhausted():
        return camp.finish()
    gen = 0
    pop = camp.generate(pg, gen)
    while True:
        camp.evaluate(pop)
        if camp.exhausted():
            break
        selected = select(pop.individuals, cfg, substream(cfg.rng_seed, "select", gen))
        learned = learn_probabilities(grammar, count_choices((ind.tree for ind in selected), grammar))
        camp.report.learned.append(learned)
        pg = mutate_grammar(learned, cfg.mutation_count, substream(cfg.rng_seed, "mutate", gen))
        gen += 1
        pop = camp.generate(pg, gen)
    return camp.finish()


def run_baseline(
    cfg: CampaignConfig,
    grammar: Grammar,
    seed_corpus: Sequence[Union[str, bytes]],
    target: TargetSpec,
    clock=None,
    writer: Optional[ReportWriter] = None,
    archive_dir=None,
) -> CampaignReport:
    """Generate and execute batches from the seed-learned grammar, nothing else."""
    pg = _seed_grammar(grammar, seed_corpus)
    camp = _Campaign(cfg, target, clock, writer, archive_dir)
    camp.report.mode = "baseline"
    camp.report.seed_grammar = pg
    gen = 0
    while not camp.exhausted():
        camp.evaluate(camp.generate(pg, gen))
        gen += 1
    return camp.finish()
