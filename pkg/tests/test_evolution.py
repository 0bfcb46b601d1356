import io
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from evofuzz.evolution import (
    CampaignConfig,
    ReportWriter,
    VirtualClock,
    mutate_grammar,
    run_baseline,
    run_campaign,
    select,
)
from evofuzz.fitness import Fitness
from evofuzz.generator import Individual
from evofuzz.grammar import parse_grammar_text, uniform_probabilities
from evofuzz.harness import ExecutionResult, TargetSpec, parse_target
from evofuzz.learner import learn_from_corpus

SEEDS = ["[]", "[1,1]"]


def population(fits):
    return [Individual(f"i{k}", 1, None, (0, k), f) for k, f in enumerate(fits)]


def always_throws(data):
    return ExecutionResult.exception("Boom")


THROWER = TargetSpec.builtin(always_throws, name="throw")
NOOP = parse_target("builtin:noop")


class Scripted:
    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


# selection

def test_default_selection_size():
    rng = random.Random(0)
    pop = population([Fitness(False, rng.random()) for _ in range(100)])
    assert len(select(pop, CampaignConfig(), random.Random(1))) == 15


def test_identical_fitness_keeps_order():
    pop = population([Fitness(False, 1.0)] * 100)
    chosen = select(pop, CampaignConfig(), random.Random(1))
    assert chosen[:5] == pop[:5]
    assert all(ind in pop[5:] for ind in chosen[5:])


def test_full_elitism_has_no_winners():
    pop = population([Fitness(False, float(k)) for k in range(20)])
    chosen = select(pop, CampaignConfig(elitism_rate=1.0), random.Random(1))
    assert sorted(ind.origin for ind in chosen) == sorted(ind.origin for ind in pop)


def test_small_remainder_tournament_uses_all():
    pop = population([Fitness(False, float(k)) for k in range(6)])
    cfg = CampaignConfig(elitism_rate=0.5, tournament_size=10, tournament_count=4)
    chosen = select(pop, cfg, random.Random(3))
    # the remainder is the three weakest, the best of them always wins
    assert [ind.text for ind in chosen] == ["i5", "i4", "i3", "i2", "i2", "i2", "i2"]


def test_exceptional_elites_first():
    fits = [Fitness(False, 100.0)] * 19 + [Fitness(True, 0.0)]
    chosen = select(population(fits), CampaignConfig(), random.Random(0))
    assert chosen[0].text == "i19"


def test_selection_needs_fitness():
    with pytest.raises(ValueError):
        select([Individual("a", 1, None)], CampaignConfig(), random.Random(0))


@settings(max_examples=50)
@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=60), st.integers(0, 1000),
       st.floats(0.5, 20), st.floats(0, 50))
def test_selection_invariant_under_rescaling(scores, seed, a, b):
    pop = population([Fitness(False, s) for s in scores])
    scaled = population([Fitness(False, a * s + b) for s in scores])
    one = [i.origin for i in select(pop, CampaignConfig(), random.Random(seed))]
    two = [i.origin for i in select(scaled, CampaignConfig(), random.Random(seed))]
    if len(set(scores)) == len(set(a * s + b for s in scores)):
        assert one == two


@given(st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=60), st.floats(0, 1))
def test_elites_always_selected(scores, rate):
    pop = population([Fitness(False, s) for s in scores])
    cfg = CampaignConfig(elitism_rate=rate)
    chosen = select(pop, cfg, random.Random(0))
    best = max(scores)
    if rate * len(scores) > 1e-9:
        assert chosen[0].fitness.structure == best


# mutation

def test_mutation_example(toy):
    pg = uniform_probabilities(toy).replace({"list": (1.0, 0.0)})
    out = mutate_grammar(pg, 1, Scripted([0.0, 0.75, 0.25]))
    assert out.probs["list"] == (0.25, 0.75)
    assert out.probs["items"] == pg.probs["items"]


def test_mutation_zero_is_identity(toy):
    pg = uniform_probabilities(toy)
    assert mutate_grammar(pg, 0, random.Random(0)) == pg


def test_mutation_without_choices_is_noop():
    pg = uniform_probabilities(parse_grammar_text('start : "a" b ; b : "c" ;'))
    assert mutate_grammar(pg, 3, random.Random(0)) is pg


@given(st.integers(0, 10**6), st.integers(1, 5))
def test_mutation_keeps_simplex(seed, n):
    toy = parse_grammar_text('start : list ; list : "[" "]" | "[" items "]" ; items : item | item "," items ; item : "1" | list ;')
    pg = uniform_probabilities(toy).replace({"item": (1.0, 0.0)})
    out = mutate_grammar(pg, n, random.Random(seed))
    for lhs, ps in out.probs.items():
        assert abs(sum(ps) - 1.0) < 1e-9
        if ps != pg.probs[lhs]:
            assert all(p > 0 for p in ps)


# campaign

def test_zero_budget(toy):
    cfg = CampaignConfig(time_budget=0)
    for run in (run_campaign, run_baseline):
        report = run(cfg, toy, SEEDS, NOOP, clock=VirtualClock())
        assert report.generations == 0 and report.archive == []


def _report_text(cfg, grammar, seeds, target):
    buf = io.StringIO()
    run_campaign(cfg, grammar, seeds, target, clock=VirtualClock(1.0), writer=ReportWriter(buf))
    return buf.getvalue()


def test_campaign_deterministic(toy):
    cfg = CampaignConfig(population_size=20, time_budget=0.2, rng_seed=5)
    a = _report_text(cfg, toy, SEEDS, THROWER)
    assert a == _report_text(cfg, toy, SEEDS, THROWER)
    assert a != _report_text(CampaignConfig(population_size=20, time_budget=0.2, rng_seed=6), toy, SEEDS, THROWER)


def test_baseline_deterministic(toy):
    cfg = CampaignConfig(population_size=20, time_budget=0.1, mode="baseline", rng_seed=2)
    assert _report_text(cfg, toy, SEEDS, THROWER) == _report_text(cfg, toy, SEEDS, THROWER)


def test_thrower_fills_archive(toy, tmp_path):
    cfg = CampaignConfig(population_size=30, max_generations=1)
    report = run_campaign(cfg, toy, SEEDS, THROWER, archive_dir=tmp_path)
    distinct = {r.input for r in report.archive}
    assert report.generations == 1
    assert report.records[0].exceptional == 30
    # the archive keeps one record per distinct (type, input) pair
    assert 0 < len(report.archive) == len(distinct) <= 30
    assert report.first_seen == {"Boom": 0}
    for rec in report.archive:
        assert (tmp_path / "Boom").is_dir()
        assert open(rec.input_path, "rb").read() == rec.input


def test_archive_grows_monotonically(toy):
    buf = io.StringIO()
    cfg = CampaignConfig(population_size=20, max_generations=5)
    run_campaign(cfg, toy, SEEDS, THROWER, writer=ReportWriter(buf))
    lines = [json.loads(l) for l in buf.getvalue().splitlines()]
    gens = [l["gen"] for l in lines if l["kind"] == "exception"]
    assert gens == sorted(gens)
    assert lines[-1]["kind"] == "summary"
    assert lines[-1]["generations"] == 5
    assert {l["kind"] for l in lines} == {"exception", "generation", "summary"}


def test_baseline_grammar_is_fixed(toy):
    cfg = CampaignConfig(population_size=10, max_generations=4, mode="baseline")
    report = run_campaign(cfg, toy, SEEDS, NOOP)
    seed_pg, _ = learn_from_corpus(toy, SEEDS)
    assert report.mode == "baseline"
    assert report.generations == 4
    assert all(pg == seed_pg for pg in report.grammars)
    assert report.learned == []


def test_evolution_learns_each_generation(toy):
    cfg = CampaignConfig(population_size=20, max_generations=3)
    report = run_campaign(cfg, toy, SEEDS, NOOP)
    assert len(report.grammars) == 3 and len(report.learned) == 2
    assert report.inputs_executed == 60


def test_json_campaign_reports_coverage():
    from evofuzz.cli import data_path
    from evofuzz.grammar import load_grammar
    from evofuzz.learner import read_corpus

    g = load_grammar(data_path("grammars", "json.grammar"))
    _, seeds = read_corpus(data_path("seeds", "json"))
    report = run_campaign(CampaignConfig(population_size=20, max_generations=2, lam=1.5), g, seeds,
                          parse_target("builtin:json"))
    assert 0 < report.coverage.percent <= 100


def test_config_validation():
    for bad in (dict(elitism_rate=1.5), dict(tournament_size=0), dict(mode="x"), dict(lam=0), dict(time_budget=-1)):
        with pytest.raises(ValueError):
            CampaignConfig(**bad)
