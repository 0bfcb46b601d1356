"""Random derivation from a probabilistic grammar.

Expansion is leftmost-first with a height budget: a nonterminal may only
pick choices whose minimal subtree height fits the remaining budget, and
probabilities are renormalized over those.  Beyond ``max_expansions`` rule
applications every nonterminal takes its shallowest feasible choices so the
derivation closes quickly.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

from .grammar import GrammarError, ProbabilisticGrammar, check_valid, choice_heights, min_expansion_depth
from .learner import Node

if TYPE_CHECKING:
    from .fitness import Fitness

DEFAULT_DEPTH_LIMIT = 64
DEFAULT_MAX_EXPANSIONS = 2000


def substream(master_seed: int, *path) -> random.Random:
    """Independent, reproducible stream for ``(master_seed, *path)``."""
    key = ":".join(str(x) for x in (master_seed,) + path).encode()
    return random.Random(int.from_bytes(hashlib.blake2b(key, digest_size=16).digest(), "big"))


@dataclass
class Individual:
    text: str
    expansions: int
    tree: Optional[Node] = field(default=None, repr=False, compare=False)
    origin: Tuple[int, int] = (0, 0)
    fitness: Optional["Fitness"] = None

    @property
    def length(self) -> int:
        return len(self.text)

    @property
    def data(self) -> bytes:
        return self.text.encode("utf-8")

    @property
    def filename(self) -> str:
        gen, idx = self.origin
        return f"gen{gen}_{idx}.input"


@dataclass
class Population:
    individuals: List[Individual]
    generation: int = 0

    def __len__(self) -> int:
        return len(self.individuals)

    def __iter__(self):
        return iter(self.individuals)

    def __getitem__(self, i: int) -> Individual:
        return self.individuals[i]


class _Plan:
    """Per-grammar tables reused across derivations."""

    def __init__(self, pg: ProbabilisticGrammar):
        g = pg.grammar
        check_valid(g)
        self.depth = min_expansion_depth(g)
        heights = choice_heights(g, self.depth)
        self.rules: Dict[str, tuple] = {}
        for rule in g:
            syms = [
                tuple(("", True) if c.is_epsilon else (s.value, s.is_terminal) for s in c.symbols)
                for c in rule.choices
            ]
            hs = heights[rule.lhs]
            shallowest = min(hs)
            self.rules[rule.lhs] = (syms, hs, tuple(pg.probs[rule.lhs]), shallowest)
        self.start = g.start


_plan_cache: Dict[int, Tuple[ProbabilisticGrammar, _Plan]] = {}


def _plan(pg: ProbabilisticGrammar) -> _Plan:
    hit = _plan_cache.get(id(pg))
    if hit is not None and hit[0] is pg:
        return hit[1]
    plan = _Plan(pg)
    if len(_plan_cache) > 16:
        _plan_cache.clear()
    _plan_cache[id(pg)] = (pg, plan)
    return plan


def _pick(rng: random.Random, probs, allowed) -> int:
    mass = 0.0
    for i in allowed:
        mass += probs[i]
    if mass <= 0.0:
        # every feasible choice has probability zero: fall back to uniform
        return allowed[int(rng.random() * len(allowed))]
    r = rng.random() * mass
    for i in allowed:
        r -= probs[i]
        if r < 0.0 and probs[i] > 0.0:
            return i
    return next(i for i in reversed(allowed) if probs[i] > 0.0)


def generate_one(
    pg: ProbabilisticGrammar,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
    rng: Optional[random.Random] = None,
    origin: Tuple[int, int] = (0, 0),
    max_expansions: Optional[int] = DEFAULT_MAX_EXPANSIONS,
) -> Individual:
    plan = _plan(pg)
    rng = rng if rng is not None else random.Random()
    if depth_limit < plan.depth[plan.start]:
        raise GrammarError(
            f"depth limit {depth_limit} is below the minimal derivation depth {plan.depth[plan.start]} of {plan.start}"
        )
    cap = max_expansions if max_expansions is not None else float("inf")
    rules = plan.rules
    out: List[str] = []
    expansions = 0

    root: list = [None]
    # frames: (nonterminal, budget, parent child list, index)
    stack = [(plan.start, depth_limit, root, 0)]
    done = []
    while stack:
        name, budget, slot, idx = stack.pop()
        syms, hs, probs, shallowest = rules[name]
        if expansions >= cap:
            allowed = [i for i, h in enumerate(hs) if h == shallowest]
        else:
            allowed = [i for i, h in enumerate(hs) if h <= budget]
        if not allowed:
            raise GrammarError(f"no feasible choice for {name} within depth budget {budget}")
        c = allowed[0] if len(allowed) == 1 else _pick(rng, probs, allowed)
        expansions += 1
        seq = syms[c]
        children: list = [None] * len(seq)
        done.append((name, c, children, slot, idx))
        # push in reverse so the leftmost nonterminal is expanded first;
        # terminals are emitted when their turn comes via a marker frame
        for k in range(len(seq) - 1, -1, -1):
            value, terminal = seq[k]
            if terminal:
                children[k] = value
                stack.append((None, value, None, None))
            else:
                stack.append((value, budget - 1, children, k))
        while stack and stack[-1][0] is None:
            out.append(stack.pop()[1])
    for name, c, children, slot, idx in reversed(done):
        slot[idx] = Node(name, c, tuple(children))
    return Individual("".join(out), expansions, root[0], origin)


def generate_population(
    pg: ProbabilisticGrammar,
    size: int,
    depth_limit: int = DEFAULT_DEPTH_LIMIT,
    master_seed: int = 0,
    generation: int = 0,
    max_expansions: Optional[int] = DEFAULT_MAX_EXPANSIONS,
) -> Population:
    """Individual k is drawn from ``substream(master_seed, "gen", generation, k)``."""
    if size < 0:
        raise ValueError("population size must be non-negative")
    individuals = [
        generate_one(pg, depth_limit, substream(master_seed, "gen", generation, k), (generation, k), max_expansions)
        for k in range(size)
    ]
    return Population(individuals, generation)


def export_population(pop: Population, out_dir) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for ind in pop:
        path = out / ind.filename
        path.write_bytes(ind.data)
        paths.append(path)
    return paths
