"""Parse inputs against a grammar, count choice usage, learn choice probabilities.

Parsing uses an Earley recognizer, so any context-free grammar works
(left recursion, ambiguity, empty choices).  When an input has more than one
derivation the tree is picked deterministically: for every node the lowest
choice index that can derive the span wins, and nonterminal children take
the shortest span that still lets the remaining symbols match.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

from .grammar import Grammar, GrammarError, ProbabilisticGrammar, check_valid

log = logging.getLogger(__name__)


class Node(NamedTuple):
    """One rule application; leaves of a derivation tree are plain strings."""

    lhs: str
    choice: int
    children: Tuple[Union["Node", str], ...]


DerivationTree = Node


def tree_yield(tree: Node) -> str:
    out = []
    stack: List[Union[Node, str]] = [tree]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
        else:
            stack.extend(reversed(item.children))
    return "".join(out)


def iter_nodes(tree: Node) -> Iterator[Node]:
    stack: List[Union[Node, str]] = [tree]
    while stack:
        item = stack.pop()
        if not isinstance(item, str):
            yield item
            stack.extend(reversed(item.children))


def tree_height(tree: Node) -> int:
    best = 0
    stack = [(tree, 1)]
    while stack:
        node, h = stack.pop()
        best = max(best, h)
        stack.extend((c, h + 1) for c in node.children if not isinstance(c, str))
    return best


class ParseError(ValueError):
    def __init__(self, offset: int, expected: Sequence[str]):
        self.offset = offset
        self.expected = tuple(expected)
        shown = ", ".join(repr(e) for e in self.expected) or "end of input"
        super().__init__(f"parse failed at offset {offset}; expected one of: {shown}")


class _Compiled:
    """Grammar flattened to integer ids for the recognizer."""

    def __init__(self, g: Grammar):
        self.grammar = g
        self.names = list(g.rules)
        self.ids = {name: i for i, name in enumerate(self.names)}
        self.choices: List[List[Tuple[Union[int, str], ...]]] = []
        for name in self.names:
            alts = []
            for c in g.rules[name].choices:
                if c.is_epsilon:
                    alts.append(())
                else:
                    alts.append(tuple(s.value if s.is_terminal else self.ids[s.value] for s in c.symbols))
            self.choices.append(alts)
        self.start = self.ids[g.start]


_compiled_cache: Dict[int, Tuple[Grammar, _Compiled]] = {}


def _compile(g: Grammar) -> _Compiled:
    hit = _compiled_cache.get(id(g))
    if hit is not None and hit[0] is g:
        return hit[1]
    if g.start not in g.rules:
        raise GrammarError(f"start symbol {g.start} has no rule")
    comp = _Compiled(g)
    if len(_compiled_cache) > 64:
        _compiled_cache.clear()
    _compiled_cache[id(g)] = (g, comp)
    return comp


def _recognize(comp: _Compiled, text: str):
    """Run the Earley recognizer; returns ``ends[(nt, i)] -> set of j``."""
    n = len(text)
    choices = comp.choices
    sets: List[List[tuple]] = [[] for _ in range(n + 1)]
    seen: List[set] = [set() for _ in range(n + 1)]
    waiting: List[Dict[int, list]] = [defaultdict(list) for _ in range(n + 1)]
    predicted: List[set] = [set() for _ in range(n + 1)]
    ends: Dict[Tuple[int, int], set] = defaultdict(set)

    def add(j, item):
        if item not in seen[j]:
            seen[j].add(item)
            sets[j].append(item)

    predicted[0].add(comp.start)
    for c in range(len(choices[comp.start])):
        add(0, (comp.start, c, 0, 0))

    for j in range(n + 1):
        items = sets[j]
        k = 0
        while k < len(items):
            item = items[k]
            k += 1
            a, c, d, i = item
            syms = choices[a][c]
            if d == len(syms):
                span_ends = ends[(a, i)]
                if j in span_ends:
                    continue
                span_ends.add(j)
                for b, c2, d2, i2 in list(waiting[i].get(a, ())):
                    add(j, (b, c2, d2 + 1, i2))
                continue
            s = syms[d]
            if type(s) is int:
                waiting[j][s].append(item)
                if j in ends.get((s, j), ()):
                    add(j, (a, c, d + 1, i))
                if s not in predicted[j]:
                    predicted[j].add(s)
                    for c2 in range(len(choices[s])):
                        add(j, (s, c2, 0, j))
            elif text.startswith(s, j):
                add(j + len(s), (a, c, d + 1, i))
    return sets, ends


def _failure(comp: _Compiled, text: str, sets) -> ParseError:
    furthest = max(j for j, items in enumerate(sets) if items)
    expected = set()
    for a, c, d, i in sets[furthest]:
        syms = comp.choices[a][c]
        if d < len(syms) and isinstance(syms[d], str):
            expected.add(syms[d])
    return ParseError(furthest, sorted(expected))


class _Extractor:
    def __init__(self, comp: _Compiled, text: str, ends):
        self.comp = comp
        self.text = text
        self.ends = ends
        self.feasible_memo: Dict[tuple, bool] = {}
        self.decision_memo: Dict[tuple, tuple] = {}

    def feasible(self, a, c, k, pos, j) -> bool:
        """Do symbols k.. of choice c of a derive text[pos:j]?"""
        key = (a, c, k, pos, j)
        hit = self.feasible_memo.get(key)
        if hit is not None:
            return hit
        syms = self.comp.choices[a][c]
        if k == len(syms):
            ok = pos == j
        else:
            s = syms[k]
            if type(s) is int:
                ok = any(e <= j and self.feasible(a, c, k + 1, e, j) for e in self.ends.get((s, pos), ()))
            else:
                ok = self.text.startswith(s, pos) and pos + len(s) <= j and self.feasible(a, c, k + 1, pos + len(s), j)
        self.feasible_memo[key] = ok
        return ok

    def splits(self, a, c, k, pos, j) -> Iterator[list]:
        syms = self.comp.choices[a][c]
        if k == len(syms):
            if pos == j:
                yield []
            return
        s = syms[k]
        if type(s) is int:
            for e in sorted(self.ends.get((s, pos), ())):
                if e <= j and self.feasible(a, c, k + 1, e, j):
                    for rest in self.splits(a, c, k + 1, e, j):
                        yield [(s, pos, e)] + rest
        elif self.feasible(a, c, k, pos, j):
            for rest in self.splits(a, c, k + 1, pos + len(s), j):
                yield [(s, pos, pos + len(s))] + rest

    def decide(self, a, i, j, ctx: frozenset):
        """(choice, parts) for span (a, i, j) avoiding same-span ancestors in ctx."""
        key = (a, i, j, ctx)
        if key in self.decision_memo:
            return self.decision_memo[key]
        result = None
        inner = ctx | {a}
        for c in range(len(self.comp.choices[a])):
            if not self.feasible(a, c, 0, i, j):
                continue
            for parts in self.splits(a, c, 0, i, j):
                if all(
                    isinstance(s, str) or (ps, pe) != (i, j) or (s not in inner and self.decide(s, i, j, inner))
                    for s, ps, pe in parts
                ):
                    result = (c, parts)
                    break
            if result is not None:
                break
        self.decision_memo[key] = result
        return result

    def build(self, i: int, j: int) -> Node:
        comp = self.comp
        names = comp.names
        root_slot: list = [None]
        # Each frame fills one slot with a Node once its children are done.
        stack = [(comp.start, i, j, frozenset(), root_slot, 0)]
        pending = []
        while stack:
            a, si, sj, ctx, slot, slot_idx = stack.pop()
            decision = self.decide(a, si, sj, ctx)
            if decision is None:
                raise AssertionError("recognized span without derivation")
            c, parts = decision
            children: list = [None] * len(parts) if parts else [""]
            pending.append((names[a], c, children, slot, slot_idx))
            inner = ctx | {a}
            for idx in range(len(parts) - 1, -1, -1):
                s, ps, pe = parts[idx]
                if isinstance(s, str):
                    children[idx] = s
                else:
                    stack.append((s, ps, pe, inner if (ps, pe) == (si, sj) else frozenset(), children, idx))
        # Children frames were pushed after their parent, so finish in reverse.
        for name, c, children, slot, slot_idx in reversed(pending):
            slot[slot_idx] = Node(name, c, tuple(children))
        return root_slot[0]


def parse_input(g: Grammar, text: Union[str, bytes]) -> Node:
    """Parse ``text`` and return one derivation tree (see module docstring)."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    comp = _compile(g)
    sets, ends = _recognize(comp, text)
    if len(text) not in ends.get((comp.start, 0), ()):
        raise _failure(comp, text, sets)
    return _Extractor(comp, text, ends).build(0, len(text))


def is_parseable(g: Grammar, text: Union[str, bytes]) -> bool:
    try:
        parse_input(g, text)
    except (ParseError, UnicodeDecodeError):
        return False
    return True


@dataclass
class ChoiceCounts:
    """Usage count per (rule lhs, choice index)."""

    counts: Dict[Tuple[str, int], int] = field(default_factory=dict)

    @classmethod
    def zeros(cls, g: Grammar) -> "ChoiceCounts":
        return cls({key: 0 for key in g.keys()})

    def __getitem__(self, key: Tuple[str, int]) -> int:
        return self.counts[key]

    def __add__(self, other: "ChoiceCounts") -> "ChoiceCounts":
        merged = dict(self.counts)
        for key, v in other.counts.items():
            merged[key] = merged.get(key, 0) + v
        return ChoiceCounts(merged)

    def rule_counts(self, g: Grammar, lhs: str) -> List[int]:
        return [self.counts.get((lhs, i), 0) for i in range(g.rules[lhs].n)]

    def add_tree(self, tree: Node) -> None:
        counts = self.counts
        for node in iter_nodes(tree):
            key = (node.lhs, node.choice)
            if key not in counts:
                raise GrammarError(f"tree references unknown choice {node.lhs}:{node.choice}")
            counts[key] += 1


def count_choices(trees: Iterable[Node], g: Grammar) -> ChoiceCounts:
    counts = ChoiceCounts.zeros(g)
    for tree in trees:
        counts.add_tree(tree)
    return counts


def learn_probabilities(g: Grammar, counts: ChoiceCounts) -> ProbabilisticGrammar:
    """Relative choice frequencies per rule; unused rules fall back to uniform."""
    for key in counts.counts:
        lhs, idx = key
        if lhs not in g.rules or not 0 <= idx < g.rules[lhs].n:
            raise GrammarError(f"counts reference unknown choice {lhs}:{idx}")
    probs = {}
    for rule in g:
        c = counts.rule_counts(g, rule.lhs)
        total = sum(c)
        if total == 0:
            probs[rule.lhs] = (1.0 / rule.n,) * rule.n
        else:
            probs[rule.lhs] = tuple(x / total for x in c)
    return ProbabilisticGrammar(g, probs)


class LearningError(ValueError):
    pass


@dataclass(frozen=True)
class ParseStatus:
    index: int
    ok: bool
    error: Optional[str] = None
    name: Optional[str] = None


def learn_from_corpus(
    g: Grammar, texts: Sequence[Union[str, bytes]], names: Optional[Sequence[str]] = None
) -> Tuple[ProbabilisticGrammar, List[ParseStatus]]:
    check_valid(g)
    counts = ChoiceCounts.zeros(g)
    statuses = []
    for i, text in enumerate(texts):
        name = names[i] if names is not None else None
        try:
            tree = parse_input(g, text)
        except (ParseError, UnicodeDecodeError) as exc:
            log.warning("skipping unparseable seed %s: %s", name if name is not None else i, exc)
            statuses.append(ParseStatus(i, False, str(exc), name))
            continue
        counts.add_tree(tree)
        statuses.append(ParseStatus(i, True, None, name))
    if not any(s.ok for s in statuses):
        raise LearningError(f"none of the {len(statuses)} seed inputs parse; nothing to learn from")
    return learn_probabilities(g, counts), statuses


def read_corpus(directory) -> Tuple[List[str], List[bytes]]:
    """Read every regular file in ``directory`` (sorted by name) as one input."""
    from pathlib import Path

    paths = sorted(p for p in Path(directory).iterdir() if p.is_file())
    return [p.name for p in paths], [p.read_bytes() for p in paths]
