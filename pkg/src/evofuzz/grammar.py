"""Context-free grammars, their probabilistic extension, and the text format.

Grammar text format::

    // comment
    start : list ;
    list  : "[" "]" | "[" items "]" ;

The lhs of the first rule is the start symbol.  ``""`` denotes the empty
string and may only appear as the sole symbol of a choice.  A probabilistic
grammar prefixes every choice with ``<p>``::

    list : <0.5> "[" "]" | <0.5> "[" items "]" ;
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

SIMPLEX_TOLERANCE = 1e-9

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class GrammarError(ValueError):
    """Raised for malformed grammar text or grammars violating a precondition."""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        if line is not None:
            message = f"{line}:{column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Symbol:
    is_terminal: bool
    value: str

    @classmethod
    def terminal(cls, text: str) -> "Symbol":
        return cls(True, text)

    @classmethod
    def nonterminal(cls, name: str) -> "Symbol":
        if not _IDENT_RE.match(name):
            raise GrammarError(f"invalid nonterminal name {name!r}")
        return cls(False, name)

    def __str__(self) -> str:
        return _quote(self.value) if self.is_terminal else self.value


@dataclass(frozen=True)
class Choice:
    index: int
    symbols: Tuple[Symbol, ...]

    @property
    def nonterminals(self) -> Tuple[str, ...]:
        return tuple(s.value for s in self.symbols if not s.is_terminal)

    @property
    def is_epsilon(self) -> bool:
        return len(self.symbols) == 1 and self.symbols[0].is_terminal and self.symbols[0].value == ""

    def __str__(self) -> str:
        return " ".join(str(s) for s in self.symbols)


@dataclass(frozen=True)
class Rule:
    lhs: str
    choices: Tuple[Choice, ...]

    def __post_init__(self):
        if not self.choices:
            raise GrammarError(f"rule {self.lhs} has no choices")
        seen = set()
        for i, choice in enumerate(self.choices):
            if choice.index != i:
                raise GrammarError(f"rule {self.lhs}: choice indices must be contiguous from 0")
            if choice.symbols in seen:
                raise GrammarError(f"rule {self.lhs}: duplicate choice {choice}")
            seen.add(choice.symbols)
            for pos, sym in enumerate(choice.symbols):
                if sym.is_terminal and sym.value == "" and len(choice.symbols) != 1:
                    raise GrammarError(f"rule {self.lhs}: empty terminal must be the only symbol of a choice")

    @property
    def n(self) -> int:
        return len(self.choices)


@dataclass(frozen=True)
class Grammar:
    start: str
    rules: Mapping[str, Rule]

    @classmethod
    def from_dict(cls, rules: Mapping[str, Sequence[Sequence[str]]], start: Optional[str] = None) -> "Grammar":
        """Build a grammar from ``{lhs: [[symbol, ...], ...]}``.

        Symbols that name a key of ``rules`` are nonterminals; everything else
        is a terminal literal.  Handy for tests and programmatic grammars.
        """
        built: Dict[str, Rule] = {}
        for lhs, alternatives in rules.items():
            choices = []
            for i, alt in enumerate(alternatives):
                syms = tuple(
                    Symbol.nonterminal(s) if s in rules else Symbol.terminal(s) for s in alt
                ) or (Symbol.terminal(""),)
                choices.append(Choice(i, syms))
            built[lhs] = Rule(lhs, tuple(choices))
        return cls(start if start is not None else next(iter(rules)), built)

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.rules.values())

    def keys(self) -> Iterator[Tuple[str, int]]:
        """All (lhs, choice index) pairs in grammar order."""
        for rule in self.rules.values():
            for choice in rule.choices:
                yield rule.lhs, choice.index

    def to_text(self) -> str:
        return "".join(
            f"{rule.lhs} : " + " | ".join(str(c) for c in rule.choices) + " ;\n" for rule in self
        )


@dataclass(frozen=True)
class ProbabilisticGrammar:
    """A grammar plus one probability vector per rule, indexed by choice."""

    grammar: Grammar
    probs: Mapping[str, Tuple[float, ...]]

    def __post_init__(self):
        for rule in self.grammar:
            p = self.probs.get(rule.lhs)
            if p is None or len(p) != rule.n:
                raise GrammarError(f"rule {rule.lhs}: expected {rule.n} probabilities")
            if any(not (0.0 <= x <= 1.0) for x in p):
                raise GrammarError(f"rule {rule.lhs}: probabilities must lie in [0, 1]: {p}")
            if abs(math.fsum(p) - 1.0) > SIMPLEX_TOLERANCE:
                raise GrammarError(f"rule {rule.lhs}: probabilities sum to {math.fsum(p)!r}, not 1")
        extra = set(self.probs) - set(self.grammar.rules)
        if extra:
            raise GrammarError(f"probabilities for unknown rules: {sorted(extra)}")

    def prob(self, lhs: str, index: int) -> float:
        return self.probs[lhs][index]

    def replace(self, updates: Mapping[str, Sequence[float]]) -> "ProbabilisticGrammar":
        probs = dict(self.probs)
        for lhs, p in updates.items():
            probs[lhs] = tuple(float(x) for x in p)
        return ProbabilisticGrammar(self.grammar, probs)

    def to_text(self) -> str:
        lines = []
        for rule in self.grammar:
            alts = " | ".join(f"<{p!r}> {c}" for p, c in zip(self.probs[rule.lhs], rule.choices))
            lines.append(f"{rule.lhs} : {alts} ;\n")
        return "".join(lines)


# ---------------------------------------------------------------------------
# Text format

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}
_UNESCAPES = {v: "\\" + k for k, v in _ESCAPES.items()}


def _quote(text: str) -> str:
    return '"' + "".join(_UNESCAPES.get(ch, ch) for ch in text) + '"'


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<prob><[^>\n]*>)
  | (?P<punct>[:|;])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            if text[pos] == '"':
                raise GrammarError("unterminated string literal", line, col)
            raise GrammarError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        tok = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(_Token(kind, tok, line, col))
        newlines = tok.count("\n")
        if newlines:
            line += newlines
            line_start = pos + tok.rindex("\n") + 1
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


def _unescape(tok: _Token) -> str:
    body = tok.text[1:-1]
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            esc = body[i + 1]
            if esc not in _ESCAPES:
                raise GrammarError(f"unknown escape \\{esc}", tok.line, tok.column + i + 1)
            out.append(_ESCAPES[esc])
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _parse(text: str):
    """Parse grammar text into (start, [(lhs, [(prob or None, symbols, token)])])."""
    tokens = _tokenize(text)
    pos = 0

    def expect(kind, value=None):
        nonlocal pos
        tok = tokens[pos]
        if tok.kind != kind or (value is not None and tok.text != value):
            want = repr(value) if value else kind
            got = repr(tok.text) if tok.kind != "eof" else "end of input"
            raise GrammarError(f"expected {want}, got {got}", tok.line, tok.column)
        pos += 1
        return tok

    rules = []
    seen: Dict[str, _Token] = {}
    while tokens[pos].kind != "eof":
        lhs_tok = expect("ident")
        if lhs_tok.text in seen:
            first = seen[lhs_tok.text]
            raise GrammarError(
                f"duplicate rule for {lhs_tok.text} (first defined at {first.line}:{first.column})",
                lhs_tok.line,
                lhs_tok.column,
            )
        seen[lhs_tok.text] = lhs_tok
        expect("punct", ":")
        alternatives = []
        while True:
            prob = None
            start_tok = tokens[pos]
            if start_tok.kind == "prob":
                pos += 1
                raw = start_tok.text[1:-1].strip()
                try:
                    prob = float(raw)
                except ValueError:
                    raise GrammarError(f"malformed probability {start_tok.text}", start_tok.line, start_tok.column)
                if not math.isfinite(prob):
                    raise GrammarError(f"malformed probability {start_tok.text}", start_tok.line, start_tok.column)
            symbols = []
            while tokens[pos].kind in ("ident", "string"):
                tok = tokens[pos]
                pos += 1
                if tok.kind == "ident":
                    symbols.append((Symbol(False, tok.text), tok))
                else:
                    symbols.append((Symbol(True, _unescape(tok)), tok))
            if not symbols:
                tok = tokens[pos]
                raise GrammarError(
                    f"expected a symbol, got {tok.text!r}" if tok.kind != "eof" else "expected a symbol, got end of input",
                    tok.line,
                    tok.column,
                )
            alternatives.append((prob, symbols, start_tok))
            if tokens[pos].kind == "punct" and tokens[pos].text == "|":
                pos += 1
                continue
            expect("punct", ";")
            break
        rules.append((lhs_tok, alternatives))
    if not rules:
        raise GrammarError("grammar has no rules", 1, 1)
    return rules


def _build(parsed) -> Tuple[Grammar, List[List[Optional[float]]]]:
    defined = {lhs.text for lhs, _ in parsed}
    built: Dict[str, Rule] = {}
    probs = []
    for lhs_tok, alternatives in parsed:
        choices = []
        seen = {}
        for i, (_, symbols, start_tok) in enumerate(alternatives):
            for sym, tok in symbols:
                if not sym.is_terminal and sym.value not in defined:
                    raise GrammarError(f"undefined nonterminal {sym.value}", tok.line, tok.column)
                if sym.is_terminal and sym.value == "" and len(symbols) != 1:
                    raise GrammarError('empty terminal "" must be the only symbol of a choice', tok.line, tok.column)
            syms = tuple(sym for sym, _ in symbols)
            if syms in seen:
                tok = symbols[0][1]
                raise GrammarError(
                    f"rule {lhs_tok.text}: choice {i} duplicates choice {seen[syms]}", tok.line, tok.column
                )
            seen[syms] = i
            choices.append(Choice(i, syms))
        built[lhs_tok.text] = Rule(lhs_tok.text, tuple(choices))
        probs.append([p for p, _, _ in alternatives])
    return Grammar(parsed[0][0].text, built), probs


def parse_grammar_text(text: str) -> Grammar:
    """Parse grammar text.  Probability annotations, if present, are ignored."""
    grammar, _ = _build(_parse(text))
    return grammar


def parse_probabilistic_grammar_text(text: str) -> ProbabilisticGrammar:
    """Parse grammar text in which every choice carries a ``<p>`` annotation."""
    parsed = _parse(text)
    grammar, probs = _build(parsed)
    table = {}
    for (lhs_tok, alternatives), rule_probs in zip(parsed, probs):
        for p, _, tok in alternatives:
            if p is None:
                raise GrammarError(f"rule {lhs_tok.text}: choice without probability annotation", tok.line, tok.column)
            if not 0.0 <= p <= 1.0:
                raise GrammarError(f"rule {lhs_tok.text}: probability {p!r} outside [0, 1]", tok.line, tok.column)
        total = math.fsum(rule_probs)
        if abs(total - 1.0) > SIMPLEX_TOLERANCE:
            raise GrammarError(
                f"rule {lhs_tok.text}: probabilities sum to {total!r}, not 1", lhs_tok.line, lhs_tok.column
            )
        table[lhs_tok.text] = tuple(rule_probs)
    return ProbabilisticGrammar(grammar, table)


# ---------------------------------------------------------------------------
# Analysis


@dataclass(frozen=True)
class Finding:
    category: str  # "undefined" | "unreachable" | "unproductive" | "missing-start"
    nonterminal: str
    message: str = field(default="", compare=False)

    def __str__(self) -> str:
        return self.message or f"{self.nonterminal}: {self.category}"


def _productive(g: Grammar) -> set:
    productive: set = set()
    changed = True
    while changed:
        changed = False
        for rule in g:
            if rule.lhs in productive:
                continue
            if any(all(nt in productive for nt in c.nonterminals) for c in rule.choices):
                productive.add(rule.lhs)
                changed = True
    return productive


def validate(g: Grammar) -> List[Finding]:
    """Check definedness, reachability from start, and productivity."""
    findings: List[Finding] = []
    if g.start not in g.rules:
        findings.append(Finding("missing-start", g.start, f"start symbol {g.start} has no rule"))
    undefined = []
    for rule in g:
        for c in rule.choices:
            for nt in c.nonterminals:
                if nt not in g.rules and nt not in undefined:
                    undefined.append(nt)
    for nt in undefined:
        findings.append(Finding("undefined", nt, f"nonterminal {nt} is referenced but has no rule"))

    reachable = set()
    stack = [g.start] if g.start in g.rules else []
    while stack:
        nt = stack.pop()
        if nt in reachable:
            continue
        reachable.add(nt)
        for c in g.rules[nt].choices:
            stack.extend(x for x in c.nonterminals if x in g.rules and x not in reachable)
    productive = _productive(g)
    for rule in g:
        if rule.lhs not in reachable:
            findings.append(Finding("unreachable", rule.lhs, f"nonterminal {rule.lhs} is unreachable from {g.start}"))
        if rule.lhs not in productive:
            findings.append(
                Finding("unproductive", rule.lhs, f"nonterminal {rule.lhs} derives no finite terminal string")
            )
    return findings


def check_valid(g: Grammar) -> None:
    findings = validate(g)
    if findings:
        raise GrammarError("invalid grammar: " + "; ".join(str(f) for f in findings))


def min_expansion_depth(g: Grammar) -> Dict[str, int]:
    """Least derivation-tree height needed for each nonterminal to reach terminals.

    A terminal-only choice has height 1.  Raises GrammarError if some
    nonterminal is unproductive.
    """
    depth: Dict[str, int] = {}
    changed = True
    while changed:
        changed = False
        for rule in g:
            best = depth.get(rule.lhs)
            for c in rule.choices:
                nts = c.nonterminals
                if all(nt in depth for nt in nts):
                    d = 1 + max((depth[nt] for nt in nts), default=0)
                    if best is None or d < best:
                        best = d
            if best is not None and depth.get(rule.lhs) != best:
                depth[rule.lhs] = best
                changed = True
    missing = [r.lhs for r in g if r.lhs not in depth]
    if missing:
        raise GrammarError(f"unproductive nonterminals: {', '.join(missing)}")
    return depth


def choice_heights(g: Grammar, depth: Optional[Mapping[str, int]] = None) -> Dict[str, Tuple[int, ...]]:
    """Minimal subtree height of each choice, given per-nonterminal min depths."""
    depth = depth if depth is not None else min_expansion_depth(g)
    return {
        rule.lhs: tuple(1 + max((depth[nt] for nt in c.nonterminals), default=0) for c in rule.choices)
        for rule in g
    }


def uniform_probabilities(g: Grammar) -> ProbabilisticGrammar:
    return ProbabilisticGrammar(g, {rule.lhs: (1.0 / rule.n,) * rule.n for rule in g})


def multi_choice_rules(g: Grammar) -> List[str]:
    return [rule.lhs for rule in g if rule.n >= 2]


def load_grammar(path, probabilistic: bool = False):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_probabilistic_grammar_text(text) if probabilistic else parse_grammar_text(text)
