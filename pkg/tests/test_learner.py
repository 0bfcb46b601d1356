import pytest
from hypothesis import given, settings, strategies as st

from evofuzz.generator import generate_one, substream
from evofuzz.grammar import GrammarError, parse_grammar_text, uniform_probabilities
from evofuzz.learner import (
    ChoiceCounts,
    LearningError,
    Node,
    ParseError,
    count_choices,
    iter_nodes,
    learn_from_corpus,
    learn_probabilities,
    parse_input,
    read_corpus,
    tree_yield,
)

from .oracles import enumerate_trees


def derivations(g, text):
    # toy grammars here have no empty choices, so height <= 3 * len bounds every derivation
    return [t for t, s in enumerate_trees(g, g.start, 3 * len(text) + 2, len(text)) if s == text]


def test_empty_list_parse(toy):
    tree = parse_input(toy, "[]")
    assert tree == Node("start", 0, (Node("list", 0, ("[", "]")),))
    assert derivations(toy, "[]") == [tree]


def test_pair_parse_unique(toy):
    tree = parse_input(toy, "[1,1]")
    assert derivations(toy, "[1,1]") == [tree]


def test_parse_failure_offset(toy):
    with pytest.raises(ParseError) as err:
        parse_input(toy, "[2]")
    assert err.value.offset == 1
    assert "1" in err.value.expected


def test_parse_failure_trailing(toy):
    with pytest.raises(ParseError) as err:
        parse_input(toy, "[]]")
    assert err.value.offset == 2


def test_parse_accepts_bytes(toy):
    assert parse_input(toy, b"[1]") == parse_input(toy, "[1]")


def test_left_recursion_and_ambiguity():
    g = parse_grammar_text('e : e "+" e | "1" ;')
    tree = parse_input(g, "1+1+1")
    all_trees = derivations(g, "1+1+1")
    assert len(all_trees) == 2
    assert tree in all_trees
    # lowest choice, then shortest leftmost child: the right-nested tree
    assert tree.children[0] == Node("e", 1, ("1",))
    assert parse_input(g, "1+1+1") == tree


def test_unit_cycles_and_epsilon_terminate():
    g = parse_grammar_text('a : b | "x" ; b : a | c ; c : "" | "y" ;')
    tree = parse_input(g, "x")
    assert tree_yield(tree) == "x"
    empty = parse_input(g, "")
    assert tree_yield(empty) == ""
    assert any(n.lhs == "c" and n.choice == 0 for n in iter_nodes(empty))


def test_count_single_empty_list(toy):
    counts = count_choices([parse_input(toy, "[]")], toy)
    expected = {key: 0 for key in toy.keys()}
    expected.update({("start", 0): 1, ("list", 0): 1})
    assert counts.counts == expected


def test_count_pair(toy):
    counts = count_choices([parse_input(toy, "[1,1]")], toy)
    expected = {key: 0 for key in toy.keys()}
    expected.update({("start", 0): 1, ("list", 1): 1, ("items", 1): 1, ("items", 0): 1, ("item", 0): 2})
    assert counts.counts == expected


def test_count_empty_sequence(toy):
    assert set(count_choices([], toy).counts.values()) == {0}


def test_count_unknown_choice(toy):
    with pytest.raises(GrammarError):
        count_choices([Node("list", 7, ())], toy)


def test_counts_merge_additively(toy):
    a = count_choices([parse_input(toy, "[]")], toy)
    b = count_choices([parse_input(toy, "[1,1]")], toy)
    both = count_choices([parse_input(toy, "[]"), parse_input(toy, "[1,1]")], toy)
    assert (a + b).counts == both.counts == (b + a).counts


@pytest.mark.parametrize(
    "counts, expected",
    [((7, 3), (0.7, 0.3)), ((0, 0), (0.5, 0.5)), ((5, 0), (1.0, 0.0))],
)
def test_learn_relative_frequency(counts, expected):
    g = parse_grammar_text('s : "a" | "b" ;')
    pg = learn_probabilities(g, ChoiceCounts({("s", 0): counts[0], ("s", 1): counts[1]}))
    assert pg.probs["s"] == pytest.approx(expected, abs=1e-12)
    if 0 in counts and sum(counts):
        assert 0.0 in pg.probs["s"]


def test_corpus_empty_list_only(toy):
    pg, statuses = learn_from_corpus(toy, ["[]"])
    assert pg.probs["list"] == (1.0, 0.0)
    assert pg.probs["items"] == (0.5, 0.5)
    assert pg.probs["item"] == (0.5, 0.5)
    assert [s.ok for s in statuses] == [True]


def test_corpus_two_seeds(toy):
    pg, _ = learn_from_corpus(toy, ["[]", "[1,1]"])
    assert pg.probs["list"] == (0.5, 0.5)
    assert pg.probs["items"] == (0.5, 0.5)
    assert pg.probs["item"] == (1.0, 0.0)


def test_corpus_skips_unparseable(toy):
    pg, statuses = learn_from_corpus(toy, ["[2]", "[]"])
    assert pg == learn_from_corpus(toy, ["[]"])[0]
    assert [s.ok for s in statuses] == [False, True]
    assert "offset 1" in statuses[0].error


def test_corpus_nothing_parses(toy):
    with pytest.raises(LearningError):
        learn_from_corpus(toy, ["[2]", "x"])
    with pytest.raises(LearningError):
        learn_from_corpus(toy, [])


def test_read_corpus(tmp_path):
    (tmp_path / "b").write_bytes(b"[1]")
    (tmp_path / "a").write_bytes(b"[]")
    (tmp_path / "sub").mkdir()
    assert read_corpus(tmp_path) == (["a", "b"], [b"[]", b"[1]"])


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_round_trip_and_count_conservation(shipped_grammars, seed):
    for g in shipped_grammars:
        ind = generate_one(uniform_probabilities(g), 24, substream(seed), max_expansions=200)
        tree = parse_input(g, ind.text)
        assert tree_yield(tree) == ind.text
        assert parse_input(g, ind.text) == tree
        counts = count_choices([tree], g)
        for rule in g:
            nodes = sum(1 for n in iter_nodes(tree) if n.lhs == rule.lhs)
            assert sum(counts.rule_counts(g, rule.lhs)) == nodes


@pytest.fixture(scope="module")
def shipped_grammars():
    from evofuzz.cli import data_path
    from evofuzz.grammar import load_grammar

    return [load_grammar(data_path("grammars", f"{n}.grammar")) for n in ("list", "json", "expr")]
