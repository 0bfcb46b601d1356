import math
import random
import sys

import pytest
from hypothesis import given, settings, strategies as st

from evofuzz.harness import (
    AdapterError,
    Classifier,
    ExecutionResult,
    JSON_BRANCHES,
    TargetSpec,
    builtin_json_target,
    coverage_union,
    execute,
    mann_whitney_u,
    parse_target,
)
from evofuzz.harness.execute import classify
from evofuzz.harness.stats import rankdata, u_distribution

from .oracles import brute_force_p

PY = sys.executable


def py_cmd(code):
    return f"{PY} -c {code!r}"


# external targets

def test_external_ok():
    target = TargetSpec.external("cp {} /dev/null")
    assert execute(target, b"abc").outcome == "ok"


def test_external_reads_stdin_without_placeholder():
    code = "import sys; sys.exit(0 if sys.stdin.read() == 'hi' else 1)"
    assert execute(TargetSpec.external(py_cmd(code)), b"hi").outcome == "ok"
    assert execute(TargetSpec.external(py_cmd(code)), b"no").exception_type == "exit:1"


def test_classifier_names_exception():
    code = "import sys; print('Exception: NumberFormat at line 3'); sys.exit(1)"
    target = TargetSpec.external(py_cmd(code), classifiers=(Classifier(r"Exception: (\w+)"),))
    assert execute(target, b"").exception_type == "NumberFormat"


def test_timeout():
    target = TargetSpec.external(py_cmd("import time; time.sleep(10)"), timeout_ms=300)
    result = execute(target, b"")
    assert result.outcome == "timeout"
    assert result.failure_type == "Timeout"
    assert result.duration_ms < 5000


def test_missing_command_is_adapter_error():
    with pytest.raises(AdapterError):
        execute(TargetSpec.external("/nonexistent/binary-xyz {}"), b"")


def test_exit_code_policy():
    target = TargetSpec.external(py_cmd("import sys; sys.exit(4)"))
    assert execute(target, b"").exception_type == "exit:4"
    lenient = TargetSpec.external(py_cmd("import sys; sys.exit(4)"), nonzero_exit_is_exception=False)
    assert execute(lenient, b"").outcome == "ok"


def test_output_capture_is_bounded():
    code = "import sys; sys.stdout.write('x' * 2000000 + 'Exception: Late')"
    target = TargetSpec.external(py_cmd(code), classifiers=(Classifier(r"Exception: (\w+)"),),
                                 capture_limit=1024, nonzero_exit_is_exception=False)
    assert execute(target, b"").outcome == "ok"


def test_first_classifier_wins():
    target = TargetSpec.external("true", classifiers=(Classifier(r"(Second)"), Classifier(r"(First)")))
    assert classify(target, 0, "First then Second").exception_type == "Second"
    assert classify(target, 0, "nothing").outcome == "ok"


def test_classifier_without_group_uses_match():
    assert Classifier(r"Segfault").match("a Segfault here") == "Segfault"


def test_parse_target():
    assert parse_target("builtin:json").has_coverage
    assert not parse_target("builtin:noop").has_coverage
    assert parse_target("cmd:cat {}").command == "cat {}"
    for bad in ("json", "builtin:nope", "other:x", "cmd:"):
        with pytest.raises(ValueError):
            parse_target(bad)


def test_builtin_escaping_exception_is_outcome():
    def broken(data):
        raise KeyError("x")

    assert execute(TargetSpec.builtin(broken), b"").exception_type == "KeyError"


# JSON target

def test_json_examples():
    ok = builtin_json_target(b"[]")
    assert ok.outcome == "ok" and 0 < len(ok.coverage) < 10
    deep = b"[" * 21 + b"]" * 21
    assert builtin_json_target(deep).exception_type == "DepthError"
    assert builtin_json_target(b"[" * 20 + b"]" * 20).outcome == "ok"
    assert builtin_json_target(b"1234567890123").exception_type == "NumberFormatError"
    assert builtin_json_target(b"123456789012").outcome == "ok"
    assert builtin_json_target(b"[1,").exception_type == "SyntaxError"


def test_json_coverage_ids_are_known():
    for text in [b'{"a":[1,2.5e3,true,null,"x\\n"]}', b"[", b"-0.1", b'"\\u00e9"', b"  {} "]:
        cov = builtin_json_target(text).coverage
        assert cov <= set(JSON_BRANCHES)


@given(st.binary(max_size=64))
def test_json_target_deterministic(data):
    a, b = builtin_json_target(data), builtin_json_target(data)
    assert (a.outcome, a.exception_type, a.coverage) == (b.outcome, b.exception_type, b.coverage)


def test_coverage_union_examples():
    assert coverage_union([], 10).percent == 0.0
    rs = [ExecutionResult.ok(frozenset({"1", "2"})), ExecutionResult.ok(frozenset({"2", "3"}))]
    assert coverage_union(rs, 10).percent == 30.0
    assert coverage_union([ExecutionResult.ok(frozenset({"a", "b"}))], 2).percent == 100.0


# Mann-Whitney U

def test_mw_small_example():
    u, p = mann_whitney_u([1, 2], [3, 4])
    assert u == 0 and p == pytest.approx(2 / 6, abs=1e-15)


def test_mw_identical_samples():
    u, p = mann_whitney_u([1, 2, 3], [1, 2, 3])
    assert u == 4.5 and p == 1.0
    assert mann_whitney_u([5, 5], [5, 5, 5]).p == 1.0


def test_mw_separated_eight():
    u, p = mann_whitney_u(list(range(1, 9)), list(range(9, 17)))
    assert u == 0 and p == pytest.approx(2 / math.comb(16, 8), rel=1e-12)


def test_mw_exact_rejects_ties():
    with pytest.raises(ValueError):
        mann_whitney_u([1, 2], [2, 3], method="exact")


def test_u_distribution_totals():
    for m in range(6):
        for n in range(6):
            assert sum(u_distribution(m, n)) == math.comb(m + n, m)


def test_rankdata_midranks():
    assert rankdata([3, 1, 3, 2]) == [3.5, 1.0, 3.5, 2.0]


@settings(max_examples=100)
@given(st.lists(st.integers(0, 30), min_size=1, max_size=12), st.lists(st.integers(0, 30), min_size=1, max_size=12))
def test_mw_symmetry(a, b):
    ua, pa = mann_whitney_u(a, b)
    ub, pb = mann_whitney_u(b, a)
    assert ua + ub == pytest.approx(len(a) * len(b))
    assert pa == pytest.approx(pb)
    assert 0 <= pa <= 1


def test_mw_exact_matches_oracle_sample():
    rng = random.Random(0)
    for _ in range(30):
        values = rng.sample(range(100), 7)
        a, b = values[:3], values[3:]
        assert mann_whitney_u(a, b, method="exact").p == pytest.approx(brute_force_p(a, b)[1], abs=1e-12)
