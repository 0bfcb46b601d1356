import pytest

from evofuzz.cli import data_path
from evofuzz.grammar import load_grammar, parse_grammar_text

TOY_LIST = 'start : list ; list : "[" "]" | "[" items "]" ; items : item | item "," items ; item : "1" | list ;'

ACCEPTANCE_LINES = []


@pytest.fixture
def toy():
    return parse_grammar_text(TOY_LIST)


@pytest.fixture(scope="module", params=["list", "json", "expr"])
def shipped(request):
    return request.param, load_grammar(data_path("grammars", f"{request.param}.grammar"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
