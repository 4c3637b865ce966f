import pytest

from eulertvc import problems

ACCEPTANCE_LINES = []


@pytest.fixture
def counterexample():
    return problems.load("counterexample")


@pytest.fixture
def tracking():
    return problems.load("discounted_tracking")


@pytest.fixture
def ramsey():
    return problems.load("ramsey")


@pytest.fixture
def problem_file(tmp_path):
    def make(name):
        dest = tmp_path / f"{name}.prob"
        dest.write_text(problems.source(name))
        return str(dest)

    return make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
