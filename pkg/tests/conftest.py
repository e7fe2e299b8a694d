import pytest

from protoreplay import generate

from helpers import CRITERION_LINES, TINY_SPEC


@pytest.fixture(scope="session")
def tiny_bench(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_bench")
    generate(TINY_SPEC, root)
    return root


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
