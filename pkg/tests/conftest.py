import pytest

from treecipher import parse

WORKED_T1 = "B(A(A,B),A(C,C),C)"
WORKED_T2 = "β(α(α,β),α(γ,γ),γ)"
# worked example: T1 node ids in preorder, T2 likewise
WORKED_PAIRS = {0: 0, 7: 7, 4: 4, 1: 1, 2: 2, 3: 3}

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def worked_pair():
    return parse(WORKED_T1), parse(WORKED_T2)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
