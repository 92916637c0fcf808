import pytest

#: (criterion number, passed, description) recorded by the acceptance suite
ACCEPTANCE_LINES: list = []


def record(number: int, passed: bool, text: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number:2d}: {text}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
