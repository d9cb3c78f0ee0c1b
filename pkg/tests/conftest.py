import pytest

VERDICTS = []


@pytest.fixture
def verdict():
    """Record a one-line verdict for the terminal summary, then assert it."""

    def check(label, ok, detail):
        VERDICTS.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        print(VERDICTS[-1])
        assert ok, detail

    return check


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
