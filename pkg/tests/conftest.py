import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(label, ok, detail):
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
