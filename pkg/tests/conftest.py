import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance outcome: ``criterion(number, passed, detail)``."""

    def record(number, passed, detail):
        _ACCEPTANCE.append((number, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
