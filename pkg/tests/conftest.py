import pytest

_CRITERIA = {}


@pytest.fixture
def record_criterion():
    """Store one pass/fail line per acceptance criterion for the end-of-run summary."""

    def record(number, passed, detail):
        _CRITERIA[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])
