"""Collects one pass/fail line per acceptance criterion and prints them at the end of the run."""
import pytest

CRITERIA = {
    1: "linear-algebra oracles",
    2: "gradient check",
    3: "average-precision oracle",
    4: "degenerate equivalences",
    5: "anchor alignment",
    6: "communication accounting",
    7: "synthetic non-iid comparison",
    8: "journal global-anomaly ceiling",
    9: "determinism",
    10: "privacy boundary",
}
_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    def record(number: int, passed: bool, detail: str) -> None:
        _RESULTS[number] = (bool(passed), detail)
        print(_line(number))

    return record


def _line(number: int) -> str:
    if number not in _RESULTS:
        return f"criterion {number:2d} [NOT RUN] {CRITERIA[number]}"
    passed, detail = _RESULTS[number]
    return f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {CRITERIA[number]}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in CRITERIA:
        terminalreporter.write_line(_line(number))
