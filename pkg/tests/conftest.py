"""Shared test plumbing: the acceptance criterion report.

Acceptance tests register one verdict line each; the collected lines
are printed as a block after the run so the pass/fail status of every
criterion is visible in one place regardless of output capturing.
"""

_criterion_lines = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    _criterion_lines[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'} - {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criterion_lines):
        terminalreporter.write_line(_criterion_lines[number])
