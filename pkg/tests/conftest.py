"""Shared fixtures and the acceptance-criteria summary hook."""

import pytest

# Populated by tests/test_acceptance.py; one line per acceptance criterion.
_criterion_lines = []


@pytest.fixture(scope="session")
def criterion_report():
    return _criterion_lines


def pytest_terminal_summary(terminalreporter, exitstatus):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criterion_lines):
            terminalreporter.write_line(line)
