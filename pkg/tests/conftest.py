from __future__ import annotations

import pytest

_GATE = pytest.StashKey[dict]()


@pytest.fixture(scope="session")
def gate(request):
    """Record one PASS/FAIL/SKIPPED line per acceptance criterion."""
    return request.config.stash.setdefault(_GATE, {})


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_GATE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
