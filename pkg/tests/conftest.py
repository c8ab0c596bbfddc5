from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from aec.environment import micro_schema
from aec.store import Atom

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def micro():
    return micro_schema()


def A(text: str) -> Atom:
    return Atom.parse(text)


# -- acceptance summary ------------------------------------------------------

CRITERIA = [f"C{i}" for i in range(1, 11)]
ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def record(request):
    """Record one pass/fail line for an acceptance criterion."""
    lines = request.config.stash[ACCEPTANCE]

    def _record(cid: str, passed: bool, detail: str) -> None:
        line = f"{cid:<4}{'PASS' if passed else 'FAIL'}  {detail}"
        lines[cid] = line
        print(line)
    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for cid in CRITERIA:
        terminalreporter.write_line(lines.get(cid, f"{cid:<4}NOT RUN"))
