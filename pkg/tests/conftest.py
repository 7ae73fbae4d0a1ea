from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from coversieve.certifier import table_for
from coversieve.congruence import CongruenceSystem
from coversieve.primes import exp_floor, sieve_primes

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Acceptance results collected by tests/test_acceptance.py, printed at the end of the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def small_table():
    return sieve_primes(10**6)


@pytest.fixture(scope="session")
def stage_table():
    # primes up to e^14, enough for every numeric stage of the default schedule
    return table_for(exp_floor(14))


@pytest.fixture
def erdos():
    return CongruenceSystem.from_pairs([(0, 2), (0, 3), (1, 4), (3, 8), (7, 12), (23, 24)])
