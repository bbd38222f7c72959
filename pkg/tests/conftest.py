import functools

import pytest

from transaffine import fixtures
from transaffine.connection import recalibrate
from transaffine.scenario import build_scenario

ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def scenario(name: str):
    return build_scenario(fixtures.get(name))


@functools.lru_cache(maxsize=None)
def recalibrated(name: str):
    sc = scenario(name)
    return recalibrate(sc.connection, sc.domain)


@pytest.fixture
def sc():
    return scenario


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
