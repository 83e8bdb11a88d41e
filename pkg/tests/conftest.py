import functools

import pytest

from meshcop.harness import ExplorationConfig
from meshcop.queries import run_suite

ACCEPTANCE_LINES: list = []


@functools.lru_cache(maxsize=None)
def cached_suite(scenario="full", mode="adversarial", mutations=(), selection=None, **kw):
    cfg = ExplorationConfig(scenario=scenario, mode=mode, mutations=frozenset(mutations), **kw)
    return run_suite(cfg, None if selection is None else list(selection))


@pytest.fixture(scope="session")
def default_report():
    return cached_suite()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
