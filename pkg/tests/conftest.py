import time

import pytest

from btbsim import engine, oracle
from btbsim.scenario import load_scenario

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance():
    """Record one PASS/FAIL line per criterion; printed at the end of the session."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}: {detail}"
        ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


class Timed:
    def __init__(self, log, wall):
        self.log = log
        self.wall = wall


def _timed(fn, *args, **kw) -> Timed:
    t0 = time.perf_counter()
    log = fn(*args, **kw)
    return Timed(log, time.perf_counter() - t0)


@pytest.fixture(scope="session")
def scenario_a():
    return load_scenario("scenario_a")


@pytest.fixture(scope="session")
def scenario_b():
    return load_scenario("scenario_b")


@pytest.fixture(scope="session")
def phasor_a(scenario_a) -> Timed:
    return _timed(engine.run, scenario_a)


@pytest.fixture(scope="session")
def phasor_b(scenario_b) -> Timed:
    return _timed(engine.run, scenario_b)


@pytest.fixture(scope="session")
def oracle_a(scenario_a) -> Timed:
    return _timed(oracle.run_fine, scenario_a)


@pytest.fixture(scope="session")
def oracle_b(scenario_b) -> Timed:
    return _timed(oracle.run_fine, scenario_b)
