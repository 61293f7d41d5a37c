import time

import pytest

from streamassoc.experiments import kl_trial, stream_trial

N_SEEDS = 20
_lines = []


def report(name, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    _lines.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if _lines:
        terminalreporter.section("acceptance criteria")
        for line in _lines:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def kl04_trials():
    start = time.perf_counter()
    trials = [kl_trial(0.4, seed) for seed in range(N_SEEDS)]
    return trials, time.perf_counter() - start


@pytest.fixture(scope="session")
def stream_reports():
    start = time.perf_counter()
    reports = [stream_trial(seed) for seed in range(N_SEEDS)]
    return reports, time.perf_counter() - start
