import sys
import time

import pytest

from slicemem.fixtures import clean_config
from slicemem.sar import reference_config, run_scenario


@pytest.fixture(scope="session")
def small_sim():
    return run_scenario(clean_config())


@pytest.fixture(scope="session")
def small_trace(small_sim):
    return small_sim.trace


@pytest.fixture(scope="session")
def reference_run():
    """The reference preset, run once per session; returns (simulation, seconds)."""
    start = time.perf_counter()
    sim = run_scenario(reference_config())
    return sim, time.perf_counter() - start


def pytest_terminal_summary(terminalreporter):
    mod = next((m for n, m in sys.modules.items() if n.endswith("test_acceptance")), None)
    RESULTS = getattr(mod, "RESULTS", None)
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
