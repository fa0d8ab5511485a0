import os
import sys
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rtkspoof.constellation import Constellation, Ephemeris, build_constellation

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def ephemeris():
    return Ephemeris(build_constellation(Constellation.GPS) + build_constellation(Constellation.GAL))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_shipped_cache = {}
_shipped_runtime = {}


@pytest.fixture(scope="session")
def shipped():
    """Lazily runs each shipped scenario once per session: name -> (cfg, result)."""
    from rtkspoof.scenario import load_scenario, run_scenario, shipped_scenario

    def get(name):
        if name not in _shipped_cache:
            cfg = load_scenario(shipped_scenario(name))
            t0 = time.perf_counter()
            _shipped_cache[name] = (cfg, run_scenario(cfg))
            _shipped_runtime[name] = time.perf_counter() - t0
        return _shipped_cache[name]

    get.runtime = _shipped_runtime
    return get


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
