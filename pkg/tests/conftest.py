import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from holeale.euler_physics import GasModel

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def gas():
    return GasModel(1.4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance lines

def pytest_configure(config):
    config.acceptance = {}


@pytest.fixture
def acceptance(request):
    """Record (criterion number, passed, detail); printed once per criterion at the end."""
    store = request.config.acceptance

    def record(k, passed, detail):
        prev = store.get(k)
        if prev is not None:
            passed = prev[0] and passed
            detail = prev[1] + "; " + detail
        store[k] = (bool(passed), detail)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = getattr(config, "acceptance", {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(store):
        ok, detail = store[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
