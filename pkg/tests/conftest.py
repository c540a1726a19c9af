import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from arb.hamiltonians import DisorderSpec, XYModelSpec, generate_ensemble

settings.register_profile(
    "arb", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("arb")


@pytest.fixture(scope="session")
def nn_global_small():
    return generate_ensemble(XYModelSpec(4, 1.0, 10.0), DisorderSpec("global"), 50, 0.005, 3)


@pytest.fixture(scope="session")
def nn_global6():
    return generate_ensemble(XYModelSpec(6, 1.0, 10.0), DisorderSpec("global"), 200, 0.005, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
