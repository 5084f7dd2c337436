import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from emplearn import model

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def calibrated():
    return model.StructuralParams.calibrated(0.505, 0.198, 0.055)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def record(number, ok, detail):
    """Store a criterion verdict; repeated calls for one criterion AND together."""
    prev_ok, prev = ACCEPTANCE.get(number, (True, []))
    ACCEPTANCE[number] = (prev_ok and bool(ok), prev + [detail])
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, details = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  " + "; ".join(details))
