import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geodamage import LoadProgram, MaterialLaw
from geodamage.config import RunConfig

settings.register_profile(
    "geodamage", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("geodamage")

BENCH_G = np.array([[0.0, 0.5], [0.5, -0.3]])


def bench_law(kind: str = "ball") -> MaterialLaw:
    """Benchmark material (the RunConfig defaults) with either constraint set."""
    return RunConfig(constraint_kind=kind).law()


@pytest.fixture
def law():
    return bench_law()


@pytest.fixture
def dp_law():
    return bench_law("drucker_prager")


@pytest.fixture
def bench_load():
    return LoadProgram(BENCH_G, T=1.0)


@pytest.fixture
def zero_load():
    return LoadProgram(np.zeros((2, 2)), T=1.0)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(test_acceptance.RESULTS):
        parts = test_acceptance.RESULTS[n]
        ok = all(p[1] for p in parts)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}")
        for _, _, line in parts:
            terminalreporter.write_line(f"    {line}")
