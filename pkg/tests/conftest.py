import numpy as np
import pytest

from uavflow.ctmc import validate_generator
from uavflow.netmodel import NetworkParams

MERGE_CAPS = [[800.0, 200.0], [800.0, 200.0], [800.0, 400.0]]


@pytest.fixture
def sym2():
    return validate_generator([[-1.0, 1.0], [1.0, -1.0]])


@pytest.fixture
def merge_stable():
    return NetworkParams("merge", MERGE_CAPS, (200.0, 250.0), v=8, w=2, theta=400)


@pytest.fixture
def merge_unstable():
    return NetworkParams("merge", MERGE_CAPS, (300.0, 500.0), v=8, w=2, theta=400)


@pytest.fixture
def tandem_mu():
    return NetworkParams("tandem", [[800.0, 800.0], [800.0, 400.0]], (500.0,), v=8, w=2, theta=400)


@pytest.fixture
def tandem_flat():
    return NetworkParams("tandem", [[800.0, 800.0], [600.0, 600.0]], (500.0,), v=8, w=2, theta=400)


def random_generator(rng, m, low=0.1, high=3.0):
    rates = rng.uniform(low, high, (m, m))
    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -rates.sum(axis=1))
    return validate_generator(rates)


ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
