import numpy as np
import pytest

from ergolab.functions import catalog
from ergolab.models import make_ou_model

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ou1():
    return make_ou_model(1, 1.0)


@pytest.fixture(scope="session")
def ou2():
    return make_ou_model(2, 1.0)


@pytest.fixture(scope="session")
def cat1():
    return catalog(1)


@pytest.fixture(scope="session")
def cat2():
    return catalog(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
