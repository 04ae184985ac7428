import sys

import numpy as np
import pytest

from rancl import datagen


@pytest.fixture(scope="session")
def default_spec():
    return datagen.default_topology()


@pytest.fixture(scope="session")
def small_dataset(default_spec):
    return datagen.generate(default_spec, 32)


@pytest.fixture(scope="session")
def medium_dataset(default_spec):
    return datagen.generate(default_spec, 2000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
