"""Shared fixtures and the acceptance summary hook."""

import numpy as np
import pytest

from meanderwalk import environment

# acceptance tests register one line each; printed in the final summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def const_env():
    return environment(dimension=2, kappa=0.5, generator="constant", seed=0)


@pytest.fixture(scope="session")
def iid_env():
    return environment(dimension=2, kappa=0.5, generator="iid_uniform", seed=0)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
