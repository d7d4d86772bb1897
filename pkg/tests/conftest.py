import sys

import numpy as np
import pytest

from mqbv.problem import DiffusionProfile, fisher_problem, linear_problem
from mqbv.spectral import EigenBasis


@pytest.fixture(scope="session")
def unit_profile():
    return DiffusionProfile.constant(1.0, 1.0)


@pytest.fixture(scope="session")
def affine_profile():
    return DiffusionProfile.affine(1.0, 1.0, 1.5)


@pytest.fixture(scope="session")
def basis64():
    return EigenBasis(64, 256)


@pytest.fixture(scope="session")
def linear64(unit_profile):
    return linear_problem(unit_profile, 64)


@pytest.fixture(scope="session")
def fisher32(unit_profile):
    return fisher_problem(unit_profile, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)



def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
