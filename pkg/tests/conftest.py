import numpy as np
import pytest

from fbmc_mimo.core_dsp import design_prototype


@pytest.fixture(scope="session")
def proto16():
    return design_prototype(16, 4)


@pytest.fixture(scope="session")
def proto64():
    return design_prototype(64, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


# one summary line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
