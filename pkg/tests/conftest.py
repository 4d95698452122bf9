import numpy as np
import pytest

from peakdescent.mesh import build_structured_mesh


@pytest.fixture(scope="session")
def mesh8():
    return build_structured_mesh(8)


@pytest.fixture(scope="session")
def mesh16():
    return build_structured_mesh(16)


@pytest.fixture(scope="session")
def mesh32():
    return build_structured_mesh(32)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)
