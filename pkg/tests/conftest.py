import numpy as np
import pytest

from neumann_ra.design import RawCovariates, normalize


def random_design(n, p, seed):
    rng = np.random.default_rng(seed)
    return normalize(RawCovariates(rng.standard_normal((n, p))))


@pytest.fixture
def design_8x2():
    return random_design(8, 2, 101)


@pytest.fixture
def design_7x2():
    return random_design(7, 2, 202)
