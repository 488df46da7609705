import numpy as np
import pytest

from gwdual.measures import DiscreteMeasure, center, make_rng, random_measure


def centered_pair(seed, n=5, m=None, dx=2, dy=2, uniform=True):
    rng = make_rng(seed, 0)
    mu = random_measure(n, dx, rng, uniform)
    nu = random_measure(n if m is None else m, dy, rng, uniform)
    return center(mu)[0], center(nu)[0]


@pytest.fixture
def unif_013():
    return DiscreteMeasure(np.array([0.0, 1.0, 3.0]))


@pytest.fixture
def unif_012():
    return DiscreteMeasure(np.array([0.0, 1.0, 2.0]))


@pytest.fixture
def unif_pm1():
    return DiscreteMeasure(np.array([-1.0, 1.0]))
