import numpy as np
import pytest

from maxslope.metric import Euclidean, Tripod


@pytest.fixture
def line():
    return Euclidean(1)


@pytest.fixture
def plane():
    return Euclidean(2)


@pytest.fixture
def tripod():
    return Tripod()


def uniform_grid(horizon, nodes):
    return np.linspace(0.0, horizon, nodes)
