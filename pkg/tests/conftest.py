import numpy as np
import pytest

from blowup_lab import closedform, config
from blowup_lab.diffusion import CoefficientField
from blowup_lab.geometry import Interval


@pytest.fixture
def unit():
    return Interval(0.0, 1.0)


@pytest.fixture
def brownian():
    return CoefficientField.brownian(1)


@pytest.fixture
def transport():
    # deterministic motion with unit speed to the right
    return CoefficientField.constant_drift((1.0,), sigma=0.0)


@pytest.fixture
def q1():
    return closedform.power(1.0)


def boundary(left, right):
    return config.build_boundary(config.interval_boundary(left, right), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
