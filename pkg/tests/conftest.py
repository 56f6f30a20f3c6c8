import pytest

from tailwave.coefficients import CoefficientProfile
from tailwave.geometry import CoordinateMap, MetricParams


@pytest.fixture
def schw():
    return MetricParams(1.0)


@pytest.fixture
def cmap(schw):
    return CoordinateMap(schw)


@pytest.fixture
def linear():
    return CoefficientProfile(1.0, h0=0.0)
