import numpy as np
import pytest

from qsi.decoy import TABLE1, IntensityConfig
from qsi.protocol import calibrate_channel


@pytest.fixture(scope="session")
def intensities():
    return IntensityConfig()


@pytest.fixture(scope="session")
def table1_channel(intensities):
    return calibrate_channel(TABLE1, intensities)


def within_sigma(count, trials, p, k=5.0):
    """True when ``count`` successes in ``trials`` Bernoulli(p) draws lie within k sigma."""
    sigma = np.sqrt(trials * p * (1 - p))
    return abs(count - trials * p) <= k * sigma
