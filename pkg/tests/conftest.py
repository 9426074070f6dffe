import logging

import numpy as np
import pytest

from rate_region.models import DistortionSpec
from run_log.run_log import PACKAGES


@pytest.fixture(autouse=True)
def reset_package_loggers():
    """Undo configure_logging so later tests see records through caplog again."""
    yield
    for name in PACKAGES:
        logger = logging.getLogger(name)
        for handler in list(logger.handlers):
            logger.removeHandler(handler)
            handler.close()
        logger.setLevel(logging.NOTSET)
        logger.propagate = True


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def sample_specs(rng, count):
    """`count` distortion pairs with 0 < d2 < d1 < 1."""
    specs = []
    while len(specs) < count:
        d1 = float(rng.uniform(0.05, 0.95))
        d2 = float(rng.uniform(0.02, d1))
        if d1 - d2 > 1e-3:
            specs.append(DistortionSpec(d1=d1, d2=d2))
    return specs


@pytest.fixture
def random_specs(rng):
    return sample_specs(rng, 10)


@pytest.fixture
def many_specs(rng):
    return sample_specs(rng, 200)
