import numpy as np
import pytest

from gsfica.sources import SourceSpec

ALL_SPECS = [
    SourceSpec.gg(1.0),
    SourceSpec.gg(3.0),
    SourceSpec.gg(4.0),
    SourceSpec.gg(8.0),
    SourceSpec.laplace(),
    SourceSpec.uniform(),
    SourceSpec.gaussian(),
    SourceSpec.bimod(3.0, -0.3),
    SourceSpec.bimod(0.5, -0.5),
]


@pytest.fixture
def rs():
    return np.random.default_rng(12345)
