import numpy as np
import pytest

from fraclab.core import WeightParams


@pytest.fixture(params=[0.25, 0.5, 0.75])
def params_1d(request):
    return WeightParams.from_s(request.param, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
