import numpy as np
import pytest

from pmfsnet import tensor as T


@pytest.fixture(autouse=True)
def _check_finite():
    """Every op result in every test is checked for NaN/Inf."""
    old = T.CHECK_FINITE
    T.CHECK_FINITE = True
    yield
    T.CHECK_FINITE = old


@pytest.fixture
def rng():
    return np.random.default_rng(0)
