import numpy as np
import pytest

from increff.basis import cubic_basis, expand
from increff.dgp import generate, make_spec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def cubic_sample():
    """GaussianCubic draw with n=200 and its expanded cubic design."""
    ds, oracle = generate(make_spec("GaussianCubic", 200, seed=3))
    return ds, oracle, expand(ds.without_oracle(), cubic_basis(1))


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return path
