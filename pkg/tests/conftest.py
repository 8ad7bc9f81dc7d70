import numpy as np
import pytest

from reglift.corpus import uniform_stream
from reglift.forms import MatrixForm, increasing_indices
from reglift.grid import Grid


@pytest.fixture
def g17():
    return Grid.unit((17, 17))


@pytest.fixture
def g33():
    return Grid.unit((33, 33))


def seeded_form(grid, degree, seed, cls=MatrixForm, lo=-1.0, hi=1.0):
    """Deterministic pseudo-random form for oracle tests."""
    lead = cls._lead_shape(grid.n)
    nI = len(increasing_indices(grid.n, degree))
    count = int(np.prod(lead)) * nI * grid.npoints
    vals = lo + (hi - lo) * uniform_stream(seed, 97, count)
    return cls(grid, degree, vals.reshape(lead + (nI,) + grid.shape))
