import math

import numpy as np
import pytest

from realsep import witness

F_MINUS2 = np.array([[-2.0, 3, 3], [3, -2, 3], [3, 3, -2]])
F_NEAR = np.array([[3, -5.009, -4.99], [-5.01, 2.6, -5.09], [-5.11, -5, 3]])
F_TETRA = witness.TETRAHEDRON.matrix()
SQRT3 = math.sqrt(3)


def random_unit(rng, n=None):
    v = rng.normal(size=(3,) if n is None else (n, 3))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def random_family(rng):
    """Random unit (alpha, beta, gamma) with q >= 0."""
    while True:
        v = random_unit(rng)
        if -(v[0] * v[1] + v[1] * v[2] + v[2] * v[0]) >= 0:
            return witness.FamilyParams(*v)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
