import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from initial_maps import ModeSpec, build_map  # noqa: E402
from lattice import Lattice, TorusPair  # noqa: E402


@pytest.fixture
def unit_pair():
    return TorusPair(Lattice.unit_square(), Lattice.unit_square(), np.eye(2))


@pytest.fixture
def shear_pair():
    return TorusPair.from_integer_class(Lattice.unit_square(), Lattice.unit_square(), [[1, 1], [0, 1]])


@pytest.fixture
def single_mode():
    """Factory: u = x + eps sin(2 pi x1) e1 on an n x n grid"""
    def make(n, eps=0.01):
        pair = TorusPair(Lattice.unit_square(), Lattice.unit_square(), np.eye(2))
        return build_map(pair, [ModeSpec((1, 0), (eps, 0.0))], n)
    return make
