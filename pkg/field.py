"""
MAP FIELDS
Discrete maps u(x) = Bx + v(x) on a uniform lattice grid, with periodic
central-difference operators and midpoint-rule integration
"""

import logging
from typing import Tuple

import numpy as np

from lattice import Lattice, TorusPair

logger = logging.getLogger(__name__)

MIN_RESOLUTION = 4


def wrap_angle(values):
    """Map angles into (-pi, pi]"""
    wrapped = np.mod(values + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)


class MapField:
    """Periodic displacement v on an n1 x n2 grid plus the linear part of the pair"""
    def __init__(self, pair: TorusPair, v, time: float = 0.0):
        v = np.array(v, dtype=float)
        if v.ndim != 3 or v.shape[2] != 2:
            raise ValueError(f"Displacement must have shape (n1, n2, 2), got {v.shape}")
        if v.shape[0] < MIN_RESOLUTION or v.shape[1] < MIN_RESOLUTION:
            raise ValueError(f"Grid resolution must be at least {MIN_RESOLUTION} per direction")

        v.setflags(write=False)
        self.pair = pair
        self.v = v
        self.time = float(time)

    @property
    def n1(self) -> int:
        return self.v.shape[0]

    @property
    def n2(self) -> int:
        return self.v.shape[1]

    @property
    def lattice(self) -> Lattice:
        return self.pair.domain

    @property
    def linear_part(self) -> np.ndarray:
        return self.pair.linear_part

    def spacing(self) -> Tuple[float, float]:
        """Cartesian lengths of one grid step along each lattice direction"""
        basis = self.lattice.basis
        return (float(np.linalg.norm(basis[:, 0])) / self.n1,
                float(np.linalg.norm(basis[:, 1])) / self.n2)

    def grid_points(self) -> np.ndarray:
        return grid_points(self.lattice, self.n1, self.n2)

    def lift(self) -> np.ndarray:
        """u = Bx + v at the grid points"""
        return self.grid_points() @ self.linear_part.T + self.v

    def with_displacement(self, v, time: float) -> "MapField":
        return MapField(self.pair, v, time)

    @classmethod
    def affine(cls, pair: TorusPair, n1: int, n2: int) -> "MapField":
        return cls(pair, np.zeros((n1, n2, 2)))


def grid_points(lattice: Lattice, n1: int, n2: int) -> np.ndarray:
    """Cartesian points x = A (i/n1, j/n2), shape (n1, n2, 2)"""
    xi = lattice_coordinates(n1, n2)
    return xi @ lattice.basis.T


def lattice_coordinates(n1: int, n2: int) -> np.ndarray:
    i, j = np.meshgrid(np.arange(n1) / n1, np.arange(n2) / n2, indexing="ij")
    return np.stack([i, j], axis=-1)


# ==================== STENCILS ====================

def _difference(values, shift, angular: bool):
    """values[index - shift] - values[index], periodic; angles differenced on the circle"""
    d = np.roll(values, shift, axis=(0, 1)) - values
    if angular:
        d = wrap_angle(d)
    return d


def lattice_first_derivatives(values, angular: bool = False):
    """Central first derivatives along the two lattice coordinates"""
    n1, n2 = values.shape[:2]
    d1 = (_difference(values, (-1, 0), angular) - _difference(values, (1, 0), angular)) * (n1 / 2.0)
    d2 = (_difference(values, (0, -1), angular) - _difference(values, (0, 1), angular)) * (n2 / 2.0)
    return d1, d2


def lattice_second_derivatives(values, angular: bool = False):
    """Compact second derivatives d11, d22 and the four-point cross derivative d12"""
    n1, n2 = values.shape[:2]
    d11 = (_difference(values, (-1, 0), angular) + _difference(values, (1, 0), angular)) * n1 ** 2
    d22 = (_difference(values, (0, -1), angular) + _difference(values, (0, 1), angular)) * n2 ** 2
    d12 = (_difference(values, (-1, -1), angular) - _difference(values, (-1, 1), angular)
           - _difference(values, (1, -1), angular) + _difference(values, (1, 1), angular)) * (n1 * n2 / 4.0)
    return d11, d22, d12


def cartesian_gradient(values, lattice: Lattice, angular: bool = False) -> np.ndarray:
    """
    Cartesian gradient of a periodic grid function

    Scalar input (n1, n2) gives (n1, n2, 2); vector input (n1, n2, 2) gives
    (n1, n2, 2, 2) indexed [component, derivative].
    """
    d1, d2 = lattice_first_derivatives(values, angular)
    return np.stack([d1, d2], axis=-1) @ lattice.inverse


def cartesian_laplacian(values, lattice: Lattice, angular: bool = False) -> np.ndarray:
    """5-point Laplacian plus the cross term needed for skew lattices"""
    d11, d22, d12 = lattice_second_derivatives(values, angular)
    g = lattice.metric_inverse
    result = g[0, 0] * d11 + g[1, 1] * d22
    if g[0, 1] != 0.0:
        result = result + 2.0 * g[0, 1] * d12
    return result


def cartesian_hessian(values, lattice: Lattice) -> np.ndarray:
    """Second derivatives [component, j, k] for a vector grid function"""
    d11, d22, d12 = lattice_second_derivatives(values)
    xi_hessian = np.stack([np.stack([d11, d12], axis=-1),
                           np.stack([d12, d22], axis=-1)], axis=-2)
    a_inv = lattice.inverse
    return np.einsum("...jk,jm,kn->...mn", xi_hessian, a_inv, a_inv)


# ==================== FIELD OPERATORS ====================

def gradient(f: MapField) -> np.ndarray:
    """Du = B + Dv at every grid point, shape (n1, n2, 2, 2); exact on affine maps"""
    return f.linear_part + cartesian_gradient(f.v, f.lattice)


def laplacian(f: MapField) -> np.ndarray:
    """Delta u = Delta v (the linear part is harmonic), shape (n1, n2, 2)"""
    return cartesian_laplacian(f.v, f.lattice)


def hessian(f: MapField) -> np.ndarray:
    """D^2 u = D^2 v, shape (n1, n2, 2, 2, 2), symmetric in the last two indices"""
    return cartesian_hessian(f.v, f.lattice)


def integrate(values, lattice: Lattice) -> float:
    """Midpoint rule over the fundamental domain; fixed C-order summation"""
    values = np.ascontiguousarray(values, dtype=float)
    return float(np.sum(values) / values.size * lattice.area)
