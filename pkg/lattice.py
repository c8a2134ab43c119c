"""
LATTICES AND TORUS PAIRS
Flat tori M = R^2/G1, N = R^2/G2 and the integer homomorphism class of maps between them
"""

import logging
from typing import Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Integrality tolerance for B expressed in lattice bases
INTEGER_TOLERANCE = 1e-9
# Slack used by wrap so points on the far boundary land deterministically
WRAP_TOLERANCE = 1e-12
# Lattice coordinates this far below zero count as round-off, not as outside
ROUNDOFF_TOLERANCE = 1e-14
# Relative size of det B below which the linear part counts as singular
SINGULAR_TOLERANCE = 1e-12


class Lattice:
    """Rank-2 lattice given by the columns of an oriented basis"""
    def __init__(self, basis):
        basis = np.array(basis, dtype=float)
        if basis.shape != (2, 2):
            raise ValueError(f"Lattice basis must be 2x2, got shape {basis.shape}")
        if not np.linalg.det(basis) > 0:
            raise ValueError("Lattice basis must be oriented and nondegenerate (det > 0)")

        basis.setflags(write=False)
        inverse = np.linalg.inv(basis)
        inverse.setflags(write=False)
        self._basis = basis
        self._inverse = inverse

    @property
    def basis(self) -> np.ndarray:
        return self._basis

    @property
    def inverse(self) -> np.ndarray:
        return self._inverse

    @property
    def area(self) -> float:
        """Area of the fundamental parallelogram"""
        return float(abs(np.linalg.det(self._basis)))

    @property
    def metric_inverse(self) -> np.ndarray:
        """G = A^-1 A^-T, the coefficients of the Laplacian in lattice coordinates"""
        return self._inverse @ self._inverse.T

    def shortest_vector_length(self) -> float:
        """Length of the shortest nonzero lattice vector (small search, fine for reduced bases)"""
        best = np.inf
        for z1 in range(-2, 3):
            for z2 in range(-2, 3):
                if z1 == 0 and z2 == 0:
                    continue
                best = min(best, float(np.linalg.norm(self._basis @ np.array([z1, z2]))))
        return best

    @classmethod
    def unit_square(cls) -> "Lattice":
        return cls(np.eye(2))

    @classmethod
    def from_column_major(cls, values) -> "Lattice":
        """Build from four numbers (a11, a21, a12, a22), the config file layout"""
        values = [float(x) for x in values]
        if len(values) != 4:
            raise ValueError(f"Expected 4 lattice entries, got {len(values)}")
        return cls(np.array(values).reshape(2, 2, order="F"))

    def to_column_major(self) -> list:
        return [float(x) for x in self._basis.reshape(-1, order="F")]

    def __eq__(self, other):
        return isinstance(other, Lattice) and np.array_equal(self._basis, other._basis)

    def __hash__(self):
        return hash(self._basis.tobytes())

    def __repr__(self):
        return f"Lattice({self._basis.tolist()})"


def wrap(lattice: Lattice, x) -> np.ndarray:
    """
    Reduce points into the half-open fundamental parallelogram

    Args:
        lattice: the lattice to reduce by
        x: array of shape (..., 2)

    Returns:
        Points differing from x by lattice vectors. Points already inside are
        returned bit-for-bit unchanged, which makes wrap idempotent.
    """
    x = np.asarray(x, dtype=float)
    xi = x @ lattice.inverse.T
    shift = np.floor(xi + WRAP_TOLERANCE)
    outside = np.any((shift != 0) | (xi < -ROUNDOFF_TOLERANCE), axis=-1)
    if not np.any(outside):
        return x.copy()
    # xi - shift lies in [-WRAP_TOLERANCE, 1 - WRAP_TOLERANCE); the clamp closes the gap at 0
    reduced = np.maximum(xi - shift, 0.0) @ lattice.basis.T
    return np.where(outside[..., None], reduced, x)


class TorusPair:
    """Domain and target tori plus the linear part B of the map class, u(x+z) = u(x) + Bz"""
    def __init__(self, domain: Lattice, target: Lattice, linear_part):
        self.domain = domain
        self.target = target
        linear_part = np.array(linear_part, dtype=float)
        if linear_part.shape != (2, 2):
            raise ValueError(f"Linear part must be 2x2, got shape {linear_part.shape}")
        linear_part.setflags(write=False)
        self.linear_part = linear_part

    @classmethod
    def from_integer_class(cls, domain: Lattice, target: Lattice, integer_class) -> "TorusPair":
        """B = A2 K A1^-1 for an integer matrix K written in the lattice bases"""
        k = np.array(integer_class, dtype=float)
        return cls(domain, target, target.basis @ k @ domain.inverse)

    def integer_class(self) -> np.ndarray:
        """K = A2^-1 B A1 (real; integer iff B is a lattice homomorphism)"""
        return self.target.inverse @ self.linear_part @ self.domain.basis

    def to_dict(self):
        return {
            'domain_basis': self.domain.to_column_major(),
            'target_basis': self.target.to_column_major(),
            'linear_part': self.linear_part.tolist(),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            Lattice.from_column_major(data['domain_basis']),
            Lattice.from_column_major(data['target_basis']),
            data['linear_part'],
        )


def check_homomorphism(pair: TorusPair, require_diffeomorphism: bool = True) -> Tuple[bool, np.ndarray]:
    """
    Check that B maps the domain lattice into the target lattice

    Returns:
        (is_homomorphism, rounded integer matrix K)

    Raises:
        ValueError: det B = 0 while a diffeomorphism class was requested
    """
    b = pair.linear_part
    if require_diffeomorphism and abs(np.linalg.det(b)) <= SINGULAR_TOLERANCE * float(np.sum(b * b)):
        raise ValueError("Linear part is singular; no diffeomorphism lies in this class")

    k = pair.integer_class()
    rounded = np.rint(k)
    ok = bool(np.all(np.abs(k - rounded) <= INTEGER_TOLERANCE))
    if not ok:
        logger.debug(f"Linear part is not a lattice homomorphism: K = {k.tolist()}")
    return ok, rounded.astype(int)


def compose(first: TorusPair, second: TorusPair) -> TorusPair:
    """Pair for the composite map, second after first (first.target must be second.domain)"""
    if first.target != second.domain:
        raise ValueError("Cannot compose: target of the first pair is not the domain of the second")
    return TorusPair(first.domain, second.target, second.linear_part @ first.linear_part)
