"""
INITIAL MAPS
Fourier-mode perturbations of affine maps and the named presets used by runs and studies
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from field import MapField, gradient, lattice_coordinates
from kinematics import determinant, singular_values
from lattice import Lattice, TorusPair

logger = logging.getLogger(__name__)

DIFFEOMORPHISM_TOLERANCE = 1e-10


class ModeSpec:
    """amplitude * sin(2 pi k . xi + phase) in lattice coordinates xi"""
    def __init__(self, k, amplitude, phase: float = 0.0):
        k = tuple(int(x) for x in k)
        amplitude = tuple(float(x) for x in amplitude)
        if len(k) != 2 or len(amplitude) != 2:
            raise ValueError("Mode frequency and amplitude must both have two entries")
        if k == (0, 0):
            raise ValueError("Mode frequency must be nonzero")
        self.k = k
        self.amplitude = amplitude
        self.phase = float(phase)

    def scaled(self, factor: float) -> "ModeSpec":
        return ModeSpec(self.k, (factor * self.amplitude[0], factor * self.amplitude[1]), self.phase)

    def to_dict(self):
        return {'k': list(self.k), 'amplitude': list(self.amplitude), 'phase': self.phase}

    @classmethod
    def from_dict(cls, data):
        return cls(data['k'], data['amplitude'], data.get('phase', 0.0))

    @classmethod
    def parse(cls, text: str) -> "ModeSpec":
        """'k1 k2 amp1 amp2 phase' (phase optional)"""
        parts = text.replace(",", " ").split()
        if len(parts) not in (4, 5):
            raise ValueError(f"Mode needs 'k1 k2 amp1 amp2 [phase]', got '{text}'")
        k1, k2 = (int(float(x)) for x in parts[:2])
        if float(parts[0]) != k1 or float(parts[1]) != k2:
            raise ValueError(f"Mode frequencies must be integers, got '{text}'")
        phase = float(parts[4]) if len(parts) == 5 else 0.0
        return cls((k1, k2), (float(parts[2]), float(parts[3])), phase)

    def __repr__(self):
        return f"ModeSpec(k={self.k}, amplitude={self.amplitude}, phase={self.phase})"


def build_map(pair: TorusPair, modes: Sequence[ModeSpec], n1: int, n2: Optional[int] = None) -> MapField:
    """u = Bx + sum of modes on an n1 x n2 grid (n2 defaults to n1)"""
    n2 = n1 if n2 is None else n2
    xi = lattice_coordinates(n1, n2)
    v = np.zeros((n1, n2, 2))
    for mode in modes:
        phase = 2.0 * np.pi * (mode.k[0] * xi[..., 0] + mode.k[1] * xi[..., 1]) + mode.phase
        v += np.sin(phase)[..., None] * np.array(mode.amplitude)
    return MapField(pair, v)


def check_diffeomorphism(field: MapField, tolerance: float = DIFFEOMORPHISM_TOLERANCE) -> Tuple[bool, float, float]:
    """
    Grid surrogate for orientation-preserving diffeomorphism

    Returns:
        (min det Du > tolerance, min det Du, min lambda1)
    """
    du = gradient(field)
    min_det = float(np.min(determinant(du)))
    lambda1, _ = singular_values(du)
    min_lambda = float(np.min(lambda1))
    return min_det > tolerance, min_det, min_lambda


def random_modes(rng: np.random.Generator, count: int, max_frequency: int = 2,
                 max_amplitude: float = 0.01) -> List[ModeSpec]:
    """Small seeded multimode perturbation"""
    modes = []
    while len(modes) < count:
        k = rng.integers(-max_frequency, max_frequency + 1, 2)
        if not np.any(k):
            continue
        amplitude = rng.uniform(-max_amplitude, max_amplitude, 2)
        modes.append(ModeSpec(k, amplitude, rng.uniform(0.0, 2.0 * np.pi)))
    return modes


# ==================== PRESETS ====================

class Preset:
    """Named initial map: lattices, integer class K and modes"""
    def __init__(self, name: str, description: str, integer_class, modes: List[ModeSpec],
                 domain_basis=None, target_basis=None):
        self.name = name
        self.description = description
        self.integer_class = np.array(integer_class, dtype=float)
        self.modes = modes
        self.domain_basis = np.eye(2) if domain_basis is None else np.array(domain_basis, dtype=float)
        self.target_basis = np.eye(2) if target_basis is None else np.array(target_basis, dtype=float)

    def pair(self) -> TorusPair:
        return TorusPair.from_integer_class(Lattice(self.domain_basis), Lattice(self.target_basis),
                                            self.integer_class)

    def build(self, n1: int, n2: Optional[int] = None) -> MapField:
        return build_map(self.pair(), self.modes, n1, n2)


# 2 pi eps = 0.95 puts the smallest singular value at 0.05
LARGE_GRADIENT_AMPLITUDE = 0.95 / (2.0 * np.pi)

PRESETS = {
    "identity-perturbed": Preset(
        "identity-perturbed", "identity class with three small modes",
        np.eye(2),
        [ModeSpec((1, 0), (0.03, 0.01)), ModeSpec((0, 1), (0.01, 0.02), 0.5),
         ModeSpec((1, 1), (0.01, -0.01), 1.0)],
    ),
    "shear": Preset(
        "shear", "shear class B = [[1, 1], [0, 1]] with two small modes",
        [[1, 1], [0, 1]],
        [ModeSpec((1, 0), (0.02, 0.01)), ModeSpec((0, 1), (0.01, 0.02), 0.3)],
    ),
    "anisotropic": Preset(
        "anisotropic", "B = diag(2, 1) onto the rescaled target lattice",
        np.eye(2),
        [ModeSpec((1, 0), (0.04, 0.01)), ModeSpec((0, 1), (0.01, 0.02), 0.7)],
        target_basis=np.diag([2.0, 1.0]),
    ),
    "large-gradient": Preset(
        "large-gradient", "near-degenerate single mode, min singular value 0.05",
        np.eye(2),
        [ModeSpec((1, 0), (LARGE_GRADIENT_AMPLITUDE, 0.0))],
    ),
    "single-mode": Preset(
        "single-mode", "identity plus one small mode, linearized decay regime",
        np.eye(2),
        [ModeSpec((1, 0), (0.02, 0.0))],
    ),
    "gradient-map": Preset(
        "gradient-map", "gradient of a periodic potential plus x, symmetric Du",
        np.eye(2),
        [ModeSpec((1, 0), (0.03, 0.0)), ModeSpec((0, 1), (0.0, 0.02)), ModeSpec((1, 1), (0.01, 0.01))],
    ),
}


def list_presets() -> List[Tuple[str, str]]:
    return [(name, preset.description) for name, preset in PRESETS.items()]


def get_preset(name: str) -> Preset:
    if name not in PRESETS:
        raise KeyError(f"Unknown preset '{name}' (available: {', '.join(PRESETS)})")
    return PRESETS[name]


def build_preset(name: str, n1: int, n2: Optional[int] = None) -> MapField:
    return get_preset(name).build(n1, n2)
