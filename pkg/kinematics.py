"""
POINT KINEMATICS
Singular values, the (r, theta) polar quantities, the diffusion coefficient F
and the induced metric h of a 2x2 Jacobian. All functions broadcast over
leading axes, so the same code serves single points and whole grids.
"""

from typing import Tuple

import numpy as np

# Below these the polar angle / diffusion coefficient are undefined
POLAR_DEGENERACY = 1e-14
DIFFUSION_DEGENERACY = 1e-20


class DegenerateJacobianError(ValueError):
    """Raised when a pointwise quantity is undefined for the given Jacobian"""
    pass


def _entries(du):
    du = np.asarray(du, dtype=float)
    return du[..., 0, 0], du[..., 0, 1], du[..., 1, 0], du[..., 1, 1]


def svd2(du):
    """
    Closed-form 2x2 SVD

    With Q = 1/2 sqrt((a+d)^2 + (c-b)^2) and R = 1/2 sqrt((a-d)^2 + (c+b)^2)
    the singular values are lambda2 = Q + R and lambda1 = |Q - R|.

    Returns:
        (lambda1, lambda2, e, v) where e, v have the singular frames as
        columns: du @ e[:, i] = lambda_{i+1} * v[:, i], lambda1 <= lambda2.
    """
    a, b, c, d = _entries(du)
    half_sum, half_diff = 0.5 * (a + d), 0.5 * (a - d)
    half_sym, half_rot = 0.5 * (c + b), 0.5 * (c - b)

    q = np.hypot(half_sum, half_rot)
    r = np.hypot(half_diff, half_sym)
    lambda2 = q + r
    signed_lambda1 = q - r
    lambda1 = np.abs(signed_lambda1)

    # du = Rot(phi) diag(q + r, q - r) Rot(theta)
    angle_sym = np.arctan2(half_sym, half_diff)
    angle_rot = np.arctan2(half_rot, half_sum)
    theta = 0.5 * (angle_rot - angle_sym)
    phi = 0.5 * (angle_rot + angle_sym)
    sign = np.where(signed_lambda1 < 0, -1.0, 1.0)

    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    e = np.stack([np.stack([st, ct], axis=-1), np.stack([ct, -st], axis=-1)], axis=-1)
    v = np.stack([np.stack([-sign * sp, sign * cp], axis=-1), np.stack([cp, sp], axis=-1)], axis=-1)
    return lambda1, lambda2, e, v


def singular_values(du) -> Tuple[np.ndarray, np.ndarray]:
    lambda1, lambda2, _, _ = svd2(du)
    return lambda1, lambda2


def polar_parts(du):
    """p = u1_1 + u2_2 and s = u2_1 - u1_2, so that p + i s = r e^{i theta}"""
    a, b, c, d = _entries(du)
    return a + d, c - b


def polar_fields(du):
    """Vectorised (r, theta); theta is NaN where r is degenerate"""
    p, s = polar_parts(du)
    r = np.hypot(p, s)
    theta = np.arctan2(s, p)
    theta = np.where(theta <= -np.pi, theta + 2.0 * np.pi, theta)
    theta = np.where(r < POLAR_DEGENERACY, np.nan, theta)
    return r, theta


def polar_decompose(du) -> Tuple[float, float]:
    """
    r cos(theta) = u1_1 + u2_2, r sin(theta) = u2_1 - u1_2 for a single matrix

    Raises:
        DegenerateJacobianError: r < 1e-14, theta undefined
    """
    r, theta = polar_fields(du)
    if float(r) < POLAR_DEGENERACY:
        raise DegenerateJacobianError(f"Polar decomposition degenerate: r = {float(r):.3e}")
    return float(r), float(theta)


def diffusion_denominator(du):
    """|Du|^2 + 2 det Du = (lambda1 + lambda2)^2 when det > 0"""
    a, b, c, d = _entries(du)
    return a * a + b * b + c * c + d * d + 2.0 * (a * d - b * c)


def diffusion_field(du):
    """Vectorised F = 1/(|Du|^2 + 2 det Du); +inf where the denominator degenerates"""
    denominator = diffusion_denominator(du)
    with np.errstate(divide="ignore"):
        return np.where(denominator > DIFFUSION_DEGENERACY, 1.0 / denominator, np.inf)


def diffusion_coefficient(du) -> float:
    """F for a single matrix; raises DegenerateJacobianError when undefined"""
    denominator = float(diffusion_denominator(du))
    if denominator < DIFFUSION_DEGENERACY:
        raise DegenerateJacobianError(f"Diffusion coefficient undefined: denominator = {denominator:.3e}")
    return 1.0 / denominator


def induced_metric(du):
    """h = Du^T Du"""
    du = np.asarray(du, dtype=float)
    return np.swapaxes(du, -1, -2) @ du


def determinant(du):
    a, b, c, d = _entries(du)
    return a * d - b * c


def frobenius_norm(du):
    return np.sqrt(np.sum(np.asarray(du, dtype=float) ** 2, axis=(-2, -1)))


FLOW_PAPER = "paper_flow"
FLOW_HEAT = "harmonic_heat_flow"
FLOW_ALIASES = {
    "paper": FLOW_PAPER,
    "paper_flow": FLOW_PAPER,
    "hmhf": FLOW_HEAT,
    "harmonic_heat_flow": FLOW_HEAT,
}


def normalize_flow_kind(name: str) -> str:
    key = str(name).strip().lower().replace("-", "_")
    if key not in FLOW_ALIASES:
        raise ValueError(f"Unknown flow kind '{name}' (use paper or hmhf)")
    return FLOW_ALIASES[key]


def flow_coefficient(du, flow_kind: str):
    """Coefficient in front of the Laplacian: F(Du) for the weighted flow, 1 for harmonic map heat flow"""
    if flow_kind == FLOW_PAPER:
        return diffusion_field(du)
    if flow_kind == FLOW_HEAT:
        return np.ones(np.shape(du)[:-2])
    raise ValueError(f"Unknown flow kind '{flow_kind}'")


class PointKinematics:
    """Everything the flow needs to know about Du at one point"""
    def __init__(self, du):
        du = np.array(du, dtype=float)
        if du.shape != (2, 2):
            raise ValueError(f"PointKinematics expects a 2x2 matrix, got {du.shape}")

        self.du = du
        self.lambda1, self.lambda2, self.e, self.v = (np.asarray(x) for x in svd2(du))
        self.lambda1 = float(self.lambda1)
        self.lambda2 = float(self.lambda2)
        self.det = float(determinant(du))
        self.du_norm = float(frobenius_norm(du))
        r, theta = polar_fields(du)
        self.r = float(r)
        self.theta = float(theta)
        self.F = float(diffusion_field(du))
        self.h = induced_metric(du)

    @property
    def orientation_preserving(self) -> bool:
        return self.det > 0

    def to_dict(self):
        return {
            'du': self.du.tolist(),
            'lambda1': self.lambda1,
            'lambda2': self.lambda2,
            'r': self.r,
            'theta': self.theta,
            'F': self.F,
            'h': self.h.tolist(),
            'det': self.det,
        }
