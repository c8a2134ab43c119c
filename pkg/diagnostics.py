"""
DIAGNOSTICS
Energies, extremal singular values, grid residuals of the (r, theta) system,
parabolic Hoelder seminorms, affine-limit residuals and decay-rate fits
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from field import (MapField, cartesian_gradient, cartesian_laplacian, gradient, grid_points,
                   integrate, laplacian, wrap_angle)
from kinematics import (FLOW_PAPER, determinant, flow_coefficient, frobenius_norm,
                        polar_parts, singular_values)
from lattice import Lattice

logger = logging.getLogger(__name__)

# Coefficient of (Dr x Dtheta)/r^2 in the evolution of r; see oracle.verify_rtheta_system
CROSS_COEFFICIENT = 2.0

CSV_COLUMNS = [
    "t", "E", "q", "lambda_min", "lambda_max", "r_min", "r_max",
    "dE_dt_lhs", "dE_dt_rhs", "residual_theta", "residual_r",
    "affine_residual", "min_det",
]

HOLDER_ALPHAS = (0.25, 0.5, 0.75)
HOLDER_TIME_CENTERS = 4


class InsufficientDataError(ValueError):
    """Not enough samples for a fit or estimate"""
    pass


class DiagnosticsRecord:
    """One time sample of the measured quantities"""
    def __init__(self, t: float, E: float, q: float, lambda_min: float, lambda_max: float,
                 r_min: float, r_max: float, min_det: float, dE_dt_lhs: float, dE_dt_rhs: float,
                 residual_theta: float, residual_r: float, affine_residual: float,
                 du_norm_min: float = math.nan, du_norm_max: float = math.nan,
                 speed_max: float = math.nan, antisymmetry: float = math.nan,
                 lambda_min_at: Tuple[int, int] = (0, 0)):
        self.t = t
        self.E = E
        self.q = q
        self.lambda_min = lambda_min
        self.lambda_max = lambda_max
        self.r_min = r_min
        self.r_max = r_max
        self.min_det = min_det
        self.dE_dt_lhs = dE_dt_lhs
        self.dE_dt_rhs = dE_dt_rhs
        self.residual_theta = residual_theta
        self.residual_r = residual_r
        self.affine_residual = affine_residual

        # Not part of the CSV, kept for the summary
        self.du_norm_min = du_norm_min
        self.du_norm_max = du_norm_max
        self.speed_max = speed_max
        self.antisymmetry = antisymmetry
        self.lambda_min_at = tuple(lambda_min_at)

    def csv_row(self) -> List[float]:
        return [getattr(self, column) for column in CSV_COLUMNS]

    def to_dict(self):
        data = {column: getattr(self, column) for column in CSV_COLUMNS}
        data.update({
            'du_norm_min': self.du_norm_min,
            'du_norm_max': self.du_norm_max,
            'speed_max': self.speed_max,
            'antisymmetry': self.antisymmetry,
            'lambda_min_at': list(self.lambda_min_at),
        })
        return data

    @classmethod
    def from_dict(cls, data):
        values = {column: float(data[column]) for column in CSV_COLUMNS}
        return cls(
            du_norm_min=float(data.get('du_norm_min', math.nan)),
            du_norm_max=float(data.get('du_norm_max', math.nan)),
            speed_max=float(data.get('speed_max', math.nan)),
            antisymmetry=float(data.get('antisymmetry', math.nan)),
            lambda_min_at=tuple(int(i) for i in data.get('lambda_min_at', (0, 0))),
            **values,
        )


# ==================== ENERGIES ====================

def energy(field: MapField, du: Optional[np.ndarray] = None) -> float:
    """Dirichlet energy 1/2 int |Du|^2"""
    if du is None:
        du = gradient(field)
    return integrate(0.5 * np.sum(du ** 2, axis=(-2, -1)), field.lattice)


def second_energy(field: MapField, lap: Optional[np.ndarray] = None) -> float:
    """q = int |Delta u|^2; zero exactly on affine maps"""
    if lap is None:
        lap = laplacian(field)
    return integrate(np.sum(lap ** 2, axis=-1), field.lattice)


def energy_rate(field: MapField, flow_kind: str, du=None, lap=None) -> float:
    """dE/dt = -int coefficient |Delta u|^2"""
    if du is None:
        du = gradient(field)
    if lap is None:
        lap = laplacian(field)
    return -integrate(flow_coefficient(du, flow_kind) * np.sum(lap ** 2, axis=-1), field.lattice)


def affine_fit(field: MapField) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Closest affine map x -> Ax + y

    Periodicity forces A = B, so only the translation is fitted (y = mean of v).

    Returns:
        (A, y, sup |v - y|)
    """
    y = np.mean(field.v.reshape(-1, 2), axis=0)
    residual = float(np.max(np.linalg.norm(field.v - y, axis=-1)))
    return np.array(field.linear_part), y, residual


# ==================== RESIDUALS ====================

def polar_residuals(field: MapField, flow_kind: str = FLOW_PAPER, du=None, lap=None,
                    cross_coefficient: float = CROSS_COEFFICIENT) -> Tuple[float, float]:
    """
    Grid sup norms of P theta and of P r minus its closed-form right-hand side

    The time derivatives come from the discrete velocity of the chosen flow
    (d/dt Du = D(velocity)), so both residuals are O(h^2) on smooth weighted-flow
    fields and measure the departure from the closed system otherwise.
    """
    if du is None:
        du = gradient(field)
    if lap is None:
        lap = laplacian(field)
    lattice = field.lattice

    p, s = polar_parts(du)
    r = np.hypot(p, s)
    theta = np.arctan2(s, p)

    speed = flow_coefficient(du, flow_kind)[..., None] * lap
    d_speed = cartesian_gradient(speed, lattice)
    p_t = d_speed[..., 0, 0] + d_speed[..., 1, 1]
    s_t = d_speed[..., 1, 0] - d_speed[..., 0, 1]

    with np.errstate(divide="ignore", invalid="ignore"):
        r_t = (p * p_t + s * s_t) / r
        theta_t = (p * s_t - s * p_t) / r ** 2

        dr = cartesian_gradient(r, lattice)
        dtheta = cartesian_gradient(theta, lattice, angular=True)
        lap_r = cartesian_laplacian(r, lattice)
        lap_theta = cartesian_laplacian(theta, lattice, angular=True)

        f = 1.0 / r ** 2
        cross = dr[..., 0] * dtheta[..., 1] - dr[..., 1] * dtheta[..., 0]
        reaction = (-np.sum(dtheta ** 2, axis=-1) / r
                    - 2.0 * np.sum(dr ** 2, axis=-1) / r ** 3
                    + cross_coefficient * cross / r ** 2)

        residual_theta = np.abs(theta_t - f * lap_theta)
        residual_r = np.abs(r_t - f * lap_r - reaction)
    return float(np.max(residual_theta)), float(np.max(residual_r))


def compute_record(field: MapField, flow_kind: str = FLOW_PAPER,
                   previous: Optional[DiagnosticsRecord] = None) -> DiagnosticsRecord:
    """Measure everything at the field's time; previous gives the finite-difference dE/dt"""
    du = gradient(field)
    lap = laplacian(field)

    lambda1, lambda2 = singular_values(du)
    p, s = polar_parts(du)
    r = np.hypot(p, s)
    det = determinant(du)
    norms = frobenius_norm(du)
    speed = flow_coefficient(du, flow_kind)[..., None] * lap

    e = energy(field, du)
    q = second_energy(field, lap)
    rhs = energy_rate(field, flow_kind, du, lap)
    residual_theta, residual_r = polar_residuals(field, flow_kind, du, lap)
    _, _, affine_residual = affine_fit(field)

    lhs = math.nan
    if previous is not None and field.time > previous.t:
        lhs = (e - previous.E) / (field.time - previous.t)

    at = np.unravel_index(int(np.argmin(lambda1)), lambda1.shape)
    return DiagnosticsRecord(
        t=field.time, E=e, q=q,
        lambda_min=float(np.min(lambda1)), lambda_max=float(np.max(lambda2)),
        r_min=float(np.min(r)), r_max=float(np.max(r)),
        min_det=float(np.min(det)),
        dE_dt_lhs=lhs, dE_dt_rhs=rhs,
        residual_theta=residual_theta, residual_r=residual_r,
        affine_residual=affine_residual,
        du_norm_min=float(np.min(norms)), du_norm_max=float(np.max(norms)),
        speed_max=float(np.max(np.linalg.norm(speed, axis=-1))),
        antisymmetry=float(np.max(np.abs(s))),
        lambda_min_at=(int(at[0]), int(at[1])),
    )


# ==================== SERIES CHECKS ====================

def energy_identity_check(first: DiagnosticsRecord, second: DiagnosticsRecord) -> float:
    """|dE/dt by finite difference - midpoint of -int F (Delta u)^2|"""
    if not second.t > first.t:
        raise ValueError("Records must be in increasing time order")
    lhs = (second.E - first.E) / (second.t - first.t)
    rhs = 0.5 * (first.dE_dt_rhs + second.dE_dt_rhs)
    return abs(lhs - rhs)


def energy_monotonicity(series: Sequence[DiagnosticsRecord], rtol: float = 1e-12) -> Tuple[bool, float]:
    """E nonincreasing record to record; returns (ok, largest relative increase)"""
    worst = 0.0
    for first, second in zip(series, series[1:]):
        increase = (second.E - first.E) / max(abs(first.E), 1e-300)
        worst = max(worst, increase)
    return worst <= rtol, worst


def decay_monotonicity(series: Sequence[DiagnosticsRecord], rtol: float = 1e-12) -> Tuple[bool, float]:
    """q nonincreasing once q < q(0)/2; returns (ok, largest relative increase)"""
    q0 = series[0].q
    start = next((i for i, record in enumerate(series) if record.q < 0.5 * q0), None)
    if start is None:
        return True, 0.0
    worst = 0.0
    tail = series[start:]
    for first, second in zip(tail, tail[1:]):
        worst = max(worst, (second.q - first.q) / max(first.q, 1e-300))
    return worst <= rtol, worst


def lambda_envelope(series: Sequence[DiagnosticsRecord]) -> float:
    """Empirical Lambda: every tracked quantity lies in [1/Lambda, Lambda]"""
    def inverse(x):
        return math.inf if x <= 0 else 1.0 / x

    envelope = 0.0
    for record in series:
        candidates = [record.lambda_max, inverse(record.lambda_min), record.r_max, inverse(record.r_min)]
        if not math.isnan(record.du_norm_max):
            candidates += [record.du_norm_max, inverse(record.du_norm_min)]
        envelope = max(envelope, *candidates)
    return envelope


class BoundReport:
    """Outcome of the singular-value bound check"""
    def __init__(self, ok: bool, slack: float, lower_bound: float, upper_bound: float,
                 lower_excursion: float, upper_excursion: float, worst_time: float,
                 worst_index: Tuple[int, int]):
        self.ok = ok
        self.slack = slack
        self.lower_bound = lower_bound
        self.upper_bound = upper_bound
        self.lower_excursion = lower_excursion
        self.upper_excursion = upper_excursion
        self.worst_time = worst_time
        self.worst_index = worst_index

    def to_dict(self):
        return {
            'ok': self.ok,
            'slack': self.slack,
            'lower_bound': self.lower_bound,
            'upper_bound': self.upper_bound,
            'lower_excursion': self.lower_excursion,
            'upper_excursion': self.upper_excursion,
            'worst_time': self.worst_time,
            'worst_index': list(self.worst_index),
        }


def bound_preservation(series: Sequence[DiagnosticsRecord], spacing: float,
                       c_slack: Optional[float] = None, slack: Optional[float] = None) -> BoundReport:
    """
    Check that lambda_min never drops below its initial value and lambda_max
    never rises above its initial value, up to slack = c_slack * h^2

    c_slack defaults to 10 x the initial singular value range. Violations are
    reported, never raised, so the comparison flow can be checked too.
    """
    lower = series[0].lambda_min
    upper = series[0].lambda_max
    if slack is None:
        if c_slack is None:
            c_slack = 10.0 * (upper - lower)
        slack = c_slack * spacing ** 2

    worst_low = min(series, key=lambda record: record.lambda_min)
    worst_high = max(series, key=lambda record: record.lambda_max)
    lower_excursion = max(0.0, lower - worst_low.lambda_min)
    upper_excursion = max(0.0, worst_high.lambda_max - upper)
    ok = lower_excursion <= slack and upper_excursion <= slack

    worst = worst_low if lower_excursion >= upper_excursion else worst_high
    report = BoundReport(ok, slack, lower, upper, lower_excursion, upper_excursion,
                         worst.t, worst.lambda_min_at)
    if not ok:
        logger.warning(f"⚠️  Singular value bounds violated: lower excursion {lower_excursion:.3e}, "
                       f"upper excursion {upper_excursion:.3e}, slack {slack:.3e} "
                       f"(worst at t = {worst.t:.6g}, index {worst.lambda_min_at})")
    return report


def fit_decay_rate(times, values, threshold_fraction: float = 0.5,
                   min_points: int = 10) -> Tuple[float, float]:
    """
    Fit values ~ A exp(-omega t) past the transient

    The window starts at the first sample below threshold_fraction * values[0].

    Returns:
        (omega, coefficient of determination of the log-linear fit)

    Raises:
        InsufficientDataError: fewer than min_points usable samples
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    below = np.nonzero(values < threshold_fraction * values[0])[0]
    if below.size == 0:
        raise InsufficientDataError("Series never drops below the transient threshold")

    window = slice(int(below[0]), None)
    t, y = times[window], values[window]
    keep = y > 0
    t, y = t[keep], y[keep]
    if t.size < min_points:
        raise InsufficientDataError(f"Only {t.size} points past the transient (need {min_points})")

    log_y = np.log(y)
    slope, intercept = np.polyfit(t, log_y, 1)
    fitted = slope * t + intercept
    ss_res = float(np.sum((log_y - fitted) ** 2))
    ss_tot = float(np.sum((log_y - np.mean(log_y)) ** 2))
    quality = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(-slope), quality


# ==================== HOELDER SEMINORMS ====================

class HolderReport:
    """Parabolic Hoelder seminorm estimate: sup over sampled cylinders of osc / R^alpha"""
    def __init__(self, alpha: float, seminorm: float, pairs: List[Tuple[float, float]],
                 discarded: int = 0, cylinders: int = 0):
        self.alpha = alpha
        self.seminorm = seminorm
        self.pairs = pairs
        self.discarded = discarded
        self.cylinders = cylinders

    def rows(self) -> List[List[float]]:
        """(alpha, R, osc, seminorm) rows for the CSV"""
        return [[self.alpha, radius, osc, self.seminorm] for radius, osc in self.pairs]

    def to_dict(self):
        return {
            'alpha': self.alpha,
            'seminorm': self.seminorm,
            'pairs': [list(pair) for pair in self.pairs],
            'discarded': self.discarded,
            'cylinders': self.cylinders,
        }


def snapshot_quantities(field: MapField) -> Dict[str, np.ndarray]:
    """Grid values of F, r and theta from one gradient evaluation"""
    du = gradient(field)
    p, s = polar_parts(du)
    return {
        "F": flow_coefficient(du, FLOW_PAPER),
        "r": np.hypot(p, s),
        "theta": np.arctan2(s, p),
    }


def snapshot_quantity(field: MapField, name: str) -> np.ndarray:
    """Grid values of F, r or theta for Hoelder sampling"""
    values = snapshot_quantities(field)
    if name not in values:
        raise ValueError(f"Unknown quantity '{name}' (use F, r or theta)")
    return values[name]


def torus_distances(lattice: Lattice, points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Minimum-image distance from center to every point"""
    xi = (points - center) @ lattice.inverse.T
    xi = xi - np.round(xi)
    best = None
    for o1 in (-1, 0, 1):
        for o2 in (-1, 0, 1):
            d = np.linalg.norm((xi + np.array([o1, o2])) @ lattice.basis.T, axis=-1)
            best = d if best is None else np.minimum(best, d)
    return best


def dyadic_radii(lattice: Lattice, n1: int, n2: int, snapshot_dt: float) -> List[float]:
    """Radii R_top / 2^k that resolve the grid (R >= 2h) and the snapshot spacing (R^2 >= 2 dt)"""
    basis = lattice.basis
    h = max(np.linalg.norm(basis[:, 0]) / n1, np.linalg.norm(basis[:, 1]) / n2)
    radius = 0.5 * lattice.shortest_vector_length()
    radii = []
    while radius >= 2.0 * h:
        if radius ** 2 >= 2.0 * snapshot_dt:
            radii.append(radius)
        radius *= 0.5
    return radii


def default_centers(n1: int, n2: int) -> List[Tuple[int, int]]:
    """4x4 sample of grid indices"""
    fractions = (np.arange(4) + 0.5) / 4.0
    return [(int(round(a * n1)) % n1, int(round(b * n2)) % n2) for a in fractions for b in fractions]


def _neighbour_jumps(values: np.ndarray) -> np.ndarray:
    return np.maximum(
        np.abs(wrap_angle(np.roll(values, -1, axis=0) - values)),
        np.abs(wrap_angle(np.roll(values, -1, axis=1) - values)),
    )


class HolderEstimator:
    """
    Streaming estimate of sup osc_{Q(X, R)} f / R^alpha

    Cylinders are Q = (T - R^2, T] x B(X, R) for every planned top time T,
    radius R and centre X. Only running extrema per cylinder are kept, so
    memory does not depend on how many snapshots are fed. Cylinders whose
    top lies past the last snapshot keep the samples they received.

    For angular quantities the lift is anchored at the centre value of the
    first snapshot inside the cylinder; cylinders with a neighbour jump above
    jump_limit anywhere inside are discarded.
    """

    def __init__(self, lattice: Lattice, n1: int, n2: int, top_times: Sequence[float],
                 radii: Sequence[float], centers: Optional[Sequence[Tuple[int, int]]] = None,
                 angular: bool = False, jump_limit: float = 0.5 * np.pi):
        if not radii:
            raise InsufficientDataError("No cylinder radii")
        self.n1, self.n2 = n1, n2
        self.radii = np.array(radii, dtype=float)
        self.top_times = np.array(top_times, dtype=float)
        self.centers = list(centers) if centers is not None else default_centers(n1, n2)
        self.angular = angular
        self.jump_limit = jump_limit
        self.snapshots = 0

        # points ordered by distance from each centre; a ball is a prefix of that order
        points = grid_points(lattice, n1, n2)
        flat_points = points.reshape(-1, 2)
        self._orders = []
        self._last = np.empty((len(self.centers), len(self.radii)), dtype=int)
        for c, (ci, cj) in enumerate(self.centers):
            distances = torus_distances(lattice, flat_points, points[ci, cj])
            order = np.argsort(distances, kind="stable")
            self._orders.append(order)
            self._last[c] = np.searchsorted(distances[order], self.radii, side="left") - 1

        tolerance = 1e-9 * np.maximum(1.0, np.abs(self.top_times))
        self._start = self.top_times[:, None] - self.radii[None, :] ** 2
        self._end = (self.top_times + tolerance)[:, None]

        shape = (len(self.top_times), len(self.radii), len(self.centers))
        self._max = np.full(shape, -np.inf)
        self._min = np.full(shape, np.inf)
        self._jump = np.zeros(shape)
        self._anchor = np.full(shape, np.nan)
        self._samples = np.zeros(shape, dtype=int)

    def add(self, t: float, values):
        """Fold one snapshot into every cylinder whose time window contains t"""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n1, self.n2):
            raise ValueError(f"Expected a {self.n1}x{self.n2} grid, got shape {values.shape}")
        self.snapshots += 1
        active = (t > self._start) & (t <= self._end)
        if not np.any(active):
            return

        flat = values.ravel()
        jumps = _neighbour_jumps(values).ravel() if self.angular else None
        for c, order in enumerate(self._orders):
            ordered = flat[order]
            last = self._last[c]
            self._samples[:, :, c] += active

            if not self.angular:
                self._fold(c, active, ordered, last)
                continue

            disk_jump = np.maximum.accumulate(jumps[order])[last]
            self._jump[:, :, c] = np.where(active, np.maximum(self._jump[:, :, c], disk_jump), self._jump[:, :, c])
            anchor = self._anchor[:, :, c]
            anchor[active & np.isnan(anchor)] = ordered[0]
            for value in np.unique(anchor[active]):
                self._fold(c, active & (anchor == value), wrap_angle(ordered - value), last)

    def _fold(self, c: int, mask: np.ndarray, ordered: np.ndarray, last: np.ndarray):
        disk_max = np.maximum.accumulate(ordered)[last]
        disk_min = np.minimum.accumulate(ordered)[last]
        self._max[:, :, c] = np.where(mask, np.maximum(self._max[:, :, c], disk_max), self._max[:, :, c])
        self._min[:, :, c] = np.where(mask, np.minimum(self._min[:, :, c], disk_min), self._min[:, :, c])

    def report(self, alpha: float) -> HolderReport:
        filled = self._samples > 0
        rejected = filled & (self._jump > self.jump_limit)
        valid = filled & ~rejected
        osc = np.where(valid, self._max - self._min, 0.0)

        discarded = int(np.count_nonzero(rejected))
        if discarded:
            logger.info(f"Discarded {discarded} angular cylinders with neighbour jumps above {self.jump_limit:.3f}")
        per_radius = osc.max(axis=(0, 2))
        seminorm = float(np.max(osc / self.radii[None, :, None] ** alpha)) if osc.size else 0.0
        pairs = sorted(((float(r), float(o)) for r, o in zip(self.radii, per_radius)), reverse=True)
        return HolderReport(alpha, seminorm, pairs, discarded, int(np.count_nonzero(valid)))


def holder_seminorm(samples: Sequence[Tuple[float, np.ndarray]], lattice: Lattice, alpha: float,
                    angular: bool = False, centers: Optional[Sequence[Tuple[int, int]]] = None,
                    radii: Optional[Sequence[float]] = None, time_centers: int = HOLDER_TIME_CENTERS,
                    jump_limit: float = 0.5 * np.pi) -> HolderReport:
    """
    Estimate sup osc_{Q(X, R)} f / R^alpha over sampled backward cylinders

    Args:
        samples: (t, grid values) pairs in increasing time order
        lattice: domain lattice of the grid
        alpha: Hoelder exponent
        angular: values are angles (see HolderEstimator)
        centers: grid indices of spatial centres (default: a 4x4 sample)
        radii: cylinder radii (default: dyadic_radii, at least 4 required)
        time_centers: number of snapshots, evenly spaced, used as cylinder tops

    Raises:
        InsufficientDataError: fewer than 4 dyadic radii fit the data
    """
    if not samples:
        raise InsufficientDataError("No snapshots to sample")
    times = np.array([t for t, _ in samples], dtype=float)
    n1, n2 = np.shape(samples[0][1])

    if radii is None:
        radii = holder_radii(lattice, n1, n2, times)
    tops = np.unique(np.linspace(0, len(times) - 1, max(1, time_centers)).round().astype(int))

    estimator = HolderEstimator(lattice, n1, n2, times[tops], radii, centers, angular, jump_limit)
    for t, values in samples:
        estimator.add(t, values)
    return estimator.report(alpha)


def holder_radii(lattice: Lattice, n1: int, n2: int, times: Sequence[float]) -> List[float]:
    """Dyadic radii for snapshots at the given times; at least 4 are required"""
    snapshot_dt = float(np.median(np.diff(times))) if len(times) > 1 else 0.0
    radii = dyadic_radii(lattice, n1, n2, snapshot_dt)
    if len(radii) < 4:
        raise InsufficientDataError(f"Only {len(radii)} dyadic radii fit this resolution (need 4)")
    return radii
