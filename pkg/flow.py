"""
FLOW ENGINE
Explicit time integration of du/dt = F(Du) Delta u and of the comparison
harmonic map heat flow du/dt = Delta u. Only the periodic part v moves.
"""

import logging
from typing import Callable, List, Optional, Tuple

import numpy as np

import diagnostics
from field import MapField, gradient, laplacian
from kinematics import FLOW_HEAT, FLOW_PAPER, determinant, flow_coefficient, normalize_flow_kind

logger = logging.getLogger(__name__)

STEPPERS = ("euler", "rk2")
DEFAULT_Q_TOL_FACTOR = 1e-12


class FlowConfig:
    """Integration settings for one run"""
    def __init__(self, flow_kind: str = FLOW_PAPER, cfl_safety: float = 0.5, t_end: float = 1.0,
                 stepper: str = "rk2", snapshot_stride: int = 0, diagnostics_stride: int = 10,
                 q_tol_factor: float = DEFAULT_Q_TOL_FACTOR, dt: Optional[float] = None,
                 max_steps: Optional[int] = None):
        self.flow_kind = normalize_flow_kind(flow_kind)
        self.cfl_safety = float(cfl_safety)
        self.t_end = float(t_end)
        self.stepper = str(stepper).lower()
        self.snapshot_stride = int(snapshot_stride)
        self.diagnostics_stride = int(diagnostics_stride)
        self.q_tol_factor = float(q_tol_factor)
        self.dt = None if dt is None else float(dt)
        self.max_steps = None if max_steps is None else int(max_steps)
        self.validate()

    def validate(self):
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError(f"cfl_safety must be in (0, 1], got {self.cfl_safety}")
        if not self.t_end > 0.0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.stepper not in STEPPERS:
            raise ValueError(f"Unknown stepper '{self.stepper}' (use euler or rk2)")
        if self.diagnostics_stride < 1:
            raise ValueError("diagnostics_stride must be at least 1")
        if self.snapshot_stride < 0:
            raise ValueError("snapshot_stride must be non-negative (0 disables snapshots)")
        if self.dt is not None and not self.dt > 0.0:
            raise ValueError(f"Fixed dt must be positive, got {self.dt}")

    def to_dict(self):
        return {
            'flow_kind': self.flow_kind,
            'cfl_safety': self.cfl_safety,
            't_end': self.t_end,
            'stepper': self.stepper,
            'snapshot_stride': self.snapshot_stride,
            'diagnostics_stride': self.diagnostics_stride,
            'q_tol_factor': self.q_tol_factor,
            'dt': self.dt,
            'max_steps': self.max_steps,
        }


class DegeneracyEvent:
    """First time det Du <= 0 was seen on the grid"""
    def __init__(self, step: int, time: float, index: Tuple[int, int], min_det: float):
        self.step = step
        self.time = time
        self.index = index
        self.min_det = min_det

    def to_dict(self):
        return {'step': self.step, 'time': self.time, 'index': list(self.index), 'min_det': self.min_det}

    def __repr__(self):
        return f"DegeneracyEvent(step={self.step}, t={self.time:.6g}, index={self.index}, min_det={self.min_det:.3e})"


class FlowState:
    """Current field plus step bookkeeping; Du is computed once per state"""
    def __init__(self, field: MapField, step_count: int = 0, degenerate_flag: bool = False,
                 degeneracy: Optional[DegeneracyEvent] = None):
        self.field = field
        self.step_count = step_count
        self.degenerate_flag = degenerate_flag
        self.degeneracy = degeneracy
        self._du = None

    @property
    def time(self) -> float:
        return self.field.time

    def gradient(self) -> np.ndarray:
        if self._du is None:
            self._du = gradient(self.field)
        return self._du

    def min_det(self) -> Tuple[float, Tuple[int, int]]:
        det = determinant(self.gradient())
        index = np.unravel_index(int(np.argmin(det)), det.shape)
        return float(det[index]), (int(index[0]), int(index[1]))


def velocity(field: MapField, flow_kind: str, du: Optional[np.ndarray] = None) -> np.ndarray:
    """du/dt at every grid point"""
    if du is None:
        du = gradient(field)
    return flow_coefficient(du, flow_kind)[..., None] * laplacian(field)


def stencil_symbol_bound(field: MapField) -> float:
    """Upper bound on the spectral radius of the discrete Laplacian on this grid"""
    g = field.lattice.metric_inverse
    n1, n2 = field.n1, field.n2
    return 4.0 * g[0, 0] * n1 ** 2 + 4.0 * g[1, 1] * n2 ** 2 + 2.0 * abs(g[0, 1]) * n1 * n2


def max_stable_dt(state: FlowState, config: FlowConfig) -> float:
    """
    Largest explicit step allowed by the CFL bound, scaled by cfl_safety

    On an orthogonal lattice this is safety / (2 max F (1/h1^2 + 1/h2^2)).
    A non-finite F (degenerate Jacobian) falls back to the F = 1 bound and
    raises the state's degenerate flag.
    """
    coefficient = flow_coefficient(state.gradient(), config.flow_kind)
    max_f = float(np.max(coefficient))
    if not np.isfinite(max_f):
        logger.warning("⚠️  Non-finite diffusion coefficient; using the F = 1 bound")
        state.degenerate_flag = True
        max_f = 1.0
    return config.cfl_safety * 2.0 / (max_f * stencil_symbol_bound(state.field))


def step(state: FlowState, dt: float, config: FlowConfig) -> FlowState:
    """Advance one explicit step (Euler or RK2 midpoint); B is never touched"""
    field = state.field
    kind = config.flow_kind

    if config.stepper == "euler":
        v_new = field.v + dt * velocity(field, kind, state.gradient())
    else:
        midpoint = field.with_displacement(field.v + 0.5 * dt * velocity(field, kind, state.gradient()),
                                           field.time + 0.5 * dt)
        v_new = field.v + dt * velocity(midpoint, kind)

    new_state = FlowState(field.with_displacement(v_new, field.time + dt), state.step_count + 1,
                          state.degenerate_flag, state.degeneracy)

    min_det, index = new_state.min_det()
    if min_det <= 0.0:
        new_state.degenerate_flag = True
        if new_state.degeneracy is None:
            new_state.degeneracy = DegeneracyEvent(new_state.step_count, new_state.time, index, min_det)
            log = logger.error if kind == FLOW_PAPER else logger.warning
            log(f"❌ det Du <= 0 at step {new_state.step_count}, t = {new_state.time:.6g}, "
                f"grid index {index} (min det = {min_det:.3e})")
    return new_state


class FlowResult:
    """Everything a run produces"""
    def __init__(self, state: FlowState, records: List["diagnostics.DiagnosticsRecord"],
                 snapshots: List[MapField], stop_reason: str, q_tol: float):
        self.state = state
        self.records = records
        self.snapshots = snapshots
        self.stop_reason = stop_reason
        self.q_tol = q_tol

    @property
    def degeneracy(self) -> Optional[DegeneracyEvent]:
        return self.state.degeneracy

    @property
    def converged(self) -> bool:
        return self.stop_reason == "converged"


def run(initial: MapField, config: FlowConfig,
        on_snapshot: Optional[Callable[[MapField], None]] = None) -> FlowResult:
    """
    Integrate to t_end, to convergence (q <= q_tol) or, for the weighted flow, to degeneracy

    Args:
        initial: starting map; must be orientation preserving for the weighted flow
        config: integration settings
        on_snapshot: receives every snapshot_stride-th field; when omitted
            snapshots are collected in the result

    Returns:
        FlowResult with the final state, the diagnostics series and snapshots
    """
    state = FlowState(initial)
    min_det, index = state.min_det()
    if min_det <= 0.0:
        if config.flow_kind == FLOW_PAPER:
            raise ValueError(f"Initial map is not orientation preserving: min det = {min_det:.3e} at {index}")
        state.degenerate_flag = True
        state.degeneracy = DegeneracyEvent(0, state.time, index, min_det)

    snapshots: List[MapField] = []

    def emit_snapshot(field: MapField):
        if on_snapshot is not None:
            on_snapshot(field)
        else:
            snapshots.append(field)

    records = [diagnostics.compute_record(state.field, config.flow_kind)]
    q_tol = config.q_tol_factor * records[0].q
    if config.snapshot_stride > 0:
        emit_snapshot(state.field)

    logger.info(f"🚀 {config.flow_kind} on {initial.n1}x{initial.n2} grid, t_end = {config.t_end:g}, "
                f"E0 = {records[0].E:.6g}, q0 = {records[0].q:.6g}")

    stop_reason = "t_end"
    if records[0].q <= q_tol:
        stop_reason = "converged"

    t_stop = config.t_end * (1.0 - 1e-14)
    while stop_reason == "t_end" and state.time < t_stop:
        if config.max_steps is not None and state.step_count >= config.max_steps:
            stop_reason = "max_steps"
            break

        dt = config.dt if config.dt is not None else max_stable_dt(state, config)
        dt = min(dt, config.t_end - state.time)
        state = step(state, dt, config)
        logger.debug(f"step {state.step_count}: t = {state.time:.6g}, dt = {dt:.3e}")

        if state.degeneracy is not None and config.flow_kind == FLOW_PAPER:
            stop_reason = "degenerate"

        if config.snapshot_stride > 0 and state.step_count % config.snapshot_stride == 0:
            emit_snapshot(state.field)

        at_end = state.time >= t_stop or stop_reason != "t_end"
        if state.step_count % config.diagnostics_stride == 0 or at_end:
            record = diagnostics.compute_record(state.field, config.flow_kind, records[-1])
            records.append(record)
            if len(records) % 10 == 0:
                logger.info(f"t = {record.t:.6g}: E = {record.E:.10g}, q = {record.q:.3e}, "
                            f"lambda in [{record.lambda_min:.4f}, {record.lambda_max:.4f}], "
                            f"min det = {record.min_det:.4f}")
            if stop_reason == "t_end" and record.q <= q_tol:
                stop_reason = "converged"

    logger.info(f"✅ Stopped ({stop_reason}) at t = {state.time:.6g} after {state.step_count} steps")

    return FlowResult(state, records, snapshots, stop_reason, q_tol)
