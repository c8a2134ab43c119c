"""
STUDIES
Batched runs across grid resolutions: convergence orders of the energy
identity and the (r, theta) residuals, Hoelder seminorm trends, and decay rates.
Cells run on a thread pool; each cell writes into its own directory.
"""

import logging
import math
import traceback
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

import diagnostics
import snapshot_store
from diagnostics import HOLDER_ALPHAS, HOLDER_TIME_CENTERS, HolderEstimator, InsufficientDataError
from flow import FlowState, max_stable_dt, run
from run_config import RunConfig
from snapshot_store import PathLike

logger = logging.getLogger(__name__)

STUDY_KINDS = ("refinement", "holder", "decay")
DEFAULT_RESOLUTIONS = (32, 64, 128)
HOLDER_QUANTITIES = ("F", "r", "theta")

REFINEMENT_COLUMNS = ["n", "energy_discrepancy", "residual_theta", "residual_r", "lambda_excursion",
                      "order_energy", "order_theta", "order_r", "error"]
HOLDER_COLUMNS = ["n", "quantity", "alpha", "seminorm", "radii", "discarded", "error"]
DECAY_COLUMNS = ["n", "omega", "quality", "speed_omega", "error"]


class StudyResult:
    """Rows of the combined table plus any failed cells"""
    def __init__(self, kind: str, rows: List[Dict], columns: List[str], failures: Dict[int, str]):
        self.kind = kind
        self.rows = rows
        self.columns = columns
        self.failures = failures

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self):
        return {'kind': self.kind, 'rows': self.rows, 'failures': {str(k): v for k, v in self.failures.items()}}


def convergence_order(coarse_error: float, fine_error: float, coarse_n: int, fine_n: int) -> float:
    """log(e_coarse / e_fine) / log(n_fine / n_coarse)"""
    if not (coarse_error > 0 and fine_error > 0):
        return math.nan
    return math.log(coarse_error / fine_error) / math.log(fine_n / coarse_n)


def relative_variation(values: Sequence[float]) -> float:
    """(max - min) / max of the finite values"""
    finite = [v for v in values if math.isfinite(v)]
    if not finite or max(finite) == 0:
        return math.nan
    return (max(finite) - min(finite)) / max(finite)


# ==================== CELLS ====================

def _refinement_cell(config: RunConfig, cell_dir: Path) -> Dict:
    result = run(config.initial_field(), config.flow_config())
    snapshot_store.write_diagnostics_csv(result.records, cell_dir / snapshot_store.DIAGNOSTICS_FILE)
    records = result.records
    discrepancy = max((diagnostics.energy_identity_check(a, b) for a, b in zip(records, records[1:])),
                      default=math.nan)
    spacing = max(result.state.field.spacing())
    bounds = diagnostics.bound_preservation(records, spacing, c_slack=config.c_slack)
    return {
        'energy_discrepancy': discrepancy,
        'residual_theta': max(r.residual_theta for r in records),
        'residual_r': max(r.residual_r for r in records),
        'lambda_excursion': bounds.lower_excursion,
    }


def holder_snapshot_stride(config: RunConfig) -> int:
    """Steps between snapshots so the smallest admissible radius (2h) spans two snapshots"""
    field = config.initial_field()
    dt = config.dt if config.dt is not None else max_stable_dt(FlowState(field), config.flow_config())
    h = max(field.spacing())
    return max(1, int((2.0 * h) ** 2 / (2.0 * dt)))


def _holder_estimators(lattice, n1: int, n2: int, top_times, radii) -> Dict[str, HolderEstimator]:
    return {name: HolderEstimator(lattice, n1, n2, top_times, radii, angular=(name == "theta"))
            for name in HOLDER_QUANTITIES}


def _holder_rows(estimators: Dict[str, HolderEstimator], output_dir: Path) -> List[Dict]:
    """Write holder_<quantity>.csv per quantity and return the table rows"""
    rows = []
    for name, estimator in estimators.items():
        reports = [estimator.report(alpha) for alpha in HOLDER_ALPHAS]
        snapshot_store.write_holder_csv(reports, output_dir / f"holder_{name}.csv", label=name)
        for report in reports:
            rows.append({'quantity': name, 'alpha': report.alpha, 'seminorm': report.seminorm,
                         'radii': len(report.pairs), 'discarded': report.discarded})
    return rows


def _holder_cell(config: RunConfig, cell_dir: Path) -> List[Dict]:
    flow_config = config.flow_config()
    flow_config.snapshot_stride = holder_snapshot_stride(config)
    initial = config.initial_field()
    dt = config.dt if config.dt is not None else max_stable_dt(FlowState(initial), flow_config)

    radii = diagnostics.dyadic_radii(initial.lattice, initial.n1, initial.n2, flow_config.snapshot_stride * dt)
    if len(radii) < 4:
        raise InsufficientDataError(f"Only {len(radii)} dyadic radii fit n = {initial.n1} (need 4)")
    top_times = np.linspace(0.0, config.t_end, HOLDER_TIME_CENTERS)
    estimators = _holder_estimators(initial.lattice, initial.n1, initial.n2, top_times, radii)

    def collect(field):
        values = diagnostics.snapshot_quantities(field)
        for name, estimator in estimators.items():
            estimator.add(field.time, values[name])

    run(initial, flow_config, on_snapshot=collect)
    return _holder_rows(estimators, cell_dir)


def holder_from_snapshots(snapshot_dir: PathLike, time_centers: int = HOLDER_TIME_CENTERS) -> List[Dict]:
    """
    Hoelder seminorms of F, r and theta from a stored run

    Only headers are read up front; the dumps are then streamed one at a
    time. holder_<quantity>.csv files are written next to the snapshots.

    Raises:
        InsufficientDataError: no snapshots, or fewer than 4 radii fit them
    """
    snapshot_dir = Path(snapshot_dir)
    paths = snapshot_store.list_snapshots(snapshot_dir)
    if not paths:
        raise InsufficientDataError(f"No stored snapshots in {snapshot_dir}")

    headers = [snapshot_store.read_snapshot_header(path) for path in paths]
    n1, n2 = headers[0].n1, headers[0].n2
    lattice = headers[0].pair.domain
    times = np.array([header.time for header in headers])

    radii = diagnostics.holder_radii(lattice, n1, n2, times)
    tops = np.unique(np.linspace(0, len(times) - 1, max(1, time_centers)).round().astype(int))
    estimators = _holder_estimators(lattice, n1, n2, times[tops], radii)

    for field in snapshot_store.iter_snapshots(snapshot_dir):
        values = diagnostics.snapshot_quantities(field)
        for name, estimator in estimators.items():
            estimator.add(field.time, values[name])
    logger.info(f"📦 Streamed {len(paths)} snapshot(s) from {snapshot_dir}")
    return _holder_rows(estimators, snapshot_dir)


def _decay_cell(config: RunConfig, cell_dir: Path) -> Dict:
    result = run(config.initial_field(), config.flow_config())
    snapshot_store.write_diagnostics_csv(result.records, cell_dir / snapshot_store.DIAGNOSTICS_FILE)
    times = [r.t for r in result.records]
    omega, quality = diagnostics.fit_decay_rate(times, [r.q for r in result.records])
    try:
        speed_omega, _ = diagnostics.fit_decay_rate(times, [r.speed_max for r in result.records])
    except InsufficientDataError:
        speed_omega = math.nan
    return {'omega': omega, 'quality': quality, 'speed_omega': speed_omega}


CELLS = {
    "refinement": (_refinement_cell, REFINEMENT_COLUMNS),
    "holder": (_holder_cell, HOLDER_COLUMNS),
    "decay": (_decay_cell, DECAY_COLUMNS),
}


# ==================== DRIVER ====================

def run_study(kind: str, base: RunConfig, resolutions: Sequence[int] = DEFAULT_RESOLUTIONS,
              threads: int = 1, output_dir: Optional[str] = None) -> StudyResult:
    """
    Run one study kind over the given resolutions

    A failing cell is logged with its traceback and reported in the result;
    the other cells still finish and the combined table keeps their rows.
    """
    if kind not in CELLS:
        raise ValueError(f"Unknown study kind '{kind}' (use {', '.join(STUDY_KINDS)})")
    cell, columns = CELLS[kind]
    store = snapshot_store.create_store(Path(output_dir or base.output_dir) / f"{kind}_study")
    threads = max(1, int(threads))

    logger.info("=" * 60)
    logger.info(f"📦 {kind} study over n = {list(resolutions)} with {threads} worker(s)")
    logger.info("=" * 60)

    outcomes: Dict[int, object] = {}
    failures: Dict[int, str] = {}

    def worker(n: int):
        cell_dir = snapshot_store.create_store(store / f"n{n:04d}")
        return n, cell(base.with_resolution(n), cell_dir)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = {pool.submit(worker, n): n for n in resolutions}
        for future in as_completed(futures):
            n = futures[future]
            try:
                _, outcome = future.result()
                outcomes[n] = outcome
                logger.info(f"✅ {kind} cell n = {n} done")
            except Exception as e:
                failures[n] = f"{type(e).__name__}: {e}"
                logger.error(f"❌ {kind} cell n = {n} failed: {e}")
                logger.error(traceback.format_exc())

    rows = _assemble(kind, sorted(resolutions), outcomes, failures)
    snapshot_store.write_table(rows, columns, store / f"{kind}_study.csv")
    _log_trend(kind, rows)
    return StudyResult(kind, rows, columns, failures)


def _assemble(kind: str, resolutions: List[int], outcomes: Dict[int, object],
              failures: Dict[int, str]) -> List[Dict]:
    """Rows in resolution order, failed cells kept with their error"""
    rows: List[Dict] = []
    for n in resolutions:
        if n in failures:
            rows.append({'n': n, 'error': failures[n]})
        elif kind == "holder":
            rows.extend({'n': n, **entry} for entry in outcomes[n])
        else:
            rows.append({'n': n, **outcomes[n]})

    if kind == "refinement":
        done = [row for row in rows if 'error' not in row]
        for coarse, fine in zip(done, done[1:]):
            for key, column in (("energy_discrepancy", "order_energy"),
                                ("residual_theta", "order_theta"),
                                ("residual_r", "order_r")):
                fine[column] = convergence_order(coarse[key], fine[key], coarse['n'], fine['n'])
    return rows


def _log_trend(kind: str, rows: List[Dict]):
    if kind == "refinement":
        for row in rows:
            if 'order_energy' in row:
                logger.info(f"n = {row['n']}: order energy {row['order_energy']:.2f}, "
                            f"theta {row['order_theta']:.2f}, r {row['order_r']:.2f}")
    elif kind == "holder":
        seminorms = [row['seminorm'] for row in rows if row.get('quantity') == "F" and row.get('alpha') == 0.5]
        logger.info(f"F seminorm (alpha = 0.5) relative variation across n: {relative_variation(seminorms):.3f}")
    elif kind == "decay":
        omegas = [row['omega'] for row in rows if 'omega' in row]
        logger.info(f"Decay rate relative variation across n: {relative_variation(omegas):.3f}")
