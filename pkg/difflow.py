"""
DIFFLOW - MAIN FILE
Simulator and verification lab for the diffeomorphism-preserving flow
du/dt = Delta u / (|Du|^2 + 2 det Du) between flat 2-tori
Subcommands: run, verify, study, holder, presets
"""

import argparse
import logging
import os
import sys
import traceback
from typing import Dict, List, Optional

import numpy as np

import diagnostics
import snapshot_store
from diagnostics import InsufficientDataError
from flow import FlowResult, run
from initial_maps import check_diffeomorphism, list_presets
from kinematics import FLOW_PAPER, singular_values
from oracle import DEFAULT_TOLERANCE, run_identity_suite
from run_config import ConfigError, RunConfig
from studies import DEFAULT_RESOLUTIONS, STUDY_KINDS, holder_from_snapshots, run_study

# ================= CONFIG =================
THREADS = int(os.getenv("DIFFLOW_THREADS", "1"))
LOG_LEVEL = os.getenv("DIFFLOW_LOG_LEVEL", "INFO").upper()
OUTPUT_DIR = os.getenv("DIFFLOW_OUT", "runs")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_DEGENERATE = 2
EXIT_INVALID_CONFIG = 3

DEFAULT_TRIALS = 1000
# =========================================

# Setup logging
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def _optional_fit(times, values):
    try:
        omega, quality = diagnostics.fit_decay_rate(times, values)
        return {'omega': omega, 'quality': quality}
    except InsufficientDataError as e:
        logger.warning(f"⚠️  Decay fit skipped: {e}")
        return None


def summarize(result: FlowResult, config: RunConfig) -> Dict:
    """Run summary: limit checks, fitted rates and the bound verdict"""
    records = result.records
    final = records[-1]
    field = result.state.field
    b = field.linear_part

    A, y, affine_residual = diagnostics.affine_fit(field)
    sigma1, sigma2 = (float(x) for x in singular_values(b))
    bounds = diagnostics.bound_preservation(records, max(field.spacing()), c_slack=config.c_slack)
    energy_ok, energy_increase = diagnostics.energy_monotonicity(records)
    decay_ok, decay_increase = diagnostics.decay_monotonicity(records)
    times = [r.t for r in records]

    summary = {
        'config': config.to_dict(),
        'stop_reason': result.stop_reason,
        'final_time': field.time,
        'steps': result.state.step_count,
        'q_tol': result.q_tol,
        'degenerate_flag': result.state.degenerate_flag,
        'degeneracy': None if result.degeneracy is None else result.degeneracy.to_dict(),
        'affine_residual': affine_residual,
        'affine_linear_part': A,
        'affine_translation': y,
        'limit_singular_value_error': max(abs(final.lambda_min - sigma1), abs(final.lambda_max - sigma2)),
        'energy_gap': final.E - 0.5 * float(np.sum(b ** 2)) * field.lattice.area,
        'decay_fit': _optional_fit(times, [r.q for r in records]),
        'speed_decay_fit': _optional_fit(times, [r.speed_max for r in records]),
        'bounds': bounds.to_dict(),
        'energy_monotone': energy_ok,
        'energy_max_relative_increase': energy_increase,
        'decay_monotone': decay_ok,
        'decay_max_relative_increase': decay_increase,
        'lambda_envelope': diagnostics.lambda_envelope(records),
        'min_det_trace': [[r.t, r.min_det] for r in records],
        'final_record': final.to_dict(),
    }
    return summary


class FlowLab:
    """Orchestrates runs, verification suites and studies"""

    def __init__(self, output_dir: str, threads: int):
        self.output_dir = output_dir
        self.threads = max(1, threads)

    def load_config(self, path: Optional[str], flow: Optional[str] = None, preset: Optional[str] = None,
                    out: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
        config = RunConfig.from_file(path) if path else RunConfig()
        if not path:
            config.output_dir = self.output_dir
        config.apply_overrides(flow=flow, preset=preset, out=out, seed=seed)
        return config

    def run(self, config: RunConfig) -> int:
        """Integrate one configuration and write CSV, snapshots and summary"""
        initial = config.initial_field()
        ok, min_det, min_lambda = check_diffeomorphism(initial)
        if not ok:
            if config.flow_kind == FLOW_PAPER or not config.allow_nondiffeomorphic:
                logger.error(f"❌ Initial map is not a diffeomorphism (min det = {min_det:.3e}); "
                             f"set flow_kind = hmhf and allow_nondiffeomorphic = true to run the comparison flow")
                return EXIT_INVALID_CONFIG
            logger.warning(f"⚠️  Running {config.flow_kind} from a non-diffeomorphic map (min det = {min_det:.3e})")

        store = snapshot_store.create_store(config.output_dir)
        writer = snapshot_store.SnapshotWriter(store) if config.snapshot_stride > 0 else None

        logger.info("=" * 60)
        logger.info(f"🚀 Run: {config.flow_kind}, {config.resolution[0]}x{config.resolution[1]}, "
                    f"preset = {config.preset}, min det = {min_det:.4f}, min lambda = {min_lambda:.4f}")
        logger.info("=" * 60)

        result = run(initial, config.flow_config(), on_snapshot=writer)

        snapshot_store.write_diagnostics_csv(result.records, store / snapshot_store.DIAGNOSTICS_FILE)
        summary = summarize(result, config)
        snapshot_store.write_summary(summary, store / snapshot_store.SUMMARY_FILE)

        logger.info("=" * 60)
        snapshots, _, _ = snapshot_store.store_summary(store)
        logger.info(f"📦 Output in {store.absolute()} ({snapshots} snapshot(s))")
        logger.info(f"   Stop: {result.stop_reason} at t = {result.state.time:.6g}")
        logger.info(f"   Affine residual: {summary['affine_residual']:.3e}")
        if summary['decay_fit']:
            logger.info(f"   Decay rate: {summary['decay_fit']['omega']:.6g} "
                        f"(R^2 = {summary['decay_fit']['quality']:.4f})")
        verdict = "✅ preserved" if summary['bounds']['ok'] else "⚠️  violated"
        logger.info(f"   Singular value bounds: {verdict}")
        logger.info("=" * 60)

        if result.stop_reason == "degenerate":
            return EXIT_DEGENERATE
        return EXIT_OK

    def verify(self, trials: int, seed: int, tolerance: float, affine: bool = False) -> int:
        """Run the identity suite and print the pass/fail table"""
        results = run_identity_suite(trials, seed, tolerance, affine=affine)
        print("=" * 78)
        print(f"{'identity':<42}{'trials':>8}{'max residual':>14}{'tolerance':>11}  ok")
        print("-" * 78)
        for result in results:
            status = "✅" if result.passed else "❌"
            print(f"{result.name:<42}{result.trials:>8}{result.max_residual:>14.3e}{result.tolerance:>11.1e}  {status}")
        print("=" * 78)
        return EXIT_OK if all(result.passed for result in results) else EXIT_FAILED

    def study(self, kind: str, config: RunConfig, resolutions: List[int]) -> int:
        result = run_study(kind, config, resolutions, threads=self.threads, output_dir=config.output_dir)
        if not result.ok:
            logger.error(f"❌ {len(result.failures)} study cell(s) failed; partial results kept")
            return EXIT_FAILED
        return EXIT_OK

    def holder(self, snapshot_dir: str) -> int:
        """Hoelder seminorms of F, r and theta from the snapshots of a finished run"""
        if not os.path.isdir(snapshot_dir):
            logger.error(f"❌ No run directory at {snapshot_dir}")
            return EXIT_INVALID_CONFIG
        try:
            rows = holder_from_snapshots(snapshot_dir)
        except InsufficientDataError as e:
            logger.error(f"❌ Hoelder estimate impossible: {e}")
            return EXIT_FAILED
        except ValueError as e:
            logger.error(f"❌ Unreadable snapshot: {e}")
            logger.error(traceback.format_exc())
            return EXIT_FAILED

        print("=" * 60)
        print(f"{'quantity':<10}{'alpha':>8}{'seminorm':>14}{'radii':>8}{'discarded':>11}")
        print("-" * 60)
        for row in rows:
            print(f"{row['quantity']:<10}{row['alpha']:>8.2f}{row['seminorm']:>14.6g}"
                  f"{row['radii']:>8}{row['discarded']:>11}")
        print("=" * 60)
        return EXIT_OK

    def presets(self) -> int:
        print("=" * 60)
        print("📦 Available presets:")
        print("=" * 60)
        for name, description in list_presets():
            print(f"  {name:<20} {description}")
        print("=" * 60)
        return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="difflow", description="Flat-torus diffeomorphism flow lab")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="integrate one configuration")
    study_parser = commands.add_parser("study", help="batched runs across resolutions")
    for sub in (run_parser, study_parser):
        sub.add_argument("--config", type=str, default=None, help="key = value run file")
        sub.add_argument("--out", type=str, default=None, help="output directory")
        sub.add_argument("--flow", type=str, default=None, choices=["paper", "hmhf"])
        sub.add_argument("--preset", type=str, default=None)
        sub.add_argument("--seed", type=int, default=None)
    study_parser.add_argument("--kind", type=str, required=True, choices=list(STUDY_KINDS))
    study_parser.add_argument("--resolutions", type=int, nargs="+", default=list(DEFAULT_RESOLUTIONS))

    verify_parser = commands.add_parser("verify", help="certify the maximum principle identities")
    verify_parser.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    verify_parser.add_argument("--seed", type=int, default=0)
    verify_parser.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    verify_parser.add_argument("--affine", action="store_true",
                               help="drop higher derivatives of every jet; all residuals must be exactly 0")

    holder_parser = commands.add_parser("holder", help="Hoelder seminorms from the snapshots of a run")
    holder_parser.add_argument("--snapshots", type=str, required=True, help="output directory of a run")

    commands.add_parser("presets", help="list built-in initial maps")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    lab = FlowLab(OUTPUT_DIR, THREADS)

    if args.command == "presets":
        return lab.presets()

    if args.command == "holder":
        return lab.holder(args.snapshots)

    if args.command == "verify":
        if args.trials < 1:
            logger.error("❌ --trials must be at least 1")
            return EXIT_INVALID_CONFIG
        return lab.verify(args.trials, args.seed, args.tolerance, affine=args.affine)

    try:
        config = lab.load_config(args.config, flow=args.flow, preset=args.preset, out=args.out, seed=args.seed)
    except ConfigError as e:
        logger.error(f"❌ Invalid config: {e}")
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID_CONFIG

    try:
        if args.command == "run":
            return lab.run(config)
        return lab.study(args.kind, config, args.resolutions)
    except ConfigError as e:
        logger.error(f"❌ Invalid config: {e}")
        print(f"invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except Exception as e:
        logger.error(f"❌ {args.command} failed: {e}")
        logger.error(traceback.format_exc())
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
