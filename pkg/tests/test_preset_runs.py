"""Full runs of the named presets at desk resolution"""

import numpy as np
import pytest

from diagnostics import affine_fit, bound_preservation
from difflow import summarize
from field import gradient, hessian
from flow import run
from kinematics import FLOW_HEAT, singular_values
from run_config import RunConfig


def preset_config(name, n, t_end, flow_kind=None):
    config = RunConfig()
    config.use_preset(name)
    config.t_end = t_end
    if flow_kind is not None:
        config.set_flow_kind(flow_kind)
    return config.with_resolution(n)


def run_preset(config):
    return run(config.initial_field(), config.flow_config())


# ==================== CONVERGENCE ====================

@pytest.mark.parametrize("name", ["identity-perturbed", "shear", "anisotropic"])
def test_preset_converges_to_affine_limit(name):
    config = preset_config(name, 32, t_end=8.0)
    result = run_preset(config)
    assert result.stop_reason == "converged"

    field = result.state.field
    _, _, residual = affine_fit(field)
    assert residual < 1e-6

    sigma1, sigma2 = singular_values(field.linear_part)
    lambda1, lambda2 = singular_values(gradient(field))
    assert np.max(np.abs(lambda1 - sigma1)) < 1e-6
    assert np.max(np.abs(lambda2 - sigma2)) < 1e-6

    summary = summarize(result, config)
    assert summary['affine_residual'] == residual
    assert summary['limit_singular_value_error'] < 1e-6


# ==================== SINGULAR VALUE BOUNDS ====================

@pytest.mark.parametrize("name", ["identity-perturbed", "shear", "anisotropic", "large-gradient"])
def test_singular_value_bounds_hold_and_tighten(name):
    excursions = []
    for n in (32, 64):
        result = run_preset(preset_config(name, n, t_end=0.25))
        records = result.records
        report = bound_preservation(records, max(result.state.field.spacing()))
        assert report.ok, report.to_dict()
        assert min(r.lambda_min for r in records) >= 0.99 * records[0].lambda_min
        excursions.append(report.lower_excursion)

    coarse, fine = excursions
    assert fine <= max(coarse / 3.0, 1e-12)


# ==================== SYMMETRIC Du ====================

def test_gradient_map_stays_symmetric():
    worst = {}
    for n in (16, 32):
        config = preset_config("gradient-map", n, t_end=2.0)
        initial = config.initial_field()
        scale = float(np.max(np.abs(hessian(initial))))
        result = run_preset(config)
        worst[n] = max(r.antisymmetry for r in result.records)
        assert result.records[0].antisymmetry < 1e-12
        assert worst[n] < 10.0 * max(initial.spacing()) ** 2 * scale
    assert worst[32] < worst[16] / 3.0


# ==================== COMPARISON FLOW ====================

def test_heat_flow_on_large_gradient_runs_to_completion():
    config = preset_config("large-gradient", 32, t_end=0.25, flow_kind=FLOW_HEAT)
    result = run_preset(config)
    assert result.stop_reason in ("t_end", "converged")

    summary = summarize(result, config)
    trace = summary['min_det_trace']
    assert len(trace) == len(result.records)
    assert all(np.isfinite(min_det) for _, min_det in trace)
    assert trace[0][1] == pytest.approx(result.records[0].min_det)
