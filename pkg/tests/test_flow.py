import numpy as np
import pytest

from diagnostics import energy_monotonicity
from field import MapField
from flow import FlowConfig, FlowState, max_stable_dt, run, stencil_symbol_bound, step, velocity
from initial_maps import ModeSpec, build_map
from kinematics import FLOW_HEAT, FLOW_PAPER


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(cfl_safety=0.0)
    with pytest.raises(ValueError):
        FlowConfig(cfl_safety=1.5)
    with pytest.raises(ValueError):
        FlowConfig(t_end=0.0)
    with pytest.raises(ValueError):
        FlowConfig(stepper="rk4")
    with pytest.raises(ValueError):
        FlowConfig(diagnostics_stride=0)
    with pytest.raises(ValueError):
        FlowConfig(dt=-1.0)
    with pytest.raises(ValueError):
        FlowConfig(flow_kind="ricci")
    assert FlowConfig(flow_kind="hmhf").to_dict()['flow_kind'] == FLOW_HEAT


def test_affine_map_is_stationary(shear_pair):
    field = MapField.affine(shear_pair, 8, 8)
    assert np.array_equal(velocity(field, FLOW_PAPER), np.zeros((8, 8, 2)))
    result = run(field, FlowConfig())
    assert result.stop_reason == "converged"
    assert result.converged
    assert result.state.step_count == 0
    assert result.records[0].q == 0.0


def test_cfl_step_on_identity(unit_pair):
    field = MapField.affine(unit_pair, 16, 16)
    assert stencil_symbol_bound(field) == pytest.approx(2048.0)
    # F = 1/4 at the identity
    assert max_stable_dt(FlowState(field), FlowConfig()) == pytest.approx(1.0 / 512.0)
    assert max_stable_dt(FlowState(field), FlowConfig(flow_kind="hmhf")) == pytest.approx(1.0 / 2048.0)
    assert max_stable_dt(FlowState(field), FlowConfig(cfl_safety=1.0)) == pytest.approx(1.0 / 256.0)


def test_step_keeps_linear_part(single_mode):
    state = FlowState(single_mode(16))
    new_state = step(state, 1e-3, FlowConfig())
    assert new_state.field.pair is state.field.pair
    assert new_state.step_count == 1
    assert new_state.time == pytest.approx(1e-3)
    assert not new_state.degenerate_flag


def test_energy_decreases(single_mode):
    result = run(single_mode(32, 0.02), FlowConfig(t_end=0.05, diagnostics_stride=5))
    assert result.stop_reason == "t_end"
    assert result.state.time == pytest.approx(0.05)
    ok, worst = energy_monotonicity(result.records)
    assert ok, worst
    assert result.records[-1].min_det > 0
    np.testing.assert_array_equal(result.state.field.linear_part, np.eye(2))


def test_single_mode_decays_at_linearized_rate(single_mode):
    n, eps = 32, 1e-4
    result = run(single_mode(n, eps), FlowConfig(t_end=0.05, diagnostics_stride=1000))
    # F = 1/4 at the identity, discrete Laplacian symbol 4 n^2 sin^2(pi/n)
    omega = 0.25 * 4 * n ** 2 * np.sin(np.pi / n) ** 2
    amplitude = np.max(np.abs(result.state.field.v[..., 0]))
    assert amplitude == pytest.approx(eps * np.exp(-omega * result.state.time), rel=1e-4)


def _final_displacement(field, stepper, dt):
    config = FlowConfig(stepper=stepper, dt=dt, t_end=0.02, diagnostics_stride=1000)
    return run(field, config).state.field.v


@pytest.mark.parametrize("stepper, low, high", [("euler", 1.8, 2.2), ("rk2", 3.5, 4.5)])
def test_time_stepping_order(single_mode, stepper, low, high):
    field = single_mode(16, 0.01)
    coarse, medium, fine = (_final_displacement(field, stepper, dt) for dt in (0.002, 0.001, 0.0005))
    ratio = np.max(np.abs(coarse - medium)) / np.max(np.abs(medium - fine))
    assert low < ratio < high


def test_weighted_flow_rejects_folded_initial_map(unit_pair):
    folded = build_map(unit_pair, [ModeSpec((1, 0), (0.3, 0.0))], 16)
    with pytest.raises(ValueError):
        run(folded, FlowConfig())


def test_heat_flow_runs_from_folded_map(unit_pair):
    folded = build_map(unit_pair, [ModeSpec((1, 0), (0.3, 0.0))], 16)
    result = run(folded, FlowConfig(flow_kind="hmhf", max_steps=3, diagnostics_stride=1))
    assert result.stop_reason == "max_steps"
    assert result.state.degenerate_flag
    assert result.degeneracy.step == 0
    assert result.degeneracy.min_det < 0


def test_unstable_step_stops_at_degeneracy(unit_pair):
    field = build_map(unit_pair, [ModeSpec((5, 0), (0.01, 0.0))], 16)
    result = run(field, FlowConfig(stepper="euler", dt=0.1))
    assert result.stop_reason == "degenerate"
    assert result.degeneracy.step == 1
    assert result.degeneracy.min_det <= 0
    assert result.records[-1].min_det <= 0


def test_snapshots_and_step_limit(single_mode):
    collected = []
    config = FlowConfig(dt=1e-4, snapshot_stride=5, max_steps=10, diagnostics_stride=5)
    result = run(single_mode(16), config, on_snapshot=collected.append)
    assert result.stop_reason == "max_steps"
    assert [field.time for field in collected] == pytest.approx([0.0, 5e-4, 1e-3])
    assert result.snapshots == []
    assert [record.t for record in result.records] == pytest.approx([0.0, 5e-4, 1e-3])


def test_snapshots_collected_without_callback(single_mode):
    result = run(single_mode(16), FlowConfig(dt=1e-4, snapshot_stride=2, max_steps=4))
    assert len(result.snapshots) == 3
