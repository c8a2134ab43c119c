import json

import pytest

import difflow
import snapshot_store


def write_config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_presets(capsys):
    assert difflow.main(["presets"]) == difflow.EXIT_OK
    out = capsys.readouterr().out
    assert "identity-perturbed" in out
    assert "large-gradient" in out


def test_verify_passes(capsys):
    assert difflow.main(["verify", "--trials", "20", "--seed", "1"]) == difflow.EXIT_OK
    out = capsys.readouterr().out
    assert "S evolution, lower bound" in out
    assert "theta equation" in out
    assert "❌" not in out


def test_verify_with_impossible_tolerance_fails():
    assert difflow.main(["verify", "--trials", "20", "--tolerance", "1e-30"]) == difflow.EXIT_FAILED


def test_verify_affine_jets_pass_any_tolerance(capsys):
    code = difflow.main(["verify", "--trials", "1", "--seed", "4", "--tolerance", "1e-30", "--affine"])
    assert code == difflow.EXIT_OK
    assert "❌" not in capsys.readouterr().out


def test_verify_rejects_zero_trials():
    assert difflow.main(["verify", "--trials", "0"]) == difflow.EXIT_INVALID_CONFIG


def test_run_writes_outputs(tmp_path):
    out = tmp_path / "run"
    path = write_config(tmp_path, "preset = single-mode\nresolution = 16\nt_end = 0.02\nsnapshot_stride = 5\n")
    assert difflow.main(["run", "--config", path, "--out", str(out)]) == difflow.EXIT_OK

    snapshots, has_diagnostics, has_summary = snapshot_store.store_summary(out)
    assert snapshots >= 2
    assert has_diagnostics and has_summary

    with open(out / snapshot_store.SUMMARY_FILE) as f:
        summary = json.load(f)
    assert summary['stop_reason'] == "t_end"
    assert summary['final_time'] == pytest.approx(0.02)
    assert summary['bounds']['ok']
    assert summary['energy_monotone']
    assert summary['config']['preset'] == "single-mode"
    assert summary['affine_linear_part'] == [[1.0, 0.0], [0.0, 1.0]]

    records = snapshot_store.read_diagnostics_csv(out / snapshot_store.DIAGNOSTICS_FILE)
    assert records[0].t == 0.0
    assert records[-1].t == pytest.approx(0.02)


def test_run_rejects_folded_map_for_weighted_flow(tmp_path):
    path = write_config(tmp_path, "mode = 1 0 0.3 0\nresolution = 16\nt_end = 0.001\n")
    assert difflow.main(["run", "--config", path, "--out", str(tmp_path / "a")]) == difflow.EXIT_INVALID_CONFIG


def test_comparison_flow_may_start_folded(tmp_path):
    path = write_config(tmp_path, "mode = 1 0 0.3 0\nresolution = 16\nt_end = 0.001\n"
                                  "allow_nondiffeomorphic = true\n")
    out = tmp_path / "b"
    assert difflow.main(["run", "--config", path, "--flow", "hmhf", "--out", str(out)]) == difflow.EXIT_OK
    summary = snapshot_store.read_summary(out / snapshot_store.SUMMARY_FILE)
    assert summary['degenerate_flag']
    assert summary['config']['flow_kind'] == "harmonic_heat_flow"


def test_run_reports_degeneracy(tmp_path):
    path = write_config(tmp_path, "mode = 5 0 0.01 0 0\nresolution = 16\nstepper = euler\ndt = 0.1\n")
    out = tmp_path / "c"
    assert difflow.main(["run", "--config", path, "--out", str(out)]) == difflow.EXIT_DEGENERATE
    summary = snapshot_store.read_summary(out / snapshot_store.SUMMARY_FILE)
    assert summary['stop_reason'] == "degenerate"
    assert summary['degeneracy']['step'] == 1


def test_holder_from_run_snapshots(tmp_path):
    out = tmp_path / "run"
    path = write_config(tmp_path, "preset = single-mode\nresolution = 32\nt_end = 0.01\nsnapshot_stride = 2\n")
    assert difflow.main(["run", "--config", path, "--out", str(out)]) == difflow.EXIT_OK
    assert difflow.main(["holder", "--snapshots", str(out)]) == difflow.EXIT_OK
    assert (out / "holder_F.csv").exists()


def test_holder_exit_codes(tmp_path):
    assert difflow.main(["holder", "--snapshots", str(tmp_path / "missing")]) == difflow.EXIT_INVALID_CONFIG
    out = tmp_path / "coarse"
    path = write_config(tmp_path, "preset = single-mode\nresolution = 16\nt_end = 0.005\nsnapshot_stride = 2\n")
    assert difflow.main(["run", "--config", path, "--out", str(out)]) == difflow.EXIT_OK
    assert difflow.main(["holder", "--snapshots", str(out)]) == difflow.EXIT_FAILED


@pytest.mark.parametrize("text", ["colour = blue\n", "resolution = 2\n", "linear_part = 1 0 0 0\n"])
def test_invalid_config_exit_code(tmp_path, text):
    path = write_config(tmp_path, text)
    assert difflow.main(["run", "--config", path]) == difflow.EXIT_INVALID_CONFIG


def test_missing_config_file(tmp_path):
    assert difflow.main(["run", "--config", str(tmp_path / "nope.cfg")]) == difflow.EXIT_INVALID_CONFIG


def test_unknown_preset_flag(tmp_path):
    assert difflow.main(["run", "--preset", "nope", "--out", str(tmp_path)]) == difflow.EXIT_INVALID_CONFIG


def test_study_command(tmp_path):
    path = write_config(tmp_path, "preset = single-mode\nt_end = 0.005\n")
    code = difflow.main(["study", "--kind", "refinement", "--resolutions", "16", "32",
                         "--config", path, "--out", str(tmp_path)])
    assert code == difflow.EXIT_OK
    assert (tmp_path / "refinement_study" / "refinement_study.csv").exists()


def test_failed_study_cell_exit_code(tmp_path):
    path = write_config(tmp_path, "preset = single-mode\nt_end = 0.005\n")
    code = difflow.main(["study", "--kind", "holder", "--resolutions", "8",
                         "--config", path, "--out", str(tmp_path)])
    assert code == difflow.EXIT_FAILED
