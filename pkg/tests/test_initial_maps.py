import numpy as np
import pytest

from field import gradient
from initial_maps import (LARGE_GRADIENT_AMPLITUDE, PRESETS, ModeSpec, build_map, build_preset,
                          check_diffeomorphism, get_preset, list_presets, random_modes)
from lattice import check_homomorphism


def test_mode_spec_parse():
    mode = ModeSpec.parse("1 -2 0.01 0.02 0.5")
    assert mode.k == (1, -2)
    assert mode.amplitude == (0.01, 0.02)
    assert mode.phase == 0.5
    assert ModeSpec.parse("0, 1, 0.1, 0").phase == 0.0


@pytest.mark.parametrize("text", ["1 0 0.01", "1.5 0 0.01 0", "0 0 0.01 0", "a b c d"])
def test_mode_spec_parse_rejects(text):
    with pytest.raises(ValueError):
        ModeSpec.parse(text)


def test_mode_spec_scaled_and_dict():
    mode = ModeSpec((2, 1), (0.1, -0.2), 0.3).scaled(0.5)
    assert mode.amplitude == pytest.approx((0.05, -0.1))
    assert ModeSpec.from_dict(mode.to_dict()).k == (2, 1)


def test_build_map_single_mode(unit_pair):
    field = build_map(unit_pair, [ModeSpec((0, 1), (0.0, 0.1), np.pi / 2)], 8)
    assert field.v.shape == (8, 8, 2)
    # cos(2 pi x2) in the second component
    np.testing.assert_allclose(field.v[3, :, 1], 0.1 * np.cos(2 * np.pi * np.arange(8) / 8), atol=1e-15)
    np.testing.assert_allclose(field.v[..., 0], 0.0, atol=1e-15)


def test_build_map_rectangular_grid(unit_pair):
    assert build_map(unit_pair, [], 8, 16).v.shape == (8, 16, 2)


def test_check_diffeomorphism(unit_pair):
    ok, min_det, min_lambda = check_diffeomorphism(build_map(unit_pair, [ModeSpec((1, 0), (0.01, 0.0))], 16))
    assert ok
    assert min_det > 0.9
    assert min_lambda > 0.9

    ok, min_det, _ = check_diffeomorphism(build_map(unit_pair, [ModeSpec((1, 0), (0.3, 0.0))], 16))
    assert not ok
    assert min_det < 0


def test_random_modes_are_seeded():
    first = random_modes(np.random.default_rng(4), 5)
    second = random_modes(np.random.default_rng(4), 5)
    assert [m.to_dict() for m in first] == [m.to_dict() for m in second]
    assert all(m.k != (0, 0) for m in first)
    assert all(max(abs(a) for a in m.amplitude) <= 0.01 for m in first)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_are_diffeomorphisms_in_homomorphism_classes(name):
    preset = get_preset(name)
    ok, _ = check_homomorphism(preset.pair())
    assert ok
    ok, min_det, _ = check_diffeomorphism(preset.build(32))
    assert ok, min_det


def test_large_gradient_preset_is_near_degenerate():
    field = build_preset("large-gradient", 64)
    _, _, min_lambda = check_diffeomorphism(field)
    # the discrete derivative damps the mode slightly
    assert 0.05 <= min_lambda < 0.06
    assert LARGE_GRADIENT_AMPLITUDE * 2 * np.pi == pytest.approx(0.95)


def test_anisotropic_preset_linear_part():
    np.testing.assert_allclose(get_preset("anisotropic").pair().linear_part, np.diag([2.0, 1.0]))


def test_gradient_map_preset_has_symmetric_jacobian():
    du = gradient(build_preset("gradient-map", 32))
    np.testing.assert_allclose(du[..., 0, 1], du[..., 1, 0], atol=1e-12)


def test_preset_lookup():
    names = [name for name, _ in list_presets()]
    assert "identity-perturbed" in names
    assert len(names) == len(PRESETS)
    with pytest.raises(KeyError):
        get_preset("nope")
