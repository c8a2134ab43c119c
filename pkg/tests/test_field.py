import numpy as np
import pytest

from field import (MapField, cartesian_gradient, cartesian_laplacian, gradient, hessian, integrate,
                   laplacian, lattice_coordinates, wrap_angle)
from lattice import Lattice, TorusPair

SKEW = Lattice([[1.0, 0.5], [0.0, 1.0]])


def sinc_factor(n):
    """Discrete symbol of the central difference on the lowest mode"""
    return np.sin(2 * np.pi / n) / (2 * np.pi / n)


def test_affine_gradient_is_exact(shear_pair):
    field = MapField.affine(shear_pair, 8, 8)
    du = gradient(field)
    assert du.shape == (8, 8, 2, 2)
    assert np.array_equal(du, np.broadcast_to(shear_pair.linear_part, du.shape))
    assert np.array_equal(laplacian(field), np.zeros((8, 8, 2)))


def test_single_mode_gradient(single_mode):
    n, eps = 64, 0.01
    field = single_mode(n, eps)
    x1 = field.grid_points()[..., 0]
    du = gradient(field)
    expected = 1.0 + 2 * np.pi * eps * np.cos(2 * np.pi * x1) * sinc_factor(n)
    np.testing.assert_allclose(du[..., 0, 0], expected, atol=1e-13)
    np.testing.assert_allclose(du[..., 1, 1], 1.0, atol=1e-13)
    np.testing.assert_allclose(du[..., 0, 1], 0.0, atol=1e-13)


def test_gradient_converges_at_second_order(unit_pair):
    def error(n):
        xi = lattice_coordinates(n, n)
        v = np.stack([0.02 * np.sin(2 * np.pi * (xi[..., 0] + 2 * xi[..., 1])),
                      0.01 * np.cos(2 * np.pi * xi[..., 1])], axis=-1)
        du = gradient(MapField(unit_pair, v))
        exact = 0.02 * 2 * np.pi * np.cos(2 * np.pi * (xi[..., 0] + 2 * xi[..., 1]))
        return np.max(np.abs(du[..., 0, 1] - 2 * exact))

    assert error(32) / error(64) >= 3.6


def test_single_mode_laplacian(single_mode):
    n, eps = 64, 0.01
    field = single_mode(n, eps)
    x1 = field.grid_points()[..., 0]
    symbol = 4 * n ** 2 * np.sin(np.pi / n) ** 2
    lap = laplacian(field)
    np.testing.assert_allclose(lap[..., 0], -symbol * eps * np.sin(2 * np.pi * x1), atol=1e-12)
    np.testing.assert_allclose(lap[..., 0], -4 * np.pi ** 2 * eps * np.sin(2 * np.pi * x1),
                               atol=4 * np.pi ** 2 * eps * (2 * np.pi / n) ** 2)


def test_laplacian_sums_to_zero(unit_pair):
    rng = np.random.default_rng(1)
    field = MapField(unit_pair, rng.normal(size=(16, 12, 2)))
    assert np.max(np.abs(np.sum(laplacian(field), axis=(0, 1)))) < 1e-9


def test_skew_lattice_laplacian_includes_cross_term():
    n = 64
    pair = TorusPair(SKEW, Lattice.unit_square(), SKEW.basis)
    xi = lattice_coordinates(n, n)
    phase = 2 * np.pi * (xi[..., 0] + xi[..., 1])
    f = np.sin(phase)
    g = SKEW.metric_inverse
    exact = -4 * np.pi ** 2 * (g[0, 0] + g[1, 1] + 2 * g[0, 1]) * f
    lap = cartesian_laplacian(f, pair.domain)
    np.testing.assert_allclose(lap, exact, atol=0.01 * np.max(np.abs(exact)))


def test_skew_lattice_gradient():
    n = 64
    xi = lattice_coordinates(n, n)
    f = np.sin(2 * np.pi * xi[..., 0])
    grad = cartesian_gradient(f, SKEW)
    expected = 2 * np.pi * np.cos(2 * np.pi * xi[..., 0])[..., None] * SKEW.inverse[0] * sinc_factor(n)
    np.testing.assert_allclose(grad, expected, atol=1e-12)


def test_hessian_is_symmetric(unit_pair):
    rng = np.random.default_rng(2)
    hess = hessian(MapField(unit_pair, rng.normal(size=(8, 8, 2))))
    assert hess.shape == (8, 8, 2, 2, 2)
    np.testing.assert_allclose(hess, np.swapaxes(hess, -1, -2), atol=1e-12)


def test_translation_equivariance(unit_pair):
    rng = np.random.default_rng(3)
    v = rng.normal(size=(10, 10, 2))
    du = gradient(MapField(unit_pair, v))
    shifted = gradient(MapField(unit_pair, np.roll(v, 1, axis=0)))
    np.testing.assert_allclose(shifted, np.roll(du, 1, axis=0), atol=1e-12)


def test_gradient_commutes_with_linear_part(unit_pair, shear_pair):
    rng = np.random.default_rng(4)
    v = rng.normal(size=(8, 8, 2))
    difference = gradient(MapField(shear_pair, v)) - gradient(MapField(unit_pair, v))
    np.testing.assert_allclose(difference, np.broadcast_to(shear_pair.linear_part - np.eye(2), difference.shape),
                               atol=1e-12)


def test_integrate():
    lattice = Lattice.unit_square()
    xi = lattice_coordinates(16, 16)
    assert integrate(np.ones((16, 16)), lattice) == pytest.approx(1.0)
    assert abs(integrate(np.sin(2 * np.pi * xi[..., 0]), lattice)) < 1e-14
    assert integrate(np.ones((4, 4)), SKEW) == pytest.approx(SKEW.area)


def test_map_field_validation(unit_pair):
    with pytest.raises(ValueError):
        MapField(unit_pair, np.zeros((3, 8, 2)))
    with pytest.raises(ValueError):
        MapField(unit_pair, np.zeros((8, 8)))
    field = MapField.affine(unit_pair, 4, 4)
    with pytest.raises(ValueError):
        field.v[0, 0, 0] = 1.0


def test_lift_and_spacing(shear_pair):
    field = MapField(shear_pair, np.full((4, 8, 2), 0.5), time=1.5)
    assert field.spacing() == (pytest.approx(0.25), pytest.approx(0.125))
    lift = field.lift()
    points = field.grid_points()
    np.testing.assert_allclose(lift, points @ shear_pair.linear_part.T + 0.5)
    moved = field.with_displacement(np.zeros((4, 8, 2)), 2.0)
    assert moved.pair is shear_pair
    assert moved.time == 2.0


def test_wrap_angle_range():
    values = np.array([np.pi, -np.pi, 3 * np.pi, 0.1, -7.0])
    wrapped = wrap_angle(values)
    assert np.all(wrapped > -np.pi) and np.all(wrapped <= np.pi)
    np.testing.assert_allclose(np.cos(wrapped), np.cos(values), atol=1e-12)
    assert wrapped[1] == pytest.approx(np.pi)
