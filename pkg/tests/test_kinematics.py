import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kinematics import (FLOW_HEAT, FLOW_PAPER, DegenerateJacobianError, PointKinematics, determinant,
                        diffusion_coefficient, diffusion_denominator, diffusion_field, flow_coefficient,
                        frobenius_norm, induced_metric, normalize_flow_kind, polar_decompose, polar_fields,
                        singular_values, svd2)

entries = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False, allow_infinity=False)
matrices = arrays(np.float64, (2, 2), elements=entries)


def rotation(angle):
    return np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])


def test_singular_values_of_diagonal():
    lambda1, lambda2 = singular_values(np.diag([3.0, 2.0]))
    assert lambda1 == pytest.approx(2.0)
    assert lambda2 == pytest.approx(3.0)


def test_singular_values_ignore_rotations():
    du = rotation(0.4) @ np.diag([0.5, 1.5]) @ rotation(-1.1)
    lambda1, lambda2 = singular_values(du)
    assert lambda1 == pytest.approx(0.5)
    assert lambda2 == pytest.approx(1.5)


@given(matrices)
def test_singular_value_invariants(du):
    lambda1, lambda2 = singular_values(du)
    assert 0.0 <= lambda1 <= lambda2 + 1e-12
    assert lambda1 * lambda2 == pytest.approx(abs(np.linalg.det(du)), abs=1e-9)
    assert lambda1 ** 2 + lambda2 ** 2 == pytest.approx(np.sum(du ** 2), abs=1e-9)


@given(matrices)
def test_singular_frames(du):
    lambda1, lambda2, e, v = svd2(du)
    np.testing.assert_allclose(e.T @ e, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(v.T @ v, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(du @ e[:, 0], lambda1 * v[:, 0], atol=1e-9)
    np.testing.assert_allclose(du @ e[:, 1], lambda2 * v[:, 1], atol=1e-9)


def test_svd_broadcasts_over_grids():
    rng = np.random.default_rng(0)
    du = rng.normal(size=(5, 4, 2, 2))
    lambda1, lambda2 = singular_values(du)
    assert lambda1.shape == (5, 4)
    expected = np.linalg.svd(du, compute_uv=False)
    np.testing.assert_allclose(lambda1, expected[..., 1], atol=1e-12)
    np.testing.assert_allclose(lambda2, expected[..., 0], atol=1e-12)


def test_polar_decompose_of_conformal_matrix():
    r, theta = polar_decompose(1.5 * rotation(0.7))
    assert r == pytest.approx(3.0)
    assert theta == pytest.approx(0.7)


def test_polar_decompose_identity():
    assert polar_decompose(np.eye(2)) == (pytest.approx(2.0), pytest.approx(0.0))


def test_polar_angle_at_pi():
    r, theta = polar_decompose(-np.eye(2))
    assert r == pytest.approx(2.0)
    assert theta == pytest.approx(np.pi)


def test_anticonformal_matrix_is_polar_degenerate():
    reflection = np.diag([1.0, -1.0])
    with pytest.raises(DegenerateJacobianError):
        polar_decompose(reflection)
    r, theta = polar_fields(reflection)
    assert r == 0.0
    assert np.isnan(theta)


@given(matrices)
def test_diffusion_coefficient_is_inverse_square_of_r(du):
    r, _ = polar_fields(du)
    if r < 1e-3:
        return
    assert diffusion_field(du) * r ** 2 == pytest.approx(1.0)


@given(matrices)
def test_denominator_is_squared_singular_sum(du):
    if np.linalg.det(du) <= 0:
        return
    lambda1, lambda2 = singular_values(du)
    assert diffusion_denominator(du) == pytest.approx((lambda1 + lambda2) ** 2, abs=1e-9)


def test_diffusion_coefficient_on_identity():
    assert diffusion_coefficient(np.eye(2)) == pytest.approx(0.25)


def test_diffusion_coefficient_degenerate():
    with pytest.raises(DegenerateJacobianError):
        diffusion_coefficient(np.zeros((2, 2)))
    assert diffusion_field(np.zeros((3, 2, 2))).tolist() == [np.inf] * 3


def test_induced_metric_and_determinant():
    du = np.array([[1.0, 2.0], [0.5, 3.0]])
    np.testing.assert_allclose(induced_metric(du), du.T @ du)
    assert determinant(du) == pytest.approx(2.0)
    assert frobenius_norm(du) == pytest.approx(np.sqrt(14.25))


def test_flow_kinds():
    assert normalize_flow_kind("paper") == FLOW_PAPER
    assert normalize_flow_kind("HMHF") == FLOW_HEAT
    assert normalize_flow_kind("harmonic-heat-flow") == FLOW_HEAT
    with pytest.raises(ValueError):
        normalize_flow_kind("ricci")

    du = np.broadcast_to(2.0 * np.eye(2), (3, 4, 2, 2))
    np.testing.assert_allclose(flow_coefficient(du, FLOW_PAPER), np.full((3, 4), 1.0 / 16.0))
    np.testing.assert_allclose(flow_coefficient(du, FLOW_HEAT), np.ones((3, 4)))
    with pytest.raises(ValueError):
        flow_coefficient(du, "ricci")


def test_point_kinematics():
    point = PointKinematics(np.diag([1.0, 2.0]))
    assert point.lambda1 == pytest.approx(1.0)
    assert point.lambda2 == pytest.approx(2.0)
    assert point.r == pytest.approx(3.0)
    assert point.F == pytest.approx(1.0 / 9.0)
    assert point.orientation_preserving
    assert point.to_dict()['h'] == [[1.0, 0.0], [0.0, 4.0]]

    assert not PointKinematics(np.diag([1.0, -2.0])).orientation_preserving
    with pytest.raises(ValueError):
        PointKinematics(np.eye(3))
