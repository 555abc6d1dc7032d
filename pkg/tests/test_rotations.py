import numpy as np
import pytest

from poselift.rotations import axis_angle_matrix, orthonormalize, rot_x, rot_z


def rodrigues_reference(w):
    """Independent axis-angle oracle: explicit Rodrigues formula."""
    theta = np.linalg.norm(w)
    if theta == 0.0:
        return np.eye(3)
    k = w / theta
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * kx + (1 - np.cos(theta)) * (kx @ kx)


def test_rot_z_quarter_turn():
    r = rot_z(np.pi / 2)
    np.testing.assert_allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(r @ [0, 1, 0], [-1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(r @ [0, 0, 1], [0, 0, 1], atol=1e-15)


def test_rot_x_quarter_turn():
    r = rot_x(np.pi / 2)
    np.testing.assert_allclose(r @ [0, 1, 0], [0, 0, 1], atol=1e-15)
    np.testing.assert_allclose(r @ [1, 0, 0], [1, 0, 0], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_axis_angle_matches_rodrigues(seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=3) * rng.uniform(0.01, 3.0)
    np.testing.assert_allclose(axis_angle_matrix(w), rodrigues_reference(w), atol=1e-12)


def test_axis_angle_small_angle_series():
    w = np.array([1e-10, -2e-10, 5e-11])
    r = axis_angle_matrix(w)
    # first order: I + [w]x
    expected = np.eye(3) + np.array(
        [[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]]
    )
    np.testing.assert_allclose(r, expected, atol=1e-18)
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-15)


def test_axis_angle_zero_is_identity():
    np.testing.assert_array_equal(axis_angle_matrix(np.zeros(3)), np.eye(3))


def test_orthonormalize_restores_rotation():
    rng = np.random.default_rng(3)
    r = axis_angle_matrix(rng.normal(size=3))
    noisy = r + rng.normal(scale=1e-8, size=(3, 3))
    fixed = orthonormalize(noisy)
    np.testing.assert_allclose(fixed @ fixed.T, np.eye(3), atol=1e-14)
    assert np.linalg.det(fixed) > 0
    np.testing.assert_allclose(fixed, r, atol=1e-7)


def test_orthonormalize_idempotent_on_rotations():
    r = rot_z(0.7) @ rot_x(-0.3)
    np.testing.assert_allclose(orthonormalize(r), r, atol=1e-15)
