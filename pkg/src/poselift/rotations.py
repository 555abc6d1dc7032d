"""Rotation-matrix helpers shared by normalization, cameras and synthesis."""
from __future__ import annotations

import numpy as np


def rot_z(angle_rad: float) -> np.ndarray:
    """Rotation about the vertical (z) axis."""
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_x(angle_rad: float) -> np.ndarray:
    """Rotation about the x axis."""
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def axis_angle_matrix(w: np.ndarray) -> np.ndarray:
    """Rodrigues map from an axis-angle 3-vector to a rotation matrix.

    For very small angles a second-order series is used; callers that chain
    many updates should re-orthonormalize (see :func:`orthonormalize`).
    """
    w = np.asarray(w, dtype=float)
    k = np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )
    theta = float(np.linalg.norm(w))
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * (k @ k)
    k /= theta
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def orthonormalize(r: np.ndarray) -> np.ndarray:
    """Project a near-rotation matrix back onto SO(3) (polar factor)."""
    u, _, vt = np.linalg.svd(r)
    if np.linalg.det(u @ vt) < 0.0:
        u = u.copy()
        u[:, -1] *= -1.0
    return u @ vt
