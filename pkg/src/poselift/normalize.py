"""Pose normalization and the virtual-camera descriptor space.

3D poses are canonicalized by moving the root joint to the origin and
rotating about the vertical (z) axis until the horizontal component of the
left-hip to right-hip vector points along +x.  Canonical poses are rendered
through a fixed grid of orthographic virtual cameras, and each rendering is
recentred and rescaled so its joint y-coordinates span exactly [-1, 1].
Those rescaled 2D joint sets are the retrieval descriptors; their distance
is the mean per-joint Euclidean distance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, SkeletonMismatchError
from .rotations import rot_x, rot_z

AZIMUTH_STEP_DEG = 15.0
ELEVATION_STEP_DEG = 15.0
AZIMUTH_COUNT = 24
ELEVATION_COUNT = 6  # elevations 0..75 deg; including 90 would not give 144 views

MIN_HIP_SEPARATION_MM = 1e-6
MIN_Y_EXTENT = 1e-9


@dataclass(frozen=True)
class VirtualCamera:
    """One orthographic viewpoint of the database rig."""

    azimuth_deg: float
    elevation_deg: float


def default_camera_rig() -> tuple[VirtualCamera, ...]:
    """The 144-view rig: azimuths 0..345 and elevations 0..75, 15 deg steps."""
    return tuple(
        VirtualCamera(az * AZIMUTH_STEP_DEG, el * ELEVATION_STEP_DEG)
        for az in range(AZIMUTH_COUNT)
        for el in range(ELEVATION_COUNT)
    )


def rig_to_json(rig: tuple[VirtualCamera, ...]) -> list[dict[str, float]]:
    """JSON-friendly dump of a camera rig for inspection and persistence."""
    return [
        {"azimuth_deg": cam.azimuth_deg, "elevation_deg": cam.elevation_deg}
        for cam in rig
    ]


def rig_from_json(data) -> tuple[VirtualCamera, ...]:
    return tuple(
        VirtualCamera(float(d["azimuth_deg"]), float(d["elevation_deg"])) for d in data
    )


def normalize_pose_3d(
    joints: np.ndarray, root_index: int, left_hip: int, right_hip: int
) -> np.ndarray:
    """Canonicalize a 3D pose: root at the origin, hip line along +x.

    Args:
        joints: (J, 3) joint positions in millimetres, z up.
        root_index: joint subtracted out to remove translation.
        left_hip / right_hip: joints defining the heading; after
            canonicalization the horizontal part of left->right points
            along +x.

    Returns:
        (J, 3) canonical pose.  Pairwise distances are preserved and the
        root lands exactly on (0, 0, 0).

    Raises:
        DegenerateInputError: the hip line has no horizontal component, so
            the heading is undefined.
    """
    pts = np.asarray(joints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (J, 3) joints, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("joints contain non-finite values")
    if left_hip == right_hip:
        raise DegenerateInputError("left and right hip indices coincide")
    centered = pts - pts[root_index]
    hip = centered[right_hip] - centered[left_hip]
    flat = float(np.hypot(hip[0], hip[1]))
    if flat <= MIN_HIP_SEPARATION_MM:
        raise DegenerateInputError(
            "hip line is vertical within tolerance; heading is undefined"
        )
    # Rotate by -atan2 so the horizontal hip component lands on +x exactly.
    theta = float(np.arctan2(hip[1], hip[0]))
    return centered @ rot_z(-theta).T


def project_orthographic(joints: np.ndarray, camera: VirtualCamera) -> np.ndarray:
    """Orthographic rendering of a canonical pose from one rig viewpoint.

    The pose is rotated by the camera azimuth about the vertical axis, then
    by its elevation about the resulting horizontal (x) axis; the depth (y)
    coordinate is dropped.  Image y points opposite world z, so a standing
    pose renders upright: at azimuth 0, elevation 0 the output is
    (x_world, -z_world).
    """
    pts = np.asarray(joints, dtype=float)
    r = rot_x(np.deg2rad(camera.elevation_deg)) @ rot_z(np.deg2rad(camera.azimuth_deg))
    rotated = pts @ r.T
    return np.stack([rotated[:, 0], -rotated[:, 2]], axis=1)


def normalize_pose_2d(joints: np.ndarray) -> np.ndarray:
    """Map a 2D pose to the descriptor frame: y spans exactly [-1, 1].

    The pose is translated so the x centroid and the y mid-range sit at the
    origin, then scaled by 2 / (y_max - y_min).  x keeps the same scale, so
    the map is a similarity transform and is idempotent.

    Raises:
        DegenerateInputError: vertical extent is zero within tolerance.
    """
    pts = np.asarray(joints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (J, 2) joints, got {pts.shape}")
    y = pts[:, 1]
    extent = float(y.max() - y.min())
    if extent <= MIN_Y_EXTENT:
        raise DegenerateInputError("2D pose has no vertical extent")
    center = np.array([pts[:, 0].mean(), (y.max() + y.min()) / 2.0])
    return (pts - center) * (2.0 / extent)


def mean_joint_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean per-joint Euclidean distance between two joint sets."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise SkeletonMismatchError(f"joint sets differ in shape: {a.shape} vs {b.shape}")
    return float(np.sqrt(((a - b) ** 2).sum(axis=1)).mean())


def descriptor_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Distance between two normalized 2D poses (mean per-joint Euclidean)."""
    return mean_joint_distance(a, b)
