"""Perspective camera model and estimation of the pose-to-image transform.

A projection is a rigid map from canonical pose space into the camera frame
(camera looks along +z, image y points down) followed by pinhole intrinsics.
``estimate_projection`` fits the six rigid parameters by minimizing the sum
of per-neighbour reprojection norms: each retrieved 3D pose contributes
sqrt(sum_j ||proj(X_j) - x_j||^2) to the objective.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, DegenerateInputError, EmptyCorpusError
from .normalize import VirtualCamera
from .optimize import (
    OptResult,
    block_gradient,
    block_objective,
    minimize_block_norm_sum,
)
from .rotations import axis_angle_matrix, orthonormalize, rot_x, rot_z

MIN_DEPTH_MM = 1.0
MAX_CAMERA_STARTS = 3

# maps pose axes (x right, y depth, z up) to camera axes (x right, y down, z depth)
_POSE_TO_CAMERA = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels: u = fx * x / z + cx, v = fy * y / z + cy."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}

    @classmethod
    def from_dict(cls, data: dict) -> "Intrinsics":
        return cls(
            float(data["fx"]), float(data["fy"]), float(data["cx"]), float(data["cy"])
        )


def load_intrinsics(path) -> Intrinsics:
    with open(path, "r", encoding="utf-8") as fh:
        return Intrinsics.from_dict(json.load(fh))


@dataclass(frozen=True)
class RigidTransform:
    """Rotation plus translation mapping pose space into the camera frame."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,) in mm

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation has shape {r.shape}, expected (3, 3)")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-6 or np.linalg.det(r) < 0.0:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Rigidly map (..., 3) points into the camera frame."""
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),  # row-major
            "translation_mm": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RigidTransform":
        return cls(
            np.asarray(data["rotation"], dtype=float),
            np.asarray(data["translation_mm"], dtype=float),
        )


def camera_rotation(camera: VirtualCamera) -> np.ndarray:
    """Rotation aligning a rig viewpoint with the perspective camera frame.

    A perspective camera using this rotation and a translation straight down
    its optical axis sees the pose from the same direction as the rig view,
    so orthographic renderings converge to its image as distance grows.
    """
    return _POSE_TO_CAMERA @ (
        rot_x(np.deg2rad(camera.elevation_deg)) @ rot_z(np.deg2rad(camera.azimuth_deg))
    )


def project(
    transform: RigidTransform, intrinsics: Intrinsics, points: np.ndarray
) -> np.ndarray:
    """Perspective-project (..., 3) pose-space points to (..., 2) pixels.

    Raises:
        BehindCameraError: any point has camera depth <= 1 mm.
    """
    cam = transform.apply(points)
    z = cam[..., 2]
    if np.any(z <= MIN_DEPTH_MM):
        raise BehindCameraError("a joint is on or behind the camera plane")
    u = intrinsics.fx * cam[..., 0] / z + intrinsics.cx
    v = intrinsics.fy * cam[..., 1] / z + intrinsics.cy
    return np.stack([u, v], axis=-1)


def projection_error(
    pose: np.ndarray,
    transform: RigidTransform,
    intrinsics: Intrinsics,
    target: np.ndarray,
    joint_indices=None,
) -> float:
    """Reprojection norm sqrt(sum_j ||proj(X_j) - x_j||^2) in pixels."""
    pts = np.asarray(pose, dtype=float)
    if joint_indices is not None:
        pts = pts[list(joint_indices)]
    projected = project(transform, intrinsics, pts)
    return float(np.sqrt(((projected - np.asarray(target, float)) ** 2).sum()))


def _skew_stack(v: np.ndarray) -> np.ndarray:
    """Cross-product matrices for an array of (..., 3) vectors."""
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def _camera_blocks(
    rotation: np.ndarray,
    translation: np.ndarray,
    neighbor_pts: np.ndarray,
    target: np.ndarray,
    intrinsics: Intrinsics,
    need_jacobian: bool,
):
    """Per-neighbour reprojection residual blocks and local Jacobians.

    The local frame is (omega, dt): an axis-angle increment composed on the
    left of the current rotation plus a translation step.
    """
    rotated = neighbor_pts @ rotation.T  # (K, J, 3), before translation
    cam = rotated + translation
    z = cam[..., 2]
    if np.any(z <= MIN_DEPTH_MM):
        raise BehindCameraError("a joint is on or behind the camera plane")
    u = intrinsics.fx * cam[..., 0] / z + intrinsics.cx
    v = intrinsics.fy * cam[..., 1] / z + intrinsics.cy
    residuals = np.stack([u, v], axis=-1) - target  # (K, J, 2)
    k, j, _ = residuals.shape
    if not need_jacobian:
        return [(residuals.reshape(k, -1), None, 1.0)]
    # d(pixel)/d(camera point)
    a = np.zeros((k, j, 2, 3))
    a[..., 0, 0] = intrinsics.fx / z
    a[..., 0, 2] = -intrinsics.fx * cam[..., 0] / z**2
    a[..., 1, 1] = intrinsics.fy / z
    a[..., 1, 2] = -intrinsics.fy * cam[..., 1] / z**2
    # d(camera point)/d(omega, dt) at the current rotation: [-[Rx]_x | I]
    dpdtheta = np.empty((k, j, 3, 6))
    dpdtheta[..., :3] = -_skew_stack(rotated)
    dpdtheta[..., 3:] = np.eye(3)
    jac = np.einsum("kjab,kjbf->kjaf", a, dpdtheta)  # (K, J, 2, 6)
    return [(residuals.reshape(k, -1), jac.reshape(k, -1, 6), 1.0)]


def projection_objective(
    neighbor_poses: np.ndarray,
    target: np.ndarray,
    intrinsics: Intrinsics,
    transform: RigidTransform,
    joint_indices=None,
) -> tuple[float, np.ndarray]:
    """Value and analytic gradient of the camera-fit objective.

    The gradient is with respect to the local (omega, dt) parameters at
    ``transform``; finite differences through :func:`retract_transform`
    should reproduce it away from zero-residual singularities.
    """
    pts = _neighbor_array(neighbor_poses, joint_indices)
    blocks = _camera_blocks(
        transform.rotation,
        transform.translation,
        pts,
        np.asarray(target, dtype=float),
        intrinsics,
        True,
    )
    return block_objective(blocks), block_gradient(blocks)


def retract_transform(transform: RigidTransform, delta: np.ndarray) -> RigidTransform:
    """Apply a local (omega, dt) step; the rotation is re-orthonormalized."""
    delta = np.asarray(delta, dtype=float).reshape(6)
    rotation = orthonormalize(axis_angle_matrix(delta[:3]) @ transform.rotation)
    return RigidTransform(rotation, transform.translation + delta[3:])


@dataclass
class CameraFit:
    """Result of :func:`estimate_projection`."""

    transform: RigidTransform
    objective: float  # summed reprojection norms at the fitted transform
    trace: list[float]  # accepted objective values of the winning start
    start_camera_id: int | None  # rig camera seeding the winning start


def _neighbor_array(neighbor_poses, joint_indices) -> np.ndarray:
    pts = np.asarray(
        neighbor_poses.poses if hasattr(neighbor_poses, "poses") else neighbor_poses,
        dtype=float,
    )
    if pts.ndim == 2:
        pts = pts[None]
    if pts.ndim != 3 or pts.shape[0] == 0:
        raise EmptyCorpusError("camera estimation needs at least one neighbour pose")
    if joint_indices is not None:
        pts = pts[:, list(joint_indices), :]
    return pts


def _initial_depth(
    rotation: np.ndarray,
    neighbor_pts: np.ndarray,
    target: np.ndarray,
    intrinsics: Intrinsics,
) -> float:
    """Depth that reprojects the first neighbour to the target's y extent."""
    h_px = float(target[:, 1].max() - target[:, 1].min())
    if h_px <= 1e-9:
        raise DegenerateInputError("target 2D pose has no vertical extent")
    first = neighbor_pts[0] @ rotation.T
    h_cam = float(first[:, 1].max() - first[:, 1].min())
    if h_cam <= 1e-9:
        raise DegenerateInputError("neighbour pose collapses along the image vertical")
    z0 = intrinsics.fy * h_cam / h_px
    # keep every neighbour joint strictly in front of the camera
    min_depth = float((neighbor_pts @ rotation.T)[..., 2].min())
    return max(z0, MIN_DEPTH_MM + 1.0 - min_depth)


def estimate_projection(
    neighbors,
    target: np.ndarray,
    intrinsics: Intrinsics,
    init: RigidTransform | None = None,
    joint_indices=None,
) -> CameraFit:
    """Fit the rigid pose-to-camera transform against retrieved neighbours.

    Without an explicit ``init`` the fit is restarted from the viewpoints of
    the top neighbours' rig cameras (up to three distinct ones): the rig
    orientation seeds the rotation and the translation starts at (0, 0, z0)
    with z0 matching the first neighbour's vertical extent to the target's.
    The best final objective wins.  With ``init`` given, only that single
    start is used.

    Args:
        neighbors: RetrievalResult, or a raw (K, J, 3) pose array when
            ``init`` is provided.
        target: (J, 2) observed 2D pose in pixels.
        joint_indices: optional map from target rows to neighbour joints
            when the 2D convention covers a subset of the 3D one.

    Returns:
        CameraFit; its objective never exceeds the objective at its start.
    """
    pts = _neighbor_array(neighbors, joint_indices)
    target = np.asarray(target, dtype=float)
    if target.shape != (pts.shape[1], 2):
        raise ValueError(
            f"target shape {target.shape} does not match neighbour joints {pts.shape[1]}"
        )

    starts: list[tuple[RigidTransform, int | None]] = []
    if init is not None:
        starts.append((init, None))
    else:
        if not hasattr(neighbors, "camera_ids"):
            raise ValueError("multi-start needs a RetrievalResult; pass init= otherwise")
        seen: list[int] = []
        for cam_id in neighbors.camera_ids.tolist():
            if cam_id not in seen:
                seen.append(cam_id)
            if len(seen) == MAX_CAMERA_STARTS:
                break
        for cam_id in seen:
            rotation = camera_rotation(neighbors.rig[cam_id])
            z0 = _initial_depth(rotation, pts, target, intrinsics)
            starts.append(
                (RigidTransform(rotation, np.array([0.0, 0.0, z0])), cam_id)
            )

    def residual_fn(state: RigidTransform, need_jacobian: bool):
        return _camera_blocks(
            state.rotation, state.translation, pts, target, intrinsics, need_jacobian
        )

    best: OptResult | None = None
    best_start: int | None = None
    failures: list[Exception] = []
    for start, cam_id in starts:
        try:
            result = minimize_block_norm_sum(residual_fn, start, retract_transform)
        except BehindCameraError as exc:
            failures.append(exc)
            continue
        if best is None or result.objective < best.objective:
            best = result
            best_start = cam_id
    if best is None:
        raise BehindCameraError(
            f"every initialization was infeasible: {failures[-1] if failures else 'no starts'}"
        )
    return CameraFit(
        transform=best.x,
        objective=best.objective,
        trace=best.trace,
        start_camera_id=best_start,
    )
