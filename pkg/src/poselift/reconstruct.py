"""3D pose reconstruction inside the PCA subspace of retrieved neighbours.

The lifted pose X minimizes E(X) = E_p(X) + alpha * E_r(X), where E_p is
the reprojection norm under a fixed camera (fit first, then held) and E_r
sums full-pose distances to each retrieved neighbour.  X is parameterized
as mean + z @ basis over the principal components of the neighbour cloud,
starting from the centroid (z = 0), so the result always stays inside the
retrieved subspace.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Intrinsics, RigidTransform, _camera_blocks, projection_error
from .errors import DegenerateInputError, EmptyCorpusError
from .optimize import (
    block_gradient,
    block_objective,
    minimize_block_norm_sum,
)

DEFAULT_ALPHA = 1.0
DEFAULT_VARIANCE_THRESHOLD = 0.8
_RANK_CUTOFF = 1e-12  # relative singular-value cutoff
_ZERO_VARIANCE_MM = 1e-9


@dataclass(frozen=True)
class PcaSubspace:
    """Principal components of a neighbour cloud in flattened pose space.

    ``basis`` rows are orthonormal directions (d, 3J); ``mean`` is the cloud
    centroid (3J,).  ``explained_fraction`` is the eigenvalue mass retained.
    """

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray  # all eigenvalues, descending, numerical dust zeroed
    explained_fraction: float

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    def pose(self, z: np.ndarray, joint_count: int) -> np.ndarray:
        """Reconstruct a (J, 3) pose from subspace coordinates."""
        return (self.mean + np.asarray(z, float) @ self.basis).reshape(joint_count, 3)


def fit_pca(neighbors, variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD) -> PcaSubspace:
    """Principal components retaining a cumulative eigenvalue fraction.

    ``d`` is the smallest number of components whose cumulative eigenvalue
    fraction reaches ``variance_threshold``; a threshold of 1.0 keeps the
    full numerical rank of the cloud.

    Raises:
        DegenerateInputError: every neighbour is identical (zero variance).
    """
    pts = np.asarray(
        neighbors.poses if hasattr(neighbors, "poses") else neighbors, dtype=float
    )
    if pts.ndim != 3 or pts.shape[0] == 0:
        raise EmptyCorpusError("PCA needs a non-empty neighbour set")
    if not 0.0 < variance_threshold <= 1.0:
        raise ValueError("variance_threshold must be in (0, 1]")
    k = pts.shape[0]
    flat = pts.reshape(k, -1)
    mean = flat.mean(axis=0)
    centered = flat - mean
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    if singular.size == 0 or singular[0] <= _ZERO_VARIANCE_MM:
        raise DegenerateInputError("neighbour cloud has zero variance")
    singular = singular.copy()
    singular[singular <= singular[0] * _RANK_CUTOFF] = 0.0  # numerical dust
    eigenvalues = singular**2 / k
    fractions = np.cumsum(eigenvalues) / eigenvalues.sum()
    rank = int(np.count_nonzero(singular))
    d = int(np.searchsorted(fractions, variance_threshold - 1e-12) + 1)
    d = min(max(d, 1), rank)
    explained = 1.0 if d == rank else float(fractions[d - 1])
    return PcaSubspace(
        mean=mean,
        basis=vt[:d],
        eigenvalues=eigenvalues,
        explained_fraction=explained,
    )


def retrieval_energy(pose: np.ndarray, neighbor_poses: np.ndarray) -> float:
    """E_r: sum over neighbours of the full-pose distance to ``pose``.

    Each term is sqrt(sum_j ||X_j^k - X_j||^2), a norm over the flattened
    pose, not a squared norm.
    """
    pose = np.asarray(pose, dtype=float)
    pts = np.asarray(
        neighbor_poses.poses if hasattr(neighbor_poses, "poses") else neighbor_poses,
        dtype=float,
    )
    if pts.ndim != 3 or pts.shape[0] == 0:
        raise EmptyCorpusError("retrieval energy needs at least one neighbour")
    if pts.shape[1:] != pose.shape:
        raise ValueError(f"pose {pose.shape} does not match neighbours {pts.shape}")
    diff = (pts - pose).reshape(pts.shape[0], -1)
    return float(np.linalg.norm(diff, axis=1).sum())


@dataclass
class ReconstructionResult:
    """Lifted pose with its energy breakdown and provenance."""

    pose: np.ndarray  # (J, 3) canonical pose space
    camera: RigidTransform
    energy_total: float
    energy_projection: float
    energy_retrieval: float
    alpha: float
    pca_dimension: int
    neighbor_pose_ids: np.ndarray
    neighbor_camera_ids: np.ndarray
    trace: list[float] = field(default_factory=list)  # accepted energies

    def to_dict(self, intrinsics: Intrinsics | None = None) -> dict:
        data = {
            "pose_normalized_mm": self.pose.tolist(),
            "pose_camera_mm": self.camera.apply(self.pose).tolist(),
            "camera": self.camera.to_dict(),
            "energy": {
                "total": self.energy_total,
                "projection": self.energy_projection,
                "retrieval": self.energy_retrieval,
                "alpha": self.alpha,
            },
            "pca_dimension": self.pca_dimension,
            "neighbor_pose_ids": self.neighbor_pose_ids.tolist(),
            "neighbor_camera_ids": self.neighbor_camera_ids.tolist(),
        }
        if intrinsics is not None:
            data["intrinsics"] = intrinsics.to_dict()
        return data


def _subset_coords(joint_indices, joint_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Flattened coordinate indices and joint indices for a joint subset."""
    if joint_indices is None:
        joint_indices = range(joint_count)
    idx = np.asarray(list(joint_indices), dtype=int)
    return (idx[:, None] * 3 + np.arange(3)).reshape(-1), idx


def _energy_blocks(
    z: np.ndarray,
    subspace: PcaSubspace,
    neighbor_flat: np.ndarray,
    target: np.ndarray,
    camera: RigidTransform,
    intrinsics: Intrinsics,
    alpha: float,
    joint_idx: np.ndarray,
    coord_idx: np.ndarray,
    need_jacobian: bool,
):
    flat = subspace.mean + np.asarray(z, float) @ subspace.basis
    joints = flat.reshape(-1, 3)
    proj_group = _camera_blocks(
        camera.rotation,
        camera.translation,
        joints[joint_idx][None],
        target,
        intrinsics,
        need_jacobian,
    )
    r_p, jac_p, _ = proj_group[0]
    if need_jacobian:
        # chain through the subspace: d(px)/dz = d(px)/d(cam pt) @ R @ dX/dz
        a_part = jac_p.reshape(len(joint_idx), 2, 6)[:, :, 3:]  # d(px)/d(cam pt)
        basis_sub = subspace.basis[:, coord_idx].T.reshape(len(joint_idx), 3, -1)
        jac_p = np.einsum(
            "jab,bc,jcd->jad", a_part, camera.rotation, basis_sub
        ).reshape(1, -1, subspace.dimension)
    residual = flat - neighbor_flat  # (K, 3J)
    k = neighbor_flat.shape[0]
    jac_r = None
    if need_jacobian:
        jac_r = np.broadcast_to(subspace.basis.T, (k, flat.size, subspace.dimension))
    return [(r_p, jac_p, 1.0), (residual, jac_r, alpha)]


def energy_objective(
    z: np.ndarray,
    subspace: PcaSubspace,
    neighbors,
    target: np.ndarray,
    camera: RigidTransform,
    intrinsics: Intrinsics,
    alpha: float = DEFAULT_ALPHA,
    target_joint_indices=None,
) -> tuple[float, np.ndarray]:
    """Value and analytic gradient of E(z) = E_p + alpha * E_r.

    Exposed for derivative checking; central finite differences reproduce
    the gradient away from zero-residual kinks.
    """
    pts = np.asarray(
        neighbors.poses if hasattr(neighbors, "poses") else neighbors, dtype=float
    )
    coord_idx, joint_idx = _subset_coords(target_joint_indices, pts.shape[1])
    blocks = _energy_blocks(
        z,
        subspace,
        pts.reshape(pts.shape[0], -1),
        np.asarray(target, float),
        camera,
        intrinsics,
        alpha,
        joint_idx,
        coord_idx,
        True,
    )
    return block_objective(blocks), block_gradient(blocks)


def reconstruct(
    neighbors,
    target: np.ndarray,
    camera: RigidTransform,
    intrinsics: Intrinsics,
    alpha: float = DEFAULT_ALPHA,
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD,
    target_joint_indices=None,
) -> ReconstructionResult:
    """Lift a 2D pose by energy minimization over the neighbour subspace.

    The camera transform stays fixed; only the subspace coordinates move,
    starting from the neighbour centroid.  Accepted optimizer steps never
    increase the energy, so the final energy is at most the centroid's.

    A degenerate neighbour cloud (a single neighbour, or all identical)
    yields the centroid itself with a zero-dimensional subspace.

    Args:
        neighbors: RetrievalResult or (K, J, 3) array of canonical poses.
        target: (n, 2) observed 2D pose in pixels.
        alpha: weight of the retrieval prior term.
        variance_threshold: cumulative eigenvalue fraction kept by the PCA.
        target_joint_indices: 3D joint index for each target row when the
            2D convention covers a subset of the skeleton.
    """
    pts = np.asarray(
        neighbors.poses if hasattr(neighbors, "poses") else neighbors, dtype=float
    )
    if pts.ndim != 3 or pts.shape[0] == 0:
        raise EmptyCorpusError("reconstruction needs at least one neighbour")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    target = np.asarray(target, dtype=float)
    coord_idx, joint_idx = _subset_coords(target_joint_indices, pts.shape[1])
    if target.shape != (len(joint_idx), 2):
        raise ValueError(
            f"target shape {target.shape} does not match {len(joint_idx)} joints"
        )
    k, j, _ = pts.shape
    flat = pts.reshape(k, -1)

    pose_ids = getattr(neighbors, "pose_ids", np.arange(k))
    camera_ids = getattr(neighbors, "camera_ids", np.full(k, -1))

    try:
        subspace = fit_pca(pts, variance_threshold)
    except DegenerateInputError:
        subspace = None  # all neighbours coincide: the centroid is the answer

    if subspace is None:
        pose = flat.mean(axis=0).reshape(j, 3)
        dim = 0
        trace: list[float] = []
    else:
        def residual_fn(z, need_jacobian):
            return _energy_blocks(
                z,
                subspace,
                flat,
                target,
                camera,
                intrinsics,
                alpha,
                joint_idx,
                coord_idx,
                need_jacobian,
            )

        result = minimize_block_norm_sum(
            residual_fn,
            np.zeros(subspace.dimension),
            lambda z, delta: z + delta,
        )
        pose = subspace.pose(result.x, j)
        dim = subspace.dimension
        trace = result.trace

    e_p = projection_error(pose, camera, intrinsics, target, joint_indices=joint_idx)
    e_r = retrieval_energy(pose, pts)
    return ReconstructionResult(
        pose=pose,
        camera=camera,
        energy_total=e_p + alpha * e_r,
        energy_projection=e_p,
        energy_retrieval=e_r,
        alpha=alpha,
        pca_dimension=dim,
        neighbor_pose_ids=np.asarray(pose_ids),
        neighbor_camera_ids=np.asarray(camera_ids),
        trace=trace,
    )
