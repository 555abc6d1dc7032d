"""Retrieval index: deduplicated 3D corpus plus kd-tree over 2D descriptors.

Building an index renders every kept pose through every rig camera,
normalizes the renderings and stacks them into a descriptor matrix in
pose-major order (descriptor ``p * C + c`` belongs to pose ``p`` seen from
camera ``c``), so ascending descriptor id is exactly the (pose id,
camera id) tie-break order.

Indexes persist to a single file: magic + JSON header followed by raw
little-endian float64 / uint32 blocks, including the kd-tree structure, so
a round trip is bit exact and never rebuilds the tree.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, EmptyCorpusError, SkeletonMismatchError
from .kdtree import DescriptorKdTree
from .normalize import (
    VirtualCamera,
    default_camera_rig,
    normalize_pose_2d,
    rig_from_json,
    rig_to_json,
)
from .rotations import rot_x, rot_z
from .skeleton import SkeletonSpec

DEFAULT_K = 256
DEFAULT_DEDUP_MM = 20.0

FILE_MAGIC = b"PLIF"
FILE_VERSION = 1
_NODE_STRUCT = np.dtype(
    [("dim", "<u4"), ("threshold", "<f8"), ("a", "<u4"), ("b", "<u4")]
)


@dataclass(frozen=True)
class RetrievalResult:
    """K nearest corpus entries for one query descriptor, ascending by distance."""

    poses: np.ndarray  # (K, J, 3) canonical 3D poses
    pose_ids: np.ndarray  # (K,)
    camera_ids: np.ndarray  # (K,)
    distances: np.ndarray  # (K,) mean per-joint descriptor distances
    rig: tuple[VirtualCamera, ...]

    def __len__(self) -> int:
        return len(self.pose_ids)


@dataclass(frozen=True)
class PoseIndex:
    """Searchable corpus: canonical poses, their descriptors and the kd-tree."""

    skeleton: SkeletonSpec
    rig: tuple[VirtualCamera, ...]
    dedup_threshold_mm: float
    descriptor_joints: tuple[int, ...]  # joints rendered into descriptors
    poses: np.ndarray  # (P, J, 3)
    descriptors: np.ndarray  # (P * C, 2 * len(descriptor_joints))
    tree: DescriptorKdTree

    @property
    def pose_count(self) -> int:
        return self.poses.shape[0]

    @property
    def camera_count(self) -> int:
        return len(self.rig)

    @property
    def descriptor_count(self) -> int:
        return self.descriptors.shape[0]

    def back_ref(self, descriptor_id: int) -> tuple[int, int]:
        """Map a descriptor id back to (pose id, camera id)."""
        return divmod(int(descriptor_id), self.camera_count)


def dedup(poses, threshold_mm: float = DEFAULT_DEDUP_MM) -> np.ndarray:
    """Greedy in-order deduplication of a pose list.

    A pose is kept iff its mean per-joint distance to every already kept
    pose is at least ``threshold_mm``; the first pose is always kept and
    threshold 0 keeps everything.  Input order is preserved.
    """
    arr = np.asarray(poses, dtype=float)
    if arr.ndim != 3:
        raise ValueError(f"expected (N, J, 3) poses, got {arr.shape}")
    if threshold_mm < 0:
        raise ValueError("threshold_mm must be >= 0")
    kept = np.empty_like(arr)
    n_kept = 0
    for pose in arr:
        if n_kept:
            diff = kept[:n_kept] - pose
            dist = np.sqrt((diff**2).sum(axis=2)).mean(axis=1)
            if float(dist.min()) < threshold_mm:  # strictly closer: duplicate
                continue
        kept[n_kept] = pose
        n_kept += 1
    return kept[:n_kept].copy()


def _batch_descriptors(
    poses: np.ndarray, rig, descriptor_joints: tuple[int, ...]
) -> np.ndarray:
    """Render + normalize all poses through all cameras, pose-major order.

    Runs the exact scalar arithmetic of project_orthographic followed by
    normalize_pose_2d per (pose, camera), with only the rotation matrix
    hoisted out of the pose loop, so database descriptors are bit-identical
    to what a query built from the same rendering would produce.
    """
    p, _, _ = poses.shape
    c = len(rig)
    j = len(descriptor_joints)
    sub = poses[:, descriptor_joints, :]
    out = np.empty((p * c, 2 * j))
    for ci, cam in enumerate(rig):
        r = rot_x(np.deg2rad(cam.elevation_deg)) @ rot_z(np.deg2rad(cam.azimuth_deg))
        rt = r.T
        for pi in range(p):
            rotated = sub[pi] @ rt
            img = np.stack([rotated[:, 0], -rotated[:, 2]], axis=1)
            try:
                out[pi * c + ci] = normalize_pose_2d(img).reshape(-1)
            except DegenerateInputError:
                raise DegenerateInputError(
                    f"pose {pi} has no vertical extent from camera {ci}"
                ) from None
    return out


def build_index(
    poses,
    skeleton: SkeletonSpec,
    rig: tuple[VirtualCamera, ...] | None = None,
    dedup_threshold_mm: float = DEFAULT_DEDUP_MM,
    descriptor_joint_names=None,
) -> PoseIndex:
    """Deduplicate canonical poses and index their virtual-camera descriptors.

    Args:
        poses: (N, J, 3) canonical 3D poses (root at origin, hips along +x).
        skeleton: joint convention of the poses.
        rig: virtual cameras; defaults to the 144-view grid.
        dedup_threshold_mm: near-duplicate removal threshold.
        descriptor_joint_names: optional joint subset rendered into the
            descriptors; pass the shared 14 names when indexing a larger
            skeleton that will be queried with 14-joint 2D poses.  Stored
            poses always keep every joint.
    """
    arr = np.asarray(poses, dtype=float)
    if arr.ndim != 3 or arr.shape[0] == 0:
        raise EmptyCorpusError("cannot build an index from an empty corpus")
    if arr.shape[1] != skeleton.joint_count or arr.shape[2] != 3:
        raise SkeletonMismatchError(
            f"poses {arr.shape} do not match skeleton {skeleton.name!r}"
        )
    if rig is None:
        rig = default_camera_rig()
    rig = tuple(rig)
    if not rig:
        raise ValueError("rig must contain at least one camera")
    if descriptor_joint_names is None:
        descriptor_joints = tuple(range(skeleton.joint_count))
    else:
        descriptor_joints = skeleton.subset_indices(descriptor_joint_names)
    kept = dedup(arr, dedup_threshold_mm)
    if kept.shape[0] == 0:
        raise EmptyCorpusError("deduplication removed every pose")
    descriptors = _batch_descriptors(kept, rig, descriptor_joints)
    tree = DescriptorKdTree(descriptors, n_joints=len(descriptor_joints))
    return PoseIndex(
        skeleton=skeleton,
        rig=rig,
        dedup_threshold_mm=float(dedup_threshold_mm),
        descriptor_joints=descriptor_joints,
        poses=kept,
        descriptors=descriptors,
        tree=tree,
    )


def knn(index: PoseIndex, query: np.ndarray, k: int = DEFAULT_K) -> RetrievalResult:
    """Exact k nearest corpus descriptors for one normalized 2D pose.

    ``k`` is clamped to the descriptor count.  Ties in distance are broken
    by ascending (pose id, camera id).
    """
    q = np.asarray(query, dtype=float)
    n_desc_joints = len(index.descriptor_joints)
    if q.shape != (n_desc_joints, 2):
        raise SkeletonMismatchError(
            f"query has shape {q.shape}, index descriptors use {n_desc_joints} joints"
        )
    if k < 1:
        raise ValueError("k must be >= 1")
    distances, ids = index.tree.query(q.reshape(-1), k)
    pose_ids = ids // index.camera_count
    camera_ids = ids % index.camera_count
    return RetrievalResult(
        poses=index.poses[pose_ids],
        pose_ids=pose_ids,
        camera_ids=camera_ids,
        distances=distances,
        rig=index.rig,
    )


def save_index(index: PoseIndex, path) -> None:
    """Write an index as magic + JSON header + raw little-endian blocks."""
    poses = np.ascontiguousarray(index.poses, dtype="<f8")
    descriptors = np.ascontiguousarray(index.descriptors, dtype="<f8")
    tree = index.tree
    nodes = np.empty(tree.node_count, dtype=_NODE_STRUCT)
    nodes["dim"] = tree.dims
    nodes["threshold"] = tree.thresholds
    nodes["a"] = tree.child_a
    nodes["b"] = tree.child_b
    perm = np.ascontiguousarray(tree.perm, dtype="<u4")

    blocks = [
        ("poses", poses.tobytes()),
        ("descriptors", descriptors.tobytes()),
        ("tree_nodes", nodes.tobytes()),
        ("tree_perm", perm.tobytes()),
    ]
    offsets = {}
    cursor = 0
    for name, payload in blocks:
        offsets[name] = {"offset": cursor, "size": len(payload)}
        cursor += len(payload)
    header = {
        "version": FILE_VERSION,
        "skeleton": index.skeleton.to_dict(),
        "rig": rig_to_json(index.rig),
        "dedup_threshold_mm": index.dedup_threshold_mm,
        "descriptor_joints": list(index.descriptor_joints),
        "pose_count": index.pose_count,
        "camera_count": index.camera_count,
        "descriptor_count": index.descriptor_count,
        "descriptor_dim": int(index.descriptors.shape[1]),
        "node_count": int(tree.node_count),
        "blocks": offsets,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(FILE_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for _, payload in blocks:
            fh.write(payload)


def load_index(path) -> PoseIndex:
    """Read an index written by :func:`save_index` without rebuilding the tree."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FILE_MAGIC:
            raise ValueError(f"not a pose index file: bad magic {magic!r}")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode())
        if header["version"] != FILE_VERSION:
            raise ValueError(f"unsupported index version {header['version']!r}")
        body = fh.read()

    def block(name: str) -> bytes:
        meta = header["blocks"][name]
        return body[meta["offset"] : meta["offset"] + meta["size"]]

    skeleton = SkeletonSpec.from_dict(header["skeleton"])
    rig = rig_from_json(header["rig"])
    p = header["pose_count"]
    d = header["descriptor_count"]
    dim = header["descriptor_dim"]
    joints = tuple(int(i) for i in header["descriptor_joints"])
    poses = np.frombuffer(block("poses"), dtype="<f8").reshape(
        p, skeleton.joint_count, 3
    ).copy()
    descriptors = np.frombuffer(block("descriptors"), dtype="<f8").reshape(d, dim).copy()
    nodes = np.frombuffer(block("tree_nodes"), dtype=_NODE_STRUCT)
    perm = np.frombuffer(block("tree_perm"), dtype="<u4").copy()
    tree = DescriptorKdTree.from_arrays(
        descriptors,
        len(joints),
        nodes["dim"].astype(np.uint32),
        nodes["threshold"].astype(np.float64),
        nodes["a"].astype(np.uint32),
        nodes["b"].astype(np.uint32),
        perm,
    )
    return PoseIndex(
        skeleton=skeleton,
        rig=rig,
        dedup_threshold_mm=float(header["dedup_threshold_mm"]),
        descriptor_joints=joints,
        poses=poses,
        descriptors=descriptors,
        tree=tree,
    )
