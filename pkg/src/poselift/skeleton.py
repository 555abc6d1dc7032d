"""Skeleton layouts and per-joint affine retargeting between conventions.

Different corpora label bodies differently.  Retargeting learns, per target
joint, an affine map from the flattened source pose; training pairs are
picked by nearest-neighbour matching over the joints the two conventions
share.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    EmptyCorpusError,
    SkeletonMismatchError,
)
from .normalize import mean_joint_distance

DEFAULT_PAIR_THRESHOLD_MM = 20.0
SV_CUTOFF = 1e-10  # relative singular-value cutoff for the affine solve
RETARGET_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SkeletonSpec:
    """Joint naming convention: ordered joint names plus the root joint.

    Attributes:
        name: convention identifier, e.g. ``"basic14"``.
        joints: ordered joint names; order fixes array layouts everywhere.
        root_index: joint used for translation removal.
    """

    name: str
    joints: tuple[str, ...]
    root_index: int

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if len(self.joints) < 2:
            raise ValueError("a skeleton needs at least two joints")
        if len(set(self.joints)) != len(self.joints):
            raise ValueError("joint names must be unique")
        if not 0 <= self.root_index < len(self.joints):
            raise ValueError("root_index out of range")

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    def joint_index(self, name: str) -> int:
        try:
            return self.joints.index(name)
        except ValueError:
            raise ValueError(f"skeleton {self.name!r} has no joint {name!r}") from None

    def subset_indices(self, names) -> tuple[int, ...]:
        """Indices of the given joint names, in the order given."""
        return tuple(self.joint_index(n) for n in names)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "joints": list(self.joints),
            "root_index": self.root_index,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SkeletonSpec":
        return cls(data["name"], tuple(data["joints"]), int(data["root_index"]))


JOINTS_14 = (
    "head",
    "neck",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_hip",
    "right_knee",
    "right_ankle",
)

JOINTS_17 = (
    "pelvis",
    "spine",
    "thorax",
    "neck",
    "head",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_hip",
    "right_knee",
    "right_ankle",
)


def default_skeleton_14() -> SkeletonSpec:
    """14-joint layout: head, neck and left/right limbs; neck is the root."""
    return SkeletonSpec("basic14", JOINTS_14, root_index=JOINTS_14.index("neck"))


def default_skeleton_17() -> SkeletonSpec:
    """17-joint layout with pelvis root, torso chain and left/right limbs."""
    return SkeletonSpec("basic17", JOINTS_17, root_index=JOINTS_17.index("pelvis"))


@dataclass(frozen=True)
class RetargetModel:
    """Per-target-joint affine maps from a flattened source pose.

    ``weights[t]`` is the (3, 3 * J_src) coefficient matrix of target joint
    ``t`` and ``bias[t]`` its offset; both are in millimetres.
    """

    source_skeleton: str
    target_skeleton: str
    source_joint_count: int
    target_joint_count: int
    weights: np.ndarray
    bias: np.ndarray
    pair_count: int
    residual_rms_mm: float

    def to_json(self) -> str:
        payload = {
            "format_version": RETARGET_FORMAT_VERSION,
            "source_skeleton": self.source_skeleton,
            "target_skeleton": self.target_skeleton,
            "source_joint_count": self.source_joint_count,
            "target_joint_count": self.target_joint_count,
            # row-major per target joint: 3 rows of 3 * J_src coefficients
            "weights": self.weights.reshape(self.target_joint_count, -1).tolist(),
            "bias": self.bias.tolist(),
            "pair_count": self.pair_count,
            "residual_rms_mm": self.residual_rms_mm,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RetargetModel":
        data = json.loads(text)
        version = data.get("format_version")
        if version != RETARGET_FORMAT_VERSION:
            raise ValueError(f"unsupported retarget model version: {version!r}")
        j_src = int(data["source_joint_count"])
        j_tgt = int(data["target_joint_count"])
        weights = np.asarray(data["weights"], dtype=float).reshape(j_tgt, 3, 3 * j_src)
        bias = np.asarray(data["bias"], dtype=float)
        if bias.shape != (j_tgt, 3):
            raise ValueError(f"bias has shape {bias.shape}, expected {(j_tgt, 3)}")
        return cls(
            source_skeleton=data["source_skeleton"],
            target_skeleton=data["target_skeleton"],
            source_joint_count=j_src,
            target_joint_count=j_tgt,
            weights=weights,
            bias=bias,
            pair_count=int(data["pair_count"]),
            residual_rms_mm=float(data["residual_rms_mm"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RetargetModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def select_pairs(
    source_poses,
    target_poses,
    correspondence: tuple,
    threshold_mm: float = DEFAULT_PAIR_THRESHOLD_MM,
) -> list[tuple[int, int]]:
    """Match each source pose to its nearest target pose over shared joints.

    Args:
        source_poses: (N, J_src, 3) canonical poses.
        target_poses: (M, J_tgt, 3) canonical poses.
        correspondence: pair of index sequences (source side, target side)
            naming the shared joints, same length and order.
        threshold_mm: pairs are kept only when the mean per-joint distance
            over the shared joints is strictly below this value, so 0 keeps
            nothing.

    Returns:
        (source index, target index) pairs in source corpus order.
    """
    src = np.asarray(source_poses, dtype=float)
    tgt = np.asarray(target_poses, dtype=float)
    if src.ndim != 3 or src.size == 0 or tgt.ndim != 3 or tgt.size == 0:
        raise EmptyCorpusError("both corpora must contain poses")
    src_idx, tgt_idx = correspondence
    src_idx = tuple(int(i) for i in src_idx)
    tgt_idx = tuple(int(i) for i in tgt_idx)
    if len(src_idx) != len(tgt_idx) or not src_idx:
        raise SkeletonMismatchError("correspondence sides differ in length")
    if max(src_idx) >= src.shape[1] or max(tgt_idx) >= tgt.shape[1]:
        raise SkeletonMismatchError("correspondence index out of range")
    src_common = src[:, src_idx, :]
    tgt_common = tgt[:, tgt_idx, :]
    pairs: list[tuple[int, int]] = []
    for i in range(src_common.shape[0]):
        diff = tgt_common - src_common[i]
        dist = np.sqrt((diff**2).sum(axis=2)).mean(axis=1)
        j = int(np.argmin(dist))  # ties resolve to the lowest target index
        if float(dist[j]) < threshold_mm:
            pairs.append((i, j))
    return pairs


def fit_retarget(
    source_poses,
    target_poses,
    source_skeleton: SkeletonSpec,
    target_skeleton: SkeletonSpec,
) -> RetargetModel:
    """Least-squares fit of per-target-joint affine maps on matched pairs.

    Needs at least ``3 * J_src + 1`` pairs (one more than the parameter
    count per output coordinate).  Canonical source poses are always rank
    deficient (root pinned at the origin, heading fixed), so deficiency is
    handled by the singular-value cutoff; DegenerateInputError is raised
    only when the deficiency comes from too few distinct pairs.
    """
    src = np.asarray(source_poses, dtype=float)
    tgt = np.asarray(target_poses, dtype=float)
    if src.ndim != 3 or tgt.ndim != 3 or src.shape[0] != tgt.shape[0]:
        raise SkeletonMismatchError("paired corpora must have equal length")
    n = src.shape[0]
    j_src = src.shape[1]
    j_tgt = tgt.shape[1]
    if src.shape[1] != source_skeleton.joint_count:
        raise SkeletonMismatchError("source poses do not match source skeleton")
    if tgt.shape[1] != target_skeleton.joint_count:
        raise SkeletonMismatchError("target poses do not match target skeleton")
    n_params = 3 * j_src + 1
    if n < n_params:
        raise ValueError(f"need at least {n_params} pairs, got {n}")
    phi = np.hstack([src.reshape(n, -1), np.ones((n, 1))])
    y = tgt.reshape(n, -1)
    solution, _, rank, _ = np.linalg.lstsq(phi, y, rcond=SV_CUTOFF)
    if rank < n_params:
        # canonical poses null a few directions for every pose alike, which
        # the minimum-norm solve handles; deficiency is fatal only when the
        # pairs themselves repeat
        distinct = np.unique(phi, axis=0).shape[0]
        if distinct < n_params:
            raise DegenerateInputError(
                f"design matrix rank {rank} with {distinct} distinct pairs"
                f" cannot determine {n_params} parameters;"
                " training pairs are degenerate"
            )
    residual = phi @ solution - y
    rms = float(np.sqrt((residual**2).mean()))
    # column 3 * t + c of the solution holds coordinate c of target joint t
    coef = solution[:-1].T.reshape(j_tgt, 3, 3 * j_src)
    bias = solution[-1].reshape(j_tgt, 3)
    return RetargetModel(
        source_skeleton=source_skeleton.name,
        target_skeleton=target_skeleton.name,
        source_joint_count=j_src,
        target_joint_count=j_tgt,
        weights=coef,
        bias=bias,
        pair_count=n,
        residual_rms_mm=rms,
    )


def apply_retarget(model: RetargetModel, pose) -> np.ndarray:
    """Map one source pose through a fitted retarget model."""
    pts = np.asarray(pose, dtype=float)
    if pts.shape != (model.source_joint_count, 3):
        raise SkeletonMismatchError(
            f"pose has shape {pts.shape}, model expects ({model.source_joint_count}, 3)"
        )
    flat = pts.reshape(-1)
    return np.einsum("tcs,s->tc", model.weights, flat) + model.bias


# re-exported for callers that think in terms of pose-space distances
pose_distance_mm = mean_joint_distance
