"""Synthetic corpora, simulated observations, and experiment drivers.

Poses are sampled on a fixed kinematic tree: every limb keeps its
configured length and its direction is drawn uniformly inside a cone
around a rest direction.  Observations render a canonical pose through a
perspective camera (or its orthographic limit) with optional Gaussian
pixel noise.  ``run_experiment`` drives the full pipeline end to end on
such data and reports rigid-aligned errors; everything is seeded, so
identical configs give identical reports.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .camera import Intrinsics, RigidTransform, camera_rotation, estimate_projection, project
from .errors import (
    BehindCameraError,
    DegenerateInputError,
    OptimizationError,
    PoseLiftError,
)
from .evaluate import EvalReport, aggregate, pose_error_rigid
from .index import DEFAULT_DEDUP_MM, DEFAULT_K, build_index, knn
from .normalize import (
    AZIMUTH_COUNT,
    ELEVATION_COUNT,
    VirtualCamera,
    normalize_pose_2d,
    normalize_pose_3d,
)
from .reconstruct import DEFAULT_ALPHA, DEFAULT_VARIANCE_THRESHOLD, reconstruct
from .rotations import rot_z
from .skeleton import SkeletonSpec, default_skeleton_14, default_skeleton_17

# limb tables: (child, parent, rest direction, length mm, swing deg)
_LIMBS = {
    "basic14": (
        ("head", "neck", (0.0, 0.0, 1.0), 220.0, 25.0),
        ("left_shoulder", "neck", (-1.0, 0.0, -0.05), 190.0, 12.0),
        ("left_elbow", "left_shoulder", (-1.0, 0.0, -0.35), 300.0, 55.0),
        ("left_wrist", "left_elbow", (-1.0, 0.0, -0.35), 270.0, 60.0),
        ("right_shoulder", "neck", (1.0, 0.0, -0.05), 190.0, 12.0),
        ("right_elbow", "right_shoulder", (1.0, 0.0, -0.35), 300.0, 55.0),
        ("right_wrist", "right_elbow", (1.0, 0.0, -0.35), 270.0, 60.0),
        ("left_hip", "neck", (-0.32, 0.0, -1.0), 560.0, 9.0),
        ("left_knee", "left_hip", (0.0, 0.0, -1.0), 450.0, 45.0),
        ("left_ankle", "left_knee", (0.0, 0.0, -1.0), 440.0, 45.0),
        ("right_hip", "neck", (0.32, 0.0, -1.0), 560.0, 9.0),
        ("right_knee", "right_hip", (0.0, 0.0, -1.0), 450.0, 45.0),
        ("right_ankle", "right_knee", (0.0, 0.0, -1.0), 440.0, 45.0),
    ),
    "basic17": (
        ("spine", "pelvis", (0.0, 0.0, 1.0), 240.0, 12.0),
        ("thorax", "spine", (0.0, 0.0, 1.0), 240.0, 12.0),
        ("neck", "thorax", (0.0, 0.0, 1.0), 110.0, 15.0),
        ("head", "neck", (0.0, 0.0, 1.0), 180.0, 25.0),
        ("left_shoulder", "thorax", (-1.0, 0.0, 0.0), 190.0, 12.0),
        ("left_elbow", "left_shoulder", (-1.0, 0.0, -0.35), 300.0, 55.0),
        ("left_wrist", "left_elbow", (-1.0, 0.0, -0.35), 270.0, 60.0),
        ("right_shoulder", "thorax", (1.0, 0.0, 0.0), 190.0, 12.0),
        ("right_elbow", "right_shoulder", (1.0, 0.0, -0.35), 300.0, 55.0),
        ("right_wrist", "right_elbow", (1.0, 0.0, -0.35), 270.0, 60.0),
        ("left_hip", "pelvis", (-1.0, 0.0, -0.12), 130.0, 9.0),
        ("left_knee", "left_hip", (0.0, 0.0, -1.0), 450.0, 45.0),
        ("left_ankle", "left_knee", (0.0, 0.0, -1.0), 440.0, 45.0),
        ("right_hip", "pelvis", (1.0, 0.0, -0.12), 130.0, 9.0),
        ("right_knee", "right_hip", (0.0, 0.0, -1.0), 450.0, 45.0),
        ("right_ankle", "right_knee", (0.0, 0.0, -1.0), 440.0, 45.0),
    ),
}

_SKELETONS = {"basic14": default_skeleton_14, "basic17": default_skeleton_17}

# rng stream tags so corpus, test poses, cameras and noise never collide
_STREAM_CORPUS = 0
_STREAM_TEST = 1
_STREAM_CAMERAS = 2
_STREAM_NOISE = 3


@dataclass(frozen=True)
class SynthConfig:
    """Seeded description of a synthetic experiment."""

    seed: int = 0
    corpus_size: int = 200
    frame_count: int = 20
    skeleton_name: str = "basic14"
    limb_scale: float = 1.0
    swing_scale: float = 1.0
    sigma_px: float = 0.0
    true_pose_in_corpus: bool = False
    corpus_copies: int = 1
    observation: str = "perspective"  # or "orthographic"
    camera_distance_mm: float = 4200.0
    focal_px: float = 1100.0
    principal_px: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.skeleton_name not in _LIMBS:
            raise ValueError(f"unknown synthetic skeleton {self.skeleton_name!r}")
        if self.observation not in ("perspective", "orthographic"):
            raise ValueError(f"unknown observation model {self.observation!r}")
        if self.corpus_copies < 1:
            raise ValueError("corpus_copies must be >= 1")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "corpus_size": self.corpus_size,
            "frame_count": self.frame_count,
            "skeleton_name": self.skeleton_name,
            "limb_scale": self.limb_scale,
            "swing_scale": self.swing_scale,
            "sigma_px": self.sigma_px,
            "true_pose_in_corpus": self.true_pose_in_corpus,
            "corpus_copies": self.corpus_copies,
            "observation": self.observation,
            "camera_distance_mm": self.camera_distance_mm,
            "focal_px": self.focal_px,
            "principal_px": list(self.principal_px),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        kwargs = dict(data)
        if "principal_px" in kwargs:
            kwargs["principal_px"] = tuple(float(v) for v in kwargs["principal_px"])
        return cls(**kwargs)


@dataclass(frozen=True)
class PipelineParams:
    """Tunable pipeline knobs; the defaults are the recommended settings."""

    k: int = DEFAULT_K
    alpha: float = DEFAULT_ALPHA
    variance_threshold: float = DEFAULT_VARIANCE_THRESHOLD
    dedup_mm: float = DEFAULT_DEDUP_MM
    use_gt_camera: bool = False

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "alpha": self.alpha,
            "variance_threshold": self.variance_threshold,
            "dedup_mm": self.dedup_mm,
            "use_gt_camera": self.use_gt_camera,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineParams":
        return cls(**data)


def synth_skeleton(name: str) -> SkeletonSpec:
    return _SKELETONS[name]()


def limb_lengths(cfg: SynthConfig) -> dict[str, float]:
    """Configured limb length per child joint, in mm."""
    return {child: length * cfg.limb_scale for child, _, _, length, _ in _LIMBS[cfg.skeleton_name]}


def _cone_direction(rng: np.random.Generator, rest: np.ndarray, swing_rad: float) -> np.ndarray:
    """Uniform-in-angle direction inside a cone around ``rest``."""
    polar = rng.uniform(0.0, swing_rad)
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    helper = np.array([1.0, 0.0, 0.0]) if abs(rest[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(rest, helper)
    u /= np.linalg.norm(u)
    v = np.cross(rest, u)
    return np.cos(polar) * rest + np.sin(polar) * (np.cos(yaw) * u + np.sin(yaw) * v)


def _sample_pose(rng: np.random.Generator, cfg: SynthConfig, skeleton: SkeletonSpec) -> np.ndarray:
    """One raw pose: kinematic sample plus random yaw and translation."""
    positions = np.zeros((skeleton.joint_count, 3))
    for child, parent, rest, length, swing in _LIMBS[cfg.skeleton_name]:
        rest = np.asarray(rest) / np.linalg.norm(rest)
        direction = _cone_direction(rng, rest, np.deg2rad(swing * cfg.swing_scale))
        ci = skeleton.joint_index(child)
        pi = skeleton.joint_index(parent)
        positions[ci] = positions[pi] + direction * (length * cfg.limb_scale)
    yaw = rng.uniform(0.0, 2.0 * np.pi)
    offset = rng.uniform(-1000.0, 1000.0, size=3)
    return positions @ rot_z(yaw).T + offset


def _sample_many(rng, cfg, skeleton, count: int) -> np.ndarray:
    if count == 0:
        return np.empty((0, skeleton.joint_count, 3))
    return np.stack([_sample_pose(rng, cfg, skeleton) for _ in range(count)])


def generate_corpus(cfg: SynthConfig) -> np.ndarray:
    """(corpus_size, J, 3) raw poses; limb lengths match the config exactly."""
    skeleton = synth_skeleton(cfg.skeleton_name)
    rng = np.random.default_rng((cfg.seed, _STREAM_CORPUS))
    return _sample_many(rng, cfg, skeleton, cfg.corpus_size)


def generate_test_poses(cfg: SynthConfig) -> np.ndarray:
    """(frame_count, J, 3) raw poses from an independent stream."""
    skeleton = synth_skeleton(cfg.skeleton_name)
    rng = np.random.default_rng((cfg.seed, _STREAM_TEST))
    return _sample_many(rng, cfg, skeleton, cfg.frame_count)


def render_observation(
    pose: np.ndarray,
    transform: RigidTransform,
    intrinsics: Intrinsics,
    sigma_px: float = 0.0,
    rng: np.random.Generator | None = None,
    observation: str = "perspective",
) -> np.ndarray:
    """Simulate a 2D observation of a canonical pose.

    Perspective mode projects through the intrinsics (raising
    BehindCameraError for joints at depth <= 1 mm); orthographic mode drops
    the camera-frame depth instead, which matches the descriptor rendering
    of the rig viewpoint with the same rotation.  Gaussian pixel noise of
    scale ``sigma_px`` is added when positive.
    """
    if observation == "perspective":
        img = project(transform, intrinsics, pose)
    elif observation == "orthographic":
        img = transform.apply(pose)[:, :2]
    else:
        raise ValueError(f"unknown observation model {observation!r}")
    if sigma_px > 0.0:
        if rng is None:
            raise ValueError("noisy rendering needs an rng")
        img = img + rng.normal(0.0, sigma_px, size=img.shape)
    return img


def normalize_corpus(poses: np.ndarray, skeleton: SkeletonSpec) -> np.ndarray:
    """Normalize every pose of a raw (N, J, 3) corpus to canonical space."""
    root = skeleton.root_index
    lh = skeleton.joint_index("left_hip")
    rh = skeleton.joint_index("right_hip")
    return np.stack([normalize_pose_3d(p, root, lh, rh) for p in poses])


def _frame_cameras(cfg: SynthConfig) -> list[VirtualCamera]:
    """Per-frame rig viewpoints, drawn up front for determinism."""
    rng = np.random.default_rng((cfg.seed, _STREAM_CAMERAS))
    az = rng.integers(0, AZIMUTH_COUNT, size=cfg.frame_count)
    el = rng.integers(0, ELEVATION_COUNT, size=cfg.frame_count)
    return [VirtualCamera(a * 15.0, e * 15.0) for a, e in zip(az.tolist(), el.tolist())]


def run_experiment(cfg: SynthConfig, params: PipelineParams = PipelineParams()) -> EvalReport:
    """Drive the full pipeline on synthetic data and report rigid errors.

    Per frame: render an observation of a fresh test pose, normalize it,
    retrieve k neighbours, estimate the camera (or take the ground-truth
    one), reconstruct, and measure the rigid-aligned error against the
    ground-truth pose.  Frames whose rendering or fit degenerates (e.g.
    joints behind the camera) are dropped and counted.
    """
    skeleton = synth_skeleton(cfg.skeleton_name)
    corpus = normalize_corpus(generate_corpus(cfg), skeleton)
    tests = normalize_corpus(generate_test_poses(cfg), skeleton)
    if cfg.true_pose_in_corpus:
        # test poses go first so deduplication cannot evict them; copies
        # concentrate the retrieval energy on the true pose (dedup must be
        # loosened to 0 for copies > 1 to survive)
        pool = np.concatenate([np.repeat(tests, cfg.corpus_copies, axis=0), corpus])
    else:
        pool = corpus
    index = build_index(pool, skeleton, dedup_threshold_mm=params.dedup_mm)
    intrinsics = Intrinsics(cfg.focal_px, cfg.focal_px, *cfg.principal_px)
    cameras = _frame_cameras(cfg)
    errors = []
    failed = 0
    for f in range(cfg.frame_count):
        truth = tests[f]
        transform = RigidTransform(
            camera_rotation(cameras[f]),
            np.array([0.0, 0.0, cfg.camera_distance_mm]),
        )
        noise_rng = np.random.default_rng((cfg.seed, _STREAM_NOISE, f))
        try:
            observed = render_observation(
                truth, transform, intrinsics, cfg.sigma_px, noise_rng, cfg.observation
            )
            neighbors = knn(index, normalize_pose_2d(observed), params.k)
            if params.use_gt_camera:
                fitted = transform
            else:
                fitted = estimate_projection(neighbors, observed, intrinsics).transform
            result = reconstruct(
                neighbors,
                observed,
                fitted,
                intrinsics,
                alpha=params.alpha,
                variance_threshold=params.variance_threshold,
            )
            errors.append(pose_error_rigid(result.pose, truth))
        except (BehindCameraError, DegenerateInputError, OptimizationError):
            failed += 1
    if not errors:
        raise PoseLiftError("every frame failed; nothing to aggregate")
    return aggregate(errors, protocol="rigid-aligned", failed=failed)


def run_sweep(
    cfg: SynthConfig,
    params: PipelineParams,
    param_name: str,
    values,
) -> list[tuple[float, EvalReport]]:
    """Re-run the experiment for each value of one pipeline parameter."""
    if param_name not in PipelineParams.__dataclass_fields__:
        raise ValueError(f"unknown pipeline parameter {param_name!r}")
    return [
        (value, run_experiment(cfg, replace(params, **{param_name: value})))
        for value in values
    ]
