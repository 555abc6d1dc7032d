"""Example-based 3D human pose lifting from single 2D poses.

The pipeline: normalize a 3D MoCap corpus, render each pose through a
virtual camera rig into normalized 2D descriptors, index them in a kd-tree;
at runtime, retrieve the nearest descriptors for an observed 2D pose,
fit the camera against the retrieved poses, then minimize a projection
plus retrieval-prior energy over their principal subspace.
"""
from .camera import (
    CameraFit,
    Intrinsics,
    RigidTransform,
    camera_rotation,
    estimate_projection,
    load_intrinsics,
    project,
    projection_error,
    projection_objective,
    retract_transform,
)
from .errors import (
    BehindCameraError,
    DegenerateInputError,
    EmptyCorpusError,
    OptimizationError,
    PoseFileError,
    PoseLiftError,
    SkeletonMismatchError,
)
from .evaluate import (
    EvalReport,
    aggregate,
    pose_error_rigid,
    pose_error_root_centered,
    procrustes_align,
)
from .index import (
    DEFAULT_DEDUP_MM,
    DEFAULT_K,
    PoseIndex,
    RetrievalResult,
    build_index,
    dedup,
    knn,
    load_index,
    save_index,
)
from .normalize import (
    VirtualCamera,
    default_camera_rig,
    descriptor_distance,
    mean_joint_distance,
    normalize_pose_2d,
    normalize_pose_3d,
    project_orthographic,
    rig_from_json,
    rig_to_json,
)
from .pose_io import PoseFile, read_pose_file, write_pose_file
from .reconstruct import (
    DEFAULT_ALPHA,
    DEFAULT_VARIANCE_THRESHOLD,
    PcaSubspace,
    ReconstructionResult,
    energy_objective,
    fit_pca,
    reconstruct,
    retrieval_energy,
)
from .skeleton import (
    RetargetModel,
    SkeletonSpec,
    apply_retarget,
    default_skeleton_14,
    default_skeleton_17,
    fit_retarget,
    select_pairs,
)
from .synth import (
    PipelineParams,
    SynthConfig,
    generate_corpus,
    generate_test_poses,
    limb_lengths,
    normalize_corpus,
    render_observation,
    run_experiment,
    run_sweep,
    synth_skeleton,
)

__version__ = "0.1.0"

__all__ = [
    "BehindCameraError",
    "CameraFit",
    "DegenerateInputError",
    "DEFAULT_ALPHA",
    "DEFAULT_DEDUP_MM",
    "DEFAULT_K",
    "DEFAULT_VARIANCE_THRESHOLD",
    "EmptyCorpusError",
    "EvalReport",
    "Intrinsics",
    "OptimizationError",
    "PcaSubspace",
    "PipelineParams",
    "PoseFile",
    "PoseFileError",
    "PoseIndex",
    "PoseLiftError",
    "ReconstructionResult",
    "RetargetModel",
    "RetrievalResult",
    "RigidTransform",
    "SkeletonMismatchError",
    "SkeletonSpec",
    "SynthConfig",
    "VirtualCamera",
    "aggregate",
    "apply_retarget",
    "build_index",
    "camera_rotation",
    "dedup",
    "default_camera_rig",
    "default_skeleton_14",
    "default_skeleton_17",
    "descriptor_distance",
    "energy_objective",
    "estimate_projection",
    "fit_pca",
    "fit_retarget",
    "generate_corpus",
    "generate_test_poses",
    "knn",
    "limb_lengths",
    "load_index",
    "load_intrinsics",
    "mean_joint_distance",
    "rig_from_json",
    "rig_to_json",
    "normalize_corpus",
    "normalize_pose_2d",
    "normalize_pose_3d",
    "pose_error_rigid",
    "pose_error_root_centered",
    "procrustes_align",
    "project",
    "project_orthographic",
    "projection_error",
    "projection_objective",
    "retract_transform",
    "read_pose_file",
    "reconstruct",
    "render_observation",
    "retrieval_energy",
    "run_experiment",
    "run_sweep",
    "save_index",
    "select_pairs",
    "synth_skeleton",
    "write_pose_file",
]
