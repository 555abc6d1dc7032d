"""Command-line surface for the pose lifting pipeline.

Exit codes: 0 success, 2 usage error, 1 file error, 3 pipeline error.
Failures print a single machine-readable JSON line to stderr. Outputs
contain no timestamps, so a rerun with the same inputs is byte-identical.
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .camera import RigidTransform, estimate_projection, load_intrinsics
from .errors import (
    BehindCameraError,
    DegenerateInputError,
    OptimizationError,
    PoseFileError,
    PoseLiftError,
)
from .evaluate import aggregate, pose_error_rigid, pose_error_root_centered
from .index import DEFAULT_DEDUP_MM, DEFAULT_K, build_index, knn, load_index, save_index
from .normalize import default_camera_rig, normalize_pose_2d, rig_from_json
from .pose_io import read_pose_file
from .reconstruct import DEFAULT_ALPHA, DEFAULT_VARIANCE_THRESHOLD, reconstruct
from .skeleton import fit_retarget, select_pairs
from .synth import PipelineParams, SynthConfig, normalize_corpus, run_experiment, run_sweep

_FRAME_ERRORS = (BehindCameraError, DegenerateInputError, OptimizationError)


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True))
        fh.write("\n")


def _read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise PoseFileError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None


def _require_dims(data, dims: int, path, command: str) -> None:
    if data.dims != dims:
        raise ValueError(f"{command} needs a {dims}D pose file, {path} is {data.dims}D")


def cmd_build_index(args) -> int:
    data = read_pose_file(args.poses)
    _require_dims(data, 3, args.poses, "build-index")
    poses = data.poses
    if args.normalize:
        poses = normalize_corpus(poses, data.skeleton)
    rig = default_camera_rig() if args.rig is None else rig_from_json(_read_json(args.rig))
    index = build_index(poses, data.skeleton, rig=rig, dedup_threshold_mm=args.dedup_mm)
    save_index(index, args.output)
    print(
        f"indexed {index.pose_count} poses x {index.camera_count} views"
        f" = {index.descriptor_count} descriptors -> {args.output}"
    )
    return 0


def cmd_query(args) -> int:
    index = load_index(args.index)
    data = read_pose_file(args.poses)
    _require_dims(data, 2, args.poses, "query")
    frames = []
    for i in range(data.frame_count):
        result = knn(index, normalize_pose_2d(data.poses[i]), args.k)
        frames.append(
            {
                "frame": i,
                "pose_ids": result.pose_ids.tolist(),
                "camera_ids": result.camera_ids.tolist(),
                "distances": result.distances.tolist(),
            }
        )
    payload = {
        "k": args.k,
        "index": {
            "pose_count": index.pose_count,
            "camera_count": index.camera_count,
            "descriptor_count": index.descriptor_count,
        },
        "frames": frames,
    }
    _write_json(args.output, payload)
    print(f"queried {data.frame_count} frames -> {args.output}")
    return 0


def _load_gt_cameras(path, frame_count: int) -> list[RigidTransform]:
    raw = _read_json(path)
    if isinstance(raw, dict):
        return [RigidTransform.from_dict(raw)] * frame_count
    if len(raw) != frame_count:
        raise ValueError(
            f"{path} lists {len(raw)} cameras for {frame_count} frames"
        )
    return [RigidTransform.from_dict(entry) for entry in raw]


def cmd_reconstruct(args) -> int:
    index = load_index(args.index)
    data = read_pose_file(args.poses)
    _require_dims(data, 2, args.poses, "reconstruct")
    intrinsics = load_intrinsics(args.intrinsics)
    gt_cameras = None
    if args.gt_camera is not None:
        gt_cameras = _load_gt_cameras(args.gt_camera, data.frame_count)
    frames = []
    for i in range(data.frame_count):
        observed = data.poses[i]
        try:
            neighbors = knn(index, normalize_pose_2d(observed), args.k)
            if gt_cameras is not None:
                camera = gt_cameras[i]
            else:
                camera = estimate_projection(neighbors, observed, intrinsics).transform
            result = reconstruct(
                neighbors,
                observed,
                camera,
                intrinsics,
                alpha=args.alpha,
                variance_threshold=args.pca_var,
            )
            frames.append({"frame": i, **result.to_dict()})
        except _FRAME_ERRORS as exc:
            frames.append(
                {"frame": i, "error": {"type": type(exc).__name__, "message": str(exc)}}
            )
    payload = {
        "parameters": {
            "k": args.k,
            "alpha": args.alpha,
            "variance_threshold": args.pca_var,
            "gt_camera": args.gt_camera is not None,
        },
        "intrinsics": intrinsics.to_dict(),
        "skeleton": index.skeleton.to_dict(),
        "frames": frames,
    }
    _write_json(args.output, payload)
    done = sum(1 for f in frames if "error" not in f)
    print(f"reconstructed {done}/{data.frame_count} frames -> {args.output}")
    return 0


def cmd_evaluate(args) -> int:
    results = _read_json(args.results)
    truth = read_pose_file(args.truth)
    _require_dims(truth, 3, args.truth, "evaluate")
    frames = results.get("frames")
    if not isinstance(frames, list) or not frames:
        raise PoseFileError(f"{args.results}: no frames to evaluate")
    group_values = None
    if args.group_by is not None:
        if args.group_by not in truth.labels:
            raise ValueError(f"{args.truth} has no label column {args.group_by!r}")
        group_values = truth.labels[args.group_by]
    errors = []
    groups = [] if group_values is not None else None
    failed = 0
    for entry in frames:
        if "error" in entry:
            failed += 1
            continue
        i = int(entry["frame"])
        if not 0 <= i < truth.frame_count:
            raise ValueError(f"result frame {i} out of range for {truth.frame_count} GT frames")
        est = np.asarray(entry["pose_normalized_mm"], dtype=float)
        ref = truth.poses[i]
        if args.protocol == "rigid":
            errors.append(pose_error_rigid(est, ref))
        else:
            errors.append(pose_error_root_centered(est, ref, truth.skeleton.root_index))
        if groups is not None:
            groups.append(group_values[i])
    protocol = "rigid-aligned" if args.protocol == "rigid" else "root-centered"
    report = aggregate(errors, group_keys=groups, protocol=protocol, failed=failed)
    if args.output is not None:
        _write_json(args.output, report.to_dict())
    print(report.format_table())
    return 0


def cmd_retarget(args) -> int:
    source = read_pose_file(args.source)
    target = read_pose_file(args.target)
    _require_dims(source, 3, args.source, "retarget")
    _require_dims(target, 3, args.target, "retarget")
    shared = [n for n in source.skeleton.joints if n in target.skeleton.joints]
    if not shared:
        raise ValueError("source and target skeletons share no joint names")
    correspondence = (
        source.skeleton.subset_indices(shared),
        target.skeleton.subset_indices(shared),
    )
    pairs = select_pairs(source.poses, target.poses, correspondence, args.pair_mm)
    if not pairs:
        raise DegenerateInputError(
            f"no frame pairs within {args.pair_mm} mm over {len(shared)} shared joints"
        )
    src_idx = [i for i, _ in pairs]
    tgt_idx = [j for _, j in pairs]
    model = fit_retarget(
        source.poses[src_idx], target.poses[tgt_idx], source.skeleton, target.skeleton
    )
    model.save(args.output)
    print(
        f"fitted on {model.pair_count} pairs, residual rms"
        f" {model.residual_rms_mm:.3f} mm -> {args.output}"
    )
    return 0


def cmd_synth(args) -> int:
    raw = _read_json(args.config)
    if not isinstance(raw, dict) or "synth" not in raw:
        raise PoseFileError(f"{args.config}: config must be an object with a 'synth' section")
    cfg = SynthConfig.from_dict(raw["synth"])
    params = PipelineParams.from_dict(raw.get("pipeline", {}))
    sweep = raw.get("sweep")
    payload: dict = {"config": cfg.to_dict(), "pipeline": params.to_dict()}
    if sweep is None:
        report = run_experiment(cfg, params)
        payload["report"] = report.to_dict()
        print(report.format_table())
    else:
        points = run_sweep(cfg, params, sweep["param"], sweep["values"])
        payload["sweep"] = {
            "param": sweep["param"],
            "points": [
                {"value": value, "report": report.to_dict()} for value, report in points
            ],
        }
        for value, report in points:
            print(f"== {sweep['param']} = {value}")
            print(report.format_table())
    if args.output is not None:
        _write_json(args.output, payload)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poselift",
        description="Example-based 3D human pose lifting from single 2D poses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-index", help="index a 3D pose corpus for retrieval")
    p.add_argument("poses", help="3D pose file (CSV with JSON sidecar)")
    p.add_argument("-o", "--output", required=True, help="index file to write")
    p.add_argument(
        "--dedup-mm",
        type=float,
        default=DEFAULT_DEDUP_MM,
        help="drop corpus poses closer than this mean per-joint distance (default: %(default)s)",
    )
    p.add_argument(
        "--rig",
        default=None,
        help="virtual camera rig JSON (default: 144-view grid, 24 azimuths x 6 elevations)",
    )
    p.add_argument(
        "--normalize",
        action="store_true",
        help="normalize raw poses (root-center, remove yaw) before indexing",
    )
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("query", help="retrieve nearest corpus descriptors for 2D poses")
    p.add_argument("index", help="index file from build-index")
    p.add_argument("poses", help="2D pose file")
    p.add_argument("-o", "--output", required=True, help="neighbor dump JSON to write")
    p.add_argument(
        "--k",
        type=int,
        default=DEFAULT_K,
        help="number of nearest neighbors (default: %(default)s)",
    )
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("reconstruct", help="lift 2D poses to 3D against an index")
    p.add_argument("index", help="index file from build-index")
    p.add_argument("poses", help="2D pose file in pixels")
    p.add_argument("intrinsics", help="camera intrinsics JSON (fx, fy, cx, cy)")
    p.add_argument("-o", "--output", required=True, help="result JSON to write")
    p.add_argument(
        "--k",
        type=int,
        default=DEFAULT_K,
        help="number of nearest neighbors (default: %(default)s)",
    )
    p.add_argument(
        "--alpha",
        type=float,
        default=DEFAULT_ALPHA,
        help="weight of the retrieval prior energy (default: %(default)s)",
    )
    p.add_argument(
        "--pca-var",
        type=float,
        default=DEFAULT_VARIANCE_THRESHOLD,
        help="variance fraction kept by the neighbor subspace (default: %(default)s)",
    )
    p.add_argument(
        "--gt-camera",
        default=None,
        help="extrinsics JSON (object, or per-frame list); skips camera estimation",
    )
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="score reconstructions against ground truth")
    p.add_argument("results", help="result JSON from reconstruct")
    p.add_argument("truth", help="ground-truth 3D pose file")
    p.add_argument("-o", "--output", default=None, help="report JSON to write")
    p.add_argument(
        "--protocol",
        choices=("rigid", "root"),
        default="rigid",
        help="rigid: Procrustes-aligned error; root: root-centered error (default: %(default)s)",
    )
    p.add_argument(
        "--group-by",
        default=None,
        help="label column of the ground-truth file to group statistics by",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("retarget", help="fit a skeleton retarget model from two corpora")
    p.add_argument("source", help="source 3D pose file")
    p.add_argument("target", help="target 3D pose file")
    p.add_argument("-o", "--output", required=True, help="retarget model JSON to write")
    p.add_argument(
        "--pair-mm",
        type=float,
        default=20.0,
        help="pair frames whose shared joints agree within this mean distance (default: %(default)s)",
    )
    p.set_defaults(func=cmd_retarget)

    p = sub.add_parser("synth", help="run a seeded synthetic end-to-end experiment")
    p.add_argument("config", help="experiment config JSON ('synth', optional 'pipeline'/'sweep')")
    p.add_argument("-o", "--output", default=None, help="report JSON to write")
    p.set_defaults(func=cmd_synth)

    return parser


def _fail(exc: BaseException, code: int) -> int:
    line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
    print(line, file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits itself on usage errors and --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (PoseFileError, OSError) as exc:
        return _fail(exc, 1)
    except (ValueError, KeyError, TypeError) as exc:
        return _fail(exc, 2)
    except PoseLiftError as exc:
        return _fail(exc, 3)


def run() -> None:
    raise SystemExit(main())
