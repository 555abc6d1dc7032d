"""Pose file persistence: CSV frames with a JSON sidecar header.

A pose file is a pair of files. ``<path>`` holds one CSV row per frame
(frame index, optional label columns, then ``<joint>_x,<joint>_y[,_z]``
coordinates in skeleton joint order). ``<path>.json`` holds the metadata:
format version, skeleton, dimensionality, units, frame count, and label
column names. Floats are written with ``repr`` so a write/read cycle is
lossless and rewriting a canonical file reproduces it byte for byte.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import PoseFileError, SkeletonMismatchError
from .skeleton import SkeletonSpec

FORMAT_VERSION = 1
_AXES = ("x", "y", "z")


@dataclass(frozen=True)
class PoseFile:
    """Parsed pose file: frames plus the metadata needed to interpret them."""

    poses: np.ndarray  # (N, J, dims) float64
    skeleton: SkeletonSpec
    units: str  # "mm" for 3D files, typically "px" for 2D
    labels: dict[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def dims(self) -> int:
        return self.poses.shape[2]

    @property
    def frame_count(self) -> int:
        return self.poses.shape[0]


def _sidecar(path) -> str:
    return f"{path}.json"


def _header_row(skeleton: SkeletonSpec, dims: int, label_names) -> list[str]:
    cols = ["frame", *label_names]
    for joint in skeleton.joints:
        cols.extend(f"{joint}_{axis}" for axis in _AXES[:dims])
    return cols


def write_pose_file(path, poses, skeleton: SkeletonSpec, units: str | None = None, labels=None) -> None:
    """Write frames and their sidecar header.

    Args:
        poses: (N, J, 2) or (N, J, 3) array; J must match the skeleton.
        units: coordinate units; defaults to "mm" for 3D and "px" for 2D.
            3D files must be millimeters.
        labels: optional mapping of label column name to per-frame string
            values (e.g. activity, subject). Columns are written sorted by
            name, which is the canonical order.
    """
    pts = np.asarray(poses, dtype=float)
    if pts.ndim != 3 or pts.shape[2] not in (2, 3):
        raise ValueError(f"poses must be (N, J, 2|3), got {pts.shape}")
    if pts.shape[1] != skeleton.joint_count:
        raise SkeletonMismatchError(
            f"poses have {pts.shape[1]} joints, skeleton {skeleton.name!r} has {skeleton.joint_count}"
        )
    dims = pts.shape[2]
    if units is None:
        units = "mm" if dims == 3 else "px"
    if dims == 3 and units != "mm":
        raise PoseFileError(f"3D pose files must use units 'mm', got {units!r}")
    labels = {str(k): [str(v) for v in vals] for k, vals in (labels or {}).items()}
    for name, values in labels.items():
        if len(values) != pts.shape[0]:
            raise ValueError(f"label column {name!r} has {len(values)} values for {pts.shape[0]} frames")
    label_names = sorted(labels)
    meta = {
        "version": FORMAT_VERSION,
        "skeleton": skeleton.to_dict(),
        "dims": dims,
        "units": units,
        "frame_count": int(pts.shape[0]),
        "labels": label_names,
    }
    with open(_sidecar(path), "w", encoding="utf-8") as fh:
        fh.write(json.dumps(meta, indent=2, sort_keys=True))
        fh.write("\n")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_header_row(skeleton, dims, label_names))
        for i in range(pts.shape[0]):
            row = [str(i)]
            row.extend(labels[name][i] for name in label_names)
            row.extend(repr(float(v)) for v in pts[i].reshape(-1))
            writer.writerow(row)


def _load_meta(path) -> dict:
    sidecar = _sidecar(path)
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise PoseFileError(f"{sidecar}: sidecar header not found") from None
    except json.JSONDecodeError as exc:
        raise PoseFileError(f"{sidecar}:{exc.lineno}: invalid JSON header: {exc.msg}") from None
    for key in ("version", "skeleton", "dims", "frame_count"):
        if key not in meta:
            raise PoseFileError(f"{sidecar}: missing header field {key!r}")
    if meta["version"] != FORMAT_VERSION:
        raise PoseFileError(f"{sidecar}: unsupported format version {meta['version']!r}")
    if meta["dims"] not in (2, 3):
        raise PoseFileError(f"{sidecar}: dims must be 2 or 3, got {meta['dims']!r}")
    if meta["dims"] == 3 and meta.get("units") != "mm":
        raise PoseFileError(f"{sidecar}: 3D pose files must declare units 'mm'")
    return meta


def read_pose_file(path) -> PoseFile:
    """Parse a pose file, validating it against its sidecar header.

    Raises PoseFileError with ``path:line`` context for malformed content
    (a truncated row names the frame index) and SkeletonMismatchError when
    the CSV columns disagree with the sidecar skeleton.
    """
    meta = _load_meta(path)
    try:
        skeleton = SkeletonSpec.from_dict(meta["skeleton"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PoseFileError(f"{_sidecar(path)}: bad skeleton: {exc}") from None
    dims = int(meta["dims"])
    frame_count = int(meta["frame_count"])
    label_names = [str(n) for n in meta.get("labels", [])]
    expected = _header_row(skeleton, dims, label_names)
    width = len(expected)
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except FileNotFoundError:
        raise PoseFileError(f"{path}: pose file not found") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise PoseFileError(f"{path}:1: empty file, expected a header row")
        if header != expected:
            if header[: 1 + len(label_names)] == expected[: 1 + len(label_names)]:
                raise SkeletonMismatchError(
                    f"{path}:1: coordinate columns do not match skeleton {skeleton.name!r}"
                )
            raise PoseFileError(f"{path}:1: bad header row")
        frames = np.empty((frame_count, skeleton.joint_count, dims), dtype=float)
        labels: dict[str, list[str]] = {name: [] for name in label_names}
        count = 0
        for row in reader:
            line = reader.line_num
            if count >= frame_count:
                raise PoseFileError(f"{path}:{line}: more rows than header frame_count {frame_count}")
            if len(row) != width:
                raise PoseFileError(
                    f"{path}:{line}: frame {count}: expected {width} columns, got {len(row)}"
                )
            if row[0] != str(count):
                raise PoseFileError(f"{path}:{line}: expected frame index {count}, got {row[0]!r}")
            for li, name in enumerate(label_names):
                labels[name].append(row[1 + li])
            try:
                values = np.array([float(v) for v in row[1 + len(label_names):]])
            except ValueError as exc:
                raise PoseFileError(f"{path}:{line}: frame {count}: {exc}") from None
            frames[count] = values.reshape(skeleton.joint_count, dims)
            count += 1
    if count != frame_count:
        raise PoseFileError(f"{path}: header declares {frame_count} frames, file has {count}")
    return PoseFile(
        poses=frames,
        skeleton=skeleton,
        units=str(meta.get("units", "px")),
        labels={name: tuple(vals) for name, vals in labels.items()},
    )
