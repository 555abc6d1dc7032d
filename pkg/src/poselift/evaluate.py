"""Pose error metrics and their aggregation into reports.

Two protocols are provided: a rigid-aligned error (optimal rotation and
translation via orthogonal Procrustes, no scaling) and a root-centered
error that only removes the root offset.  Reports carry per-frame errors,
summary statistics, optional per-group statistics and a threshold curve.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .camera import RigidTransform
from .errors import DegenerateInputError

CURVE_MAX_MM = 300.0
CURVE_STEP_MM = 10.0


def procrustes_align(
    estimate: np.ndarray, reference: np.ndarray
) -> tuple[RigidTransform, np.ndarray]:
    """Optimal rigid alignment (rotation + translation, no scale) via SVD.

    Finds the proper rotation and translation minimizing the summed squared
    distance from the mapped estimate to the reference; the determinant of
    the rotation is forced to +1 by flipping the weakest singular direction.

    Returns:
        (transform, aligned_estimate).

    Raises:
        DegenerateInputError: the estimate's joints all coincide, leaving
            the rotation unconstrained.
    """
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if est.shape != ref.shape or est.ndim != 2 or est.shape[1] != 3 or len(est) < 3:
        raise ValueError(f"need matching (J>=3, 3) arrays, got {est.shape} vs {ref.shape}")
    est_centroid = est.mean(axis=0)
    ref_centroid = ref.mean(axis=0)
    est_c = est - est_centroid
    ref_c = ref - ref_centroid
    if float(np.abs(est_c).max()) <= 1e-12:
        raise DegenerateInputError("estimate joints coincide; rotation is unconstrained")
    h = est_c.T @ ref_c
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = ref_centroid - rotation @ est_centroid
    transform = RigidTransform(rotation, translation)
    return transform, transform.apply(est)


def pose_error_rigid(estimate: np.ndarray, reference: np.ndarray) -> float:
    """Mean per-joint distance after optimal rigid alignment, in mm."""
    _, aligned = procrustes_align(estimate, reference)
    ref = np.asarray(reference, dtype=float)
    return float(np.sqrt(((aligned - ref) ** 2).sum(axis=1)).mean())


def pose_error_root_centered(
    estimate: np.ndarray, reference: np.ndarray, root_index: int
) -> float:
    """Mean per-joint distance after removing each pose's root offset."""
    est = np.asarray(estimate, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ref.shape}")
    est = est - est[root_index]
    ref = ref - ref[root_index]
    return float(np.sqrt(((est - ref) ** 2).sum(axis=1)).mean())


@dataclass
class EvalReport:
    """Per-frame errors plus aggregate statistics for one evaluation run."""

    protocol: str
    errors: np.ndarray
    mean_mm: float
    median_mm: float
    groups: dict[str, dict[str, float]]
    curve: list[tuple[float, float]]  # (threshold mm, fraction of errors below)
    failed: int = 0

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "frame_count": int(len(self.errors)),
            "failed": self.failed,
            "mean_mm": self.mean_mm,
            "median_mm": self.median_mm,
            "errors_mm": self.errors.tolist(),
            "groups": self.groups,
            "curve": [{"threshold_mm": t, "fraction": f} for t, f in self.curve],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_table(self) -> str:
        """Aligned text table of the summary and per-group statistics."""
        rows = [("group", "count", "mean mm", "median mm")]
        rows.append(
            ("all", str(len(self.errors)), f"{self.mean_mm:.2f}", f"{self.median_mm:.2f}")
        )
        for key in sorted(self.groups):
            g = self.groups[key]
            rows.append(
                (key, str(int(g["count"])), f"{g['mean_mm']:.2f}", f"{g['median_mm']:.2f}")
            )
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
        if self.failed:
            lines.append(f"dropped frames: {self.failed}")
        return "\n".join(lines)


def aggregate(
    errors,
    group_keys=None,
    protocol: str = "rigid-aligned",
    failed: int = 0,
) -> EvalReport:
    """Summarize per-frame errors into an EvalReport.

    Args:
        errors: per-frame errors in mm.
        group_keys: optional per-frame labels (e.g. activity); statistics
            are additionally reported per distinct label.
        failed: count of frames dropped before evaluation (e.g. behind the
            camera); recorded, not averaged.

    The curve samples thresholds 0..300 mm in 10 mm steps; each point is
    the fraction of frames with error strictly below the threshold, so it
    is monotone non-decreasing.
    """
    err = np.asarray(list(errors), dtype=float)
    if err.size == 0:
        raise ValueError("cannot aggregate zero frames")
    if group_keys is not None and len(group_keys) != err.size:
        raise ValueError("group_keys length does not match errors")
    groups: dict[str, dict[str, float]] = {}
    if group_keys is not None:
        for key in sorted(set(group_keys)):
            mask = np.array([k == key for k in group_keys])
            sub = err[mask]
            groups[str(key)] = {
                "count": float(sub.size),
                "mean_mm": float(sub.mean()),
                "median_mm": float(np.median(sub)),
            }
    thresholds = np.arange(0.0, CURVE_MAX_MM + CURVE_STEP_MM / 2, CURVE_STEP_MM)
    curve = [(float(t), float((err < t).mean())) for t in thresholds]
    return EvalReport(
        protocol=protocol,
        errors=err,
        mean_mm=float(err.mean()),
        median_mm=float(np.median(err)),
        groups=groups,
        curve=curve,
        failed=failed,
    )
