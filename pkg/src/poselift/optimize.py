"""Damped least squares for objectives that sum residual-block norms.

Both pipeline fits minimize F(x) = sum_b c_b * ||r_b(x)||, a sum of block
norms rather than squared norms.  Each outer iteration freezes the
iteratively-reweighted-least-squares weights w_b = c_b / max(||r_b||, eps)
and takes a Levenberg-Marquardt style damped Gauss-Newton step on the
weighted squared surrogate, which has the same gradient as F at the current
point.  Steps are accepted only when the true objective decreases, so the
accepted-energy trace is monotone and the final objective never exceeds
the initial one.

Blocks arrive grouped: a group stacks B same-sized blocks as an (B, m)
residual array with an (B, m, d) Jacobian stack and one shared coefficient,
so the per-iteration normal equations reduce to dense matrix products whose
cost scales with the parameter dimension d.

States may live on a manifold: ``retract(x, delta)`` applies a local step
(e.g. an axis-angle increment composed onto a rotation) and residual
Jacobians are taken in that local frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .errors import BehindCameraError, OptimizationError

EPS_WEIGHT = 1e-6
MAX_ITER = 200
REL_TOL = 1e-10
_INIT_LAMBDA = 1e-3
_MAX_RETRIES = 30

# groups of equally-shaped blocks: (residuals (B, m), jacobians (B, m, d), coefficient)
Groups = list[tuple[np.ndarray, "np.ndarray | None", float]]


@dataclass
class OptResult:
    x: Any
    objective: float
    trace: list[float]  # accepted objective values, starting at the initial one
    iterations: int


def block_objective(groups: Groups) -> float:
    """F = sum of coefficient-scaled block norms."""
    return float(
        sum(c * np.linalg.norm(r, axis=1).sum() for r, _, c in groups if c != 0.0)
    )


def block_gradient(groups: Groups) -> np.ndarray:
    """Analytic gradient of the block-norm sum in the local frame."""
    grad = None
    for r, jac, c in groups:
        norms = np.maximum(np.linalg.norm(r, axis=1), 1e-300)
        term = np.einsum("bmd,bm->d", jac, r * (c / norms)[:, None])
        grad = term if grad is None else grad + term
    return grad


def minimize_block_norm_sum(
    residual_fn: Callable[[Any, bool], Groups],
    x0: Any,
    retract: Callable[[Any, np.ndarray], Any],
    max_iter: int = MAX_ITER,
    rel_tol: float = REL_TOL,
    eps_weight: float = EPS_WEIGHT,
) -> OptResult:
    """Minimize a sum of residual-block norms from ``x0``.

    Args:
        residual_fn: ``residual_fn(x, need_jacobian)`` returns the block
            groups; it may raise BehindCameraError for infeasible
            candidates, which rejects the step.
        x0: initial state (any type understood by the callbacks).
        retract: applies a local parameter step to a state.

    Raises:
        OptimizationError: the objective is non-finite at ``x0``.
    """
    groups = residual_fn(x0, True)
    objective = block_objective(groups)
    if not np.isfinite(objective):
        raise OptimizationError(f"objective at the initial point is {objective}")
    x = x0
    trace = [objective]
    lam = _INIT_LAMBDA
    iterations = 0

    for _ in range(max_iter):
        h = g = None
        for r, jac, c in groups:
            if c == 0.0:
                continue
            scale = np.sqrt(c / np.maximum(np.linalg.norm(r, axis=1), eps_weight))
            jw = (jac * scale[:, None, None]).reshape(-1, jac.shape[2])
            rw = (r * scale[:, None]).reshape(-1)
            if h is None:
                h, g = jw.T @ jw, jw.T @ rw
            else:
                h += jw.T @ jw
                g += jw.T @ rw
        if h is None:
            break  # every group has zero coefficient: nothing to optimize
        diag = np.clip(np.diag(h), 1e-12, None)

        accepted = False
        new_objective = objective
        for _ in range(_MAX_RETRIES):
            try:
                delta = np.linalg.solve(h + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            candidate = retract(x, delta)
            try:
                candidate_groups = residual_fn(candidate, False)
            except BehindCameraError:
                lam *= 10.0
                continue
            candidate_objective = block_objective(candidate_groups)
            if np.isfinite(candidate_objective) and candidate_objective < objective:
                x = candidate
                new_objective = candidate_objective
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            break
        iterations += 1
        trace.append(new_objective)
        rel_drop = (objective - new_objective) / max(objective, 1e-300)
        objective = new_objective
        if rel_drop < rel_tol:
            break
        groups = residual_fn(x, True)

    return OptResult(x=x, objective=objective, trace=trace, iterations=iterations)
