"""Block-norm minimizer: known optima, feasibility handling, trace shape."""
from __future__ import annotations

import numpy as np
import pytest

from poselift.errors import BehindCameraError, OptimizationError
from poselift.optimize import (
    Groups,
    block_gradient,
    block_objective,
    minimize_block_norm_sum,
)


def _vector_retract(x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    return x + delta


def _point_fit(targets: np.ndarray, coeff: float = 1.0):
    """F(x) = coeff * sum_i ||x - t_i||: residual blocks are x - t_i."""

    def residual_fn(x: np.ndarray, need_jacobian: bool) -> Groups:
        r = x[None, :] - targets
        jac = None
        if need_jacobian:
            d = len(x)
            jac = np.broadcast_to(np.eye(d), (len(targets), d, d)).copy()
        return [(r, jac, coeff)]

    return residual_fn


class TestBlockObjective:
    def test_hand_value(self):
        r = np.array([[3.0, 4.0], [0.0, 2.0]])  # norms 5 and 2
        assert block_objective([(r, None, 2.0)]) == pytest.approx(14.0, abs=1e-12)

    def test_zero_coefficient_groups_skipped(self):
        r = np.full((3, 2), 1e300)  # would overflow if it were counted
        assert block_objective([(r, None, 0.0)]) == 0.0

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(60)
        targets = rng.normal(size=(6, 3))
        fn = _point_fit(targets, coeff=1.7)
        x = rng.normal(size=3)
        grad = block_gradient(fn(x, True))
        h = 1e-7
        for d in range(3):
            step = np.zeros(3)
            step[d] = h
            fd = (block_objective(fn(x + step, False)) - block_objective(fn(x - step, False))) / (2 * h)
            assert grad[d] == pytest.approx(fd, rel=1e-5)


class TestMinimizer:
    def test_single_target_reaches_it(self):
        target = np.array([[2.0, -3.0, 5.0]])
        result = minimize_block_norm_sum(_point_fit(target), np.zeros(3), _vector_retract)
        np.testing.assert_allclose(result.x, target[0], atol=1e-5)
        assert result.objective < 1e-5

    def test_fermat_point_of_equilateral_triangle(self):
        """Sum of distances to an equilateral triangle is minimized at its centroid."""
        angles = np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3])
        center = np.array([1.5, -0.5])
        targets = center + np.stack([np.cos(angles), np.sin(angles)], axis=1)
        result = minimize_block_norm_sum(
            _point_fit(targets), np.array([4.0, 4.0]), _vector_retract, rel_tol=1e-14
        )
        np.testing.assert_allclose(result.x, center, atol=1e-6)
        assert result.objective == pytest.approx(3.0, abs=1e-10)

    def test_weighted_median_pull(self):
        """With coefficients 3 vs 1 the heavy target wins outright."""
        a = np.array([[0.0, 0.0]])
        b = np.array([[10.0, 0.0]])

        def residual_fn(x, need_jacobian):
            ja = jb = None
            if need_jacobian:
                ja = np.eye(2)[None]
                jb = np.eye(2)[None]
            return [(x[None] - a, ja, 3.0), (x[None] - b, jb, 1.0)]

        result = minimize_block_norm_sum(residual_fn, np.array([5.0, 1.0]), _vector_retract)
        # objective 3||x-a|| + ||x-b|| has its minimum at a itself
        np.testing.assert_allclose(result.x, [0.0, 0.0], atol=1e-4)

    def test_trace_is_monotone_and_starts_at_initial(self):
        rng = np.random.default_rng(61)
        targets = rng.normal(scale=5.0, size=(8, 4))
        fn = _point_fit(targets)
        x0 = rng.normal(size=4)
        initial = block_objective(fn(x0, False))
        result = minimize_block_norm_sum(fn, x0, _vector_retract)
        assert result.trace[0] == pytest.approx(initial, abs=0.0)
        assert all(b < a for a, b in zip(result.trace, result.trace[1:]))
        assert result.objective == result.trace[-1]
        assert result.iterations == len(result.trace) - 1

    def test_all_zero_coefficients_returns_initial(self):
        def residual_fn(x, need_jacobian):
            jac = np.eye(2)[None] if need_jacobian else None
            return [(x[None], jac, 0.0)]

        x0 = np.array([3.0, 4.0])
        result = minimize_block_norm_sum(residual_fn, x0, _vector_retract)
        np.testing.assert_array_equal(result.x, x0)
        assert result.iterations == 0
        assert result.trace == [0.0]

    def test_non_finite_initial_objective_raises(self):
        def residual_fn(x, need_jacobian):
            jac = np.eye(1)[None] if need_jacobian else None
            return [(np.array([[np.inf]]), jac, 1.0)]

        with pytest.raises(OptimizationError):
            minimize_block_norm_sum(residual_fn, np.zeros(1), _vector_retract)

    def test_infeasible_candidates_are_rejected_not_fatal(self):
        """Steps into the forbidden half-plane raise; the solver backs off."""
        target = np.array([[-5.0, 0.0]])

        def residual_fn(x, need_jacobian):
            if x[0] < -1.0:
                raise BehindCameraError("candidate left the feasible region")
            jac = np.eye(2)[None] if need_jacobian else None
            return [(x[None] - target, jac, 1.0)]

        x0 = np.array([2.0, 1.0])
        result = minimize_block_norm_sum(residual_fn, x0, _vector_retract)
        assert result.x[0] >= -1.0
        # it should still make progress toward the boundary
        assert result.objective < block_objective(residual_fn(x0, False))
        assert all(b < a for a, b in zip(result.trace, result.trace[1:]))

    def test_start_at_optimum_stays_put(self):
        target = np.array([[1.0, 2.0]])
        fn = _point_fit(target)
        result = minimize_block_norm_sum(fn, target[0].copy(), _vector_retract)
        np.testing.assert_allclose(result.x, target[0], atol=1e-9)

    def test_retract_defines_the_step_space(self):
        """A scaled retraction still converges to the same optimum."""
        target = np.array([[6.0, -2.0]])

        def scaled_retract(x, delta):
            return x + 0.5 * delta

        result = minimize_block_norm_sum(
            _point_fit(target), np.zeros(2), scaled_retract, max_iter=400
        )
        np.testing.assert_allclose(result.x, target[0], atol=1e-4)

    def test_respects_max_iter(self):
        rng = np.random.default_rng(62)
        targets = rng.normal(size=(5, 3))
        result = minimize_block_norm_sum(
            _point_fit(targets), np.zeros(3), _vector_retract, max_iter=2
        )
        assert result.iterations <= 2
