"""Exact k-nearest-neighbour search over flattened 2D pose descriptors.

The metric is the mean per-joint Euclidean distance, matching
``normalize.descriptor_distance``.  Nodes split on the dimension with the
largest spread at the median element; leaves hold up to LEAF_SIZE points.
Backtracking uses the exact per-joint lower bound |q[d] - split| / J, so
results equal a linear scan, including ties, which are broken by ascending
descriptor id.
"""
from __future__ import annotations

import heapq

import numpy as np

LEAF_SIZE = 16
LEAF_MARKER = 0xFFFFFFFF


class DescriptorKdTree:
    """Static kd-tree over a (N, 2 * J) descriptor matrix.

    Node arrays are parallel: ``dims[i]`` is the split dimension or
    LEAF_MARKER; internal nodes store the split threshold and child node
    ids in ``child_a`` / ``child_b``; leaves store (start, count) into the
    permutation array instead.
    """

    def __init__(self, points: np.ndarray, n_joints: int, _arrays=None):
        points = np.ascontiguousarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 2 * n_joints:
            raise ValueError(
                f"descriptor matrix {points.shape} does not match {n_joints} joints"
            )
        self.points = points
        self.n_joints = int(n_joints)
        if _arrays is not None:
            self.dims, self.thresholds, self.child_a, self.child_b, self.perm = _arrays
        else:
            self._build()

    @classmethod
    def from_arrays(cls, points, n_joints, dims, thresholds, child_a, child_b, perm):
        return cls(points, n_joints, _arrays=(dims, thresholds, child_a, child_b, perm))

    @property
    def node_count(self) -> int:
        return len(self.dims)

    def _build(self) -> None:
        n = self.points.shape[0]
        dims: list[int] = []
        thresholds: list[float] = []
        child_a: list[int] = []
        child_b: list[int] = []
        perm = np.empty(n, dtype=np.uint32)
        cursor = 0

        def build(idx: np.ndarray) -> int:
            nonlocal cursor
            node = len(dims)
            dims.append(LEAF_MARKER)
            thresholds.append(0.0)
            child_a.append(0)
            child_b.append(0)
            if len(idx) <= LEAF_SIZE:
                child_a[node] = cursor
                child_b[node] = len(idx)
                perm[cursor : cursor + len(idx)] = idx
                cursor += len(idx)
                return node
            sub = self.points[idx]
            dim = int(np.argmax(sub.max(axis=0) - sub.min(axis=0)))
            # stable order by (value, id) keeps builds deterministic under ties
            order = np.lexsort((idx, sub[:, dim]))
            idx = idx[order]
            mid = len(idx) // 2
            dims[node] = dim
            thresholds[node] = float(self.points[idx[mid], dim])
            child_a[node] = build(idx[:mid])
            child_b[node] = build(idx[mid:])
            return node

        if n > 0:
            build(np.arange(n, dtype=np.uint32))
        self.dims = np.asarray(dims, dtype=np.uint32)
        self.thresholds = np.asarray(thresholds, dtype=np.float64)
        self.child_a = np.asarray(child_a, dtype=np.uint32)
        self.child_b = np.asarray(child_b, dtype=np.uint32)
        self.perm = perm

    def query(self, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Return the k nearest descriptors to ``q``.

        Results come back ascending by (distance, descriptor id); ``k`` is
        clamped to the corpus size.

        Returns:
            (distances, ids) arrays of equal length.
        """
        q = np.asarray(q, dtype=np.float64).reshape(-1)
        if q.shape[0] != self.points.shape[1]:
            raise ValueError(
                f"query has {q.shape[0]} dims, index has {self.points.shape[1]}"
            )
        n = self.points.shape[0]
        k = min(int(k), n)
        if k <= 0 or n == 0:
            return np.empty(0), np.empty(0, dtype=np.int64)

        pts = self.points
        j = self.n_joints
        dims = self.dims
        thresholds = self.thresholds
        child_a = self.child_a
        child_b = self.child_b
        perm = self.perm
        heap: list[tuple[float, int]] = []  # (-distance, -id): root is the worst kept

        def visit(node: int) -> None:
            dim = dims[node]
            if dim == LEAF_MARKER:
                start = child_a[node]
                count = child_b[node]
                ids = perm[start : start + count]
                diff = pts[ids] - q
                dist = np.sqrt((diff.reshape(-1, j, 2) ** 2).sum(axis=2)).mean(axis=1)
                for d, i in zip(dist.tolist(), ids.tolist()):
                    if len(heap) < k:
                        heapq.heappush(heap, (-d, -i))
                    elif (d, i) < (-heap[0][0], -heap[0][1]):
                        heapq.heapreplace(heap, (-d, -i))
                return
            delta = q[dim] - thresholds[node]
            if delta < 0.0:
                near, far = child_a[node], child_b[node]
            else:
                near, far = child_b[node], child_a[node]
            visit(near)
            # one coordinate of one joint bounds the mean metric from below;
            # ties must be visited so id ordering stays exact
            if len(heap) < k or abs(delta) / j <= -heap[0][0]:
                visit(far)

        visit(0)
        ordered = sorted((-d, -i) for d, i in heap)
        distances = np.array([d for d, _ in ordered])
        ids = np.array([i for _, i in ordered], dtype=np.int64)
        return distances, ids
