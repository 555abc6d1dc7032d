"""kd-tree search against an independent linear-scan oracle, plus index I/O.

The oracle below recomputes nearest neighbours from scratch (full distance
matrix + lexsort); the tree must reproduce it exactly, ids and all.
"""
from __future__ import annotations

import numpy as np
import pytest

from poselift import (
    EmptyCorpusError,
    SkeletonMismatchError,
    build_index,
    dedup,
    default_camera_rig,
    knn,
    load_index,
    normalize_pose_2d,
    project_orthographic,
    save_index,
)
from poselift.kdtree import LEAF_MARKER, DescriptorKdTree


def brute_knn(points: np.ndarray, q: np.ndarray, k: int, n_joints: int):
    """Reference k-NN: full scan, mean per-joint metric, (distance, id) order."""
    n = points.shape[0]
    diff = points - q.reshape(1, -1)
    dist = np.sqrt((diff.reshape(n, n_joints, 2) ** 2).sum(axis=2)).mean(axis=1)
    order = np.lexsort((np.arange(n), dist))[: min(k, n)]
    return dist[order], order


def brute_dedup(poses: np.ndarray, threshold_mm: float) -> np.ndarray:
    """Reference dedup: quadratic greedy scan, first pose always kept."""
    kept: list[np.ndarray] = []
    for pose in poses:
        near = any(
            np.sqrt(((prev - pose) ** 2).sum(axis=1)).mean() < threshold_mm
            for prev in kept
        )
        if not near:
            kept.append(pose)
    return np.asarray(kept)


class TestKdTreeVsBruteForce:
    def test_random_corpora_match_linear_scan(self):
        rng = np.random.default_rng(40)
        for trial in range(25):
            n = int(rng.integers(1, 300))
            j = int(rng.integers(1, 18))
            points = rng.normal(size=(n, 2 * j))
            tree = DescriptorKdTree(points, n_joints=j)
            for _ in range(4):
                k = int(rng.integers(1, n + 3))
                q = rng.normal(size=2 * j)
                dist, ids = tree.query(q, k)
                ref_dist, ref_ids = brute_knn(points, q, k, j)
                np.testing.assert_array_equal(ids, ref_ids)
                np.testing.assert_allclose(dist, ref_dist, rtol=0.0, atol=1e-12)

    def test_quantized_ties_break_by_ascending_id(self):
        rng = np.random.default_rng(41)
        # coarse integer grid forces many exact distance ties
        points = rng.integers(0, 3, size=(240, 10)).astype(float)
        tree = DescriptorKdTree(points, n_joints=5)
        for _ in range(30):
            q = rng.integers(0, 3, size=10).astype(float)
            k = int(rng.integers(1, 60))
            dist, ids = tree.query(q, k)
            ref_dist, ref_ids = brute_knn(points, q, k, 5)
            np.testing.assert_array_equal(ids, ref_ids)
            np.testing.assert_array_equal(dist, ref_dist)

    def test_exact_duplicates_in_corpus(self):
        rng = np.random.default_rng(42)
        base = rng.normal(size=(20, 6))
        points = np.concatenate([base, base, base], axis=0)
        tree = DescriptorKdTree(points, n_joints=3)
        q = base[7]
        dist, ids = tree.query(q, 3)
        # the three copies of row 7 tie at 0; ids come back ascending
        np.testing.assert_array_equal(dist, [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(ids, [7, 27, 47])

    def test_k_clamped_to_corpus_size(self):
        points = np.random.default_rng(43).normal(size=(5, 4))
        tree = DescriptorKdTree(points, n_joints=2)
        dist, ids = tree.query(np.zeros(4), 50)
        assert len(dist) == 5
        assert sorted(ids.tolist()) == [0, 1, 2, 3, 4]

    def test_empty_and_invalid_queries(self):
        tree = DescriptorKdTree(np.zeros((0, 4)), n_joints=2)
        dist, ids = tree.query(np.zeros(4), 3)
        assert len(dist) == 0 and len(ids) == 0
        full = DescriptorKdTree(np.zeros((2, 4)), n_joints=2)
        with pytest.raises(ValueError, match="dims"):
            full.query(np.zeros(6), 1)
        with pytest.raises(ValueError):
            DescriptorKdTree(np.zeros((3, 5)), n_joints=2)

    def test_single_point_corpus(self):
        points = np.array([[1.0, 2.0, 3.0, 4.0]])
        tree = DescriptorKdTree(points, n_joints=2)
        dist, ids = tree.query(points[0], 1)
        assert dist[0] == 0.0 and ids[0] == 0

    def test_build_is_deterministic(self):
        rng = np.random.default_rng(44)
        points = rng.integers(0, 4, size=(300, 8)).astype(float)
        a = DescriptorKdTree(points, n_joints=4)
        b = DescriptorKdTree(points.copy(), n_joints=4)
        np.testing.assert_array_equal(a.dims, b.dims)
        np.testing.assert_array_equal(a.thresholds, b.thresholds)
        np.testing.assert_array_equal(a.child_a, b.child_a)
        np.testing.assert_array_equal(a.child_b, b.child_b)
        np.testing.assert_array_equal(a.perm, b.perm)

    def test_leaves_cover_every_point_once(self):
        rng = np.random.default_rng(45)
        points = rng.normal(size=(137, 6))
        tree = DescriptorKdTree(points, n_joints=3)
        leaves = tree.dims == LEAF_MARKER
        counts = tree.child_b[leaves]
        assert counts.sum() == 137
        assert counts.max() <= 16
        assert sorted(tree.perm.tolist()) == list(range(137))


class TestDedup:
    def test_matches_reference_scan(self):
        rng = np.random.default_rng(46)
        # quantized joints produce genuine near-duplicates
        poses = np.round(rng.normal(scale=50.0, size=(80, 5, 3)) / 40.0) * 40.0
        for threshold in (0.0, 10.0, 35.0, 200.0):
            np.testing.assert_array_equal(
                dedup(poses, threshold), brute_dedup(poses, threshold)
            )

    def test_zero_threshold_keeps_everything(self):
        poses = np.zeros((7, 3, 3))
        assert dedup(poses, 0.0).shape[0] == 7

    def test_first_pose_always_kept(self):
        poses = np.zeros((4, 2, 3))
        out = dedup(poses, 1e9)
        assert out.shape[0] == 1
        np.testing.assert_array_equal(out[0], poses[0])

    def test_order_preserved(self):
        rng = np.random.default_rng(47)
        poses = rng.normal(scale=500.0, size=(30, 4, 3))
        out = dedup(poses, 1.0)
        assert out.shape == poses.shape
        np.testing.assert_array_equal(out, poses)

    def test_validation(self):
        with pytest.raises(ValueError):
            dedup(np.zeros((3, 4)), 1.0)
        with pytest.raises(ValueError):
            dedup(np.zeros((3, 4, 3)), -1.0)


@pytest.fixture(scope="module")
def small_index(corpus14, skel14):
    rig = default_camera_rig()[:6]  # azimuth 0, all six elevations
    return build_index(corpus14[:30], skel14, rig=rig, dedup_threshold_mm=0.0)


class TestBuildIndex:
    def test_descriptor_layout_is_pose_major(self, small_index):
        idx = small_index
        assert idx.descriptor_count == idx.pose_count * idx.camera_count
        for did in (0, 5, 6, idx.descriptor_count - 1):
            p, c = idx.back_ref(did)
            assert did == p * idx.camera_count + c

    def test_descriptors_match_public_pipeline_bitwise(self, small_index):
        """Stored descriptors equal project + normalize done call by call."""
        idx = small_index
        rng = np.random.default_rng(48)
        for _ in range(12):
            did = int(rng.integers(0, idx.descriptor_count))
            p, c = idx.back_ref(did)
            img = project_orthographic(idx.poses[p][list(idx.descriptor_joints)], idx.rig[c])
            expected = normalize_pose_2d(img).reshape(-1)
            assert np.array_equal(idx.descriptors[did], expected)

    def test_self_retrieval_distance_is_exactly_zero(self, small_index):
        idx = small_index
        for did in range(0, idx.descriptor_count, 17):
            q = idx.descriptors[did].reshape(-1, 2)
            result = knn(idx, q, k=1)
            assert result.distances[0] == 0.0
            rid = result.pose_ids[0] * idx.camera_count + result.camera_ids[0]
            assert np.array_equal(idx.descriptors[rid], idx.descriptors[did])

    def test_knn_poses_follow_ids(self, small_index):
        idx = small_index
        q = idx.descriptors[13].reshape(-1, 2)
        result = knn(idx, q, k=8)
        assert len(result) == 8
        for row, pid in zip(result.poses, result.pose_ids):
            np.testing.assert_array_equal(row, idx.poses[pid])
        assert np.all(np.diff(result.distances) >= 0.0)

    def test_knn_matches_brute_force_through_index(self, small_index):
        idx = small_index
        rng = np.random.default_rng(49)
        q = normalize_pose_2d(rng.normal(size=(14, 2)))
        result = knn(idx, q, k=20)
        ref_dist, ref_ids = brute_knn(idx.descriptors, q.reshape(-1), 20, 14)
        np.testing.assert_array_equal(
            result.pose_ids * idx.camera_count + result.camera_ids, ref_ids
        )
        np.testing.assert_allclose(result.distances, ref_dist, rtol=0.0, atol=1e-12)

    def test_dedup_threshold_applies(self, corpus14, skel14):
        doubled = np.concatenate([corpus14[:10], corpus14[:10]], axis=0)
        idx = build_index(
            doubled, skel14, rig=default_camera_rig()[:1], dedup_threshold_mm=1e-6
        )
        assert idx.pose_count == 10

    def test_query_validation(self, small_index):
        with pytest.raises(SkeletonMismatchError):
            knn(small_index, np.zeros((13, 2)), k=1)
        with pytest.raises(ValueError):
            knn(small_index, np.zeros((14, 2)), k=0)

    def test_build_validation(self, corpus14, skel14):
        with pytest.raises(EmptyCorpusError):
            build_index(np.zeros((0, 14, 3)), skel14)
        with pytest.raises(SkeletonMismatchError):
            build_index(np.zeros((4, 13, 3)), skel14)
        with pytest.raises(ValueError, match="rig"):
            build_index(corpus14[:4], skel14, rig=())

    def test_descriptor_joint_subset(self, corpus17, skel17, skel14):
        rig = default_camera_rig()[:3]
        idx = build_index(
            corpus17[:12],
            skel17,
            rig=rig,
            dedup_threshold_mm=0.0,
            descriptor_joint_names=skel14.joints,
        )
        assert idx.descriptors.shape[1] == 28
        assert idx.poses.shape[1] == 17
        result = knn(idx, idx.descriptors[4].reshape(-1, 2), k=1)
        assert result.distances[0] == 0.0
        assert result.poses.shape[1:] == (17, 3)


class TestIndexPersistence:
    def test_round_trip_is_bit_exact(self, small_index, tmp_path):
        path = tmp_path / "corpus.plif"
        save_index(small_index, path)
        loaded = load_index(path)
        assert np.array_equal(loaded.poses, small_index.poses)
        assert np.array_equal(loaded.descriptors, small_index.descriptors)
        assert np.array_equal(loaded.tree.dims, small_index.tree.dims)
        assert np.array_equal(loaded.tree.thresholds, small_index.tree.thresholds)
        assert np.array_equal(loaded.tree.perm, small_index.tree.perm)
        assert loaded.skeleton == small_index.skeleton
        assert loaded.rig == small_index.rig
        assert loaded.descriptor_joints == small_index.descriptor_joints
        assert loaded.dedup_threshold_mm == small_index.dedup_threshold_mm

    def test_resave_is_byte_identical(self, small_index, tmp_path):
        first = tmp_path / "a.plif"
        second = tmp_path / "b.plif"
        save_index(small_index, first)
        save_index(load_index(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_load_never_rebuilds_tree(self, small_index, tmp_path, monkeypatch):
        path = tmp_path / "c.plif"
        save_index(small_index, path)

        def boom(self):
            raise AssertionError("load must not rebuild the kd-tree")

        monkeypatch.setattr(DescriptorKdTree, "_build", boom)
        loaded = load_index(path)
        result = knn(loaded, loaded.descriptors[3].reshape(-1, 2), k=2)
        assert result.distances[0] == 0.0

    def test_loaded_index_answers_like_original(self, small_index, tmp_path):
        path = tmp_path / "d.plif"
        save_index(small_index, path)
        loaded = load_index(path)
        rng = np.random.default_rng(50)
        for _ in range(5):
            q = normalize_pose_2d(rng.normal(size=(14, 2)))
            a = knn(small_index, q, k=9)
            b = knn(loaded, q, k=9)
            np.testing.assert_array_equal(a.pose_ids, b.pose_ids)
            np.testing.assert_array_equal(a.camera_ids, b.camera_ids)
            np.testing.assert_array_equal(a.distances, b.distances)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.plif"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(ValueError, match="magic"):
            load_index(path)
