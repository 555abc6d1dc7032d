"""Skeleton conventions, pair selection, and affine retargeting."""
from __future__ import annotations

import numpy as np
import pytest

from poselift import (
    DegenerateInputError,
    EmptyCorpusError,
    RetargetModel,
    SkeletonMismatchError,
    SkeletonSpec,
    apply_retarget,
    default_skeleton_14,
    default_skeleton_17,
    fit_retarget,
    select_pairs,
)


class TestSkeletonSpec:
    def test_default_layouts(self):
        s14 = default_skeleton_14()
        s17 = default_skeleton_17()
        assert s14.joint_count == 14
        assert s17.joint_count == 17
        assert s14.joints[s14.root_index] == "neck"
        assert s17.joints[s17.root_index] == "pelvis"

    def test_joint_index_and_subset(self, skel14):
        assert skel14.joint_index("head") == 0
        idx = skel14.subset_indices(("right_hip", "left_hip"))
        assert idx == (skel14.joint_index("right_hip"), skel14.joint_index("left_hip"))

    def test_unknown_joint_raises(self, skel14):
        with pytest.raises(ValueError, match="no joint"):
            skel14.joint_index("tail")

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError):
            SkeletonSpec("bad", ("a", "b", "a"), 0)

    def test_root_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            SkeletonSpec("bad", ("a", "b"), 2)

    def test_too_few_joints_rejected(self):
        with pytest.raises(ValueError):
            SkeletonSpec("bad", ("a",), 0)

    def test_dict_round_trip(self, skel17):
        assert SkeletonSpec.from_dict(skel17.to_dict()) == skel17


def _pair_fixture():
    """One source pose plus three targets at mean shared-joint distances
    10, 5 and 5 (the last two tie)."""
    src = np.array([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [99.0, 99.0, 99.0]]])
    tgt = np.array(
        [
            [[10.0, 0.0, 0.0], [11.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
            [[5.0, 0.0, 0.0], [6.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
            [[0.0, 5.0, 0.0], [1.0, 5.0, 0.0], [0.0, 0.0, 0.0]],
        ]
    )
    return src, tgt, ((0, 1), (0, 1))


class TestSelectPairs:
    def test_nearest_target_wins(self):
        src, tgt, corr = _pair_fixture()
        assert select_pairs(src, tgt, corr, threshold_mm=20.0) == [(0, 1)]

    def test_tie_resolves_to_lowest_target_index(self):
        src, tgt, corr = _pair_fixture()
        # targets 1 and 2 are both at distance 5; index 1 must win
        pairs = select_pairs(src, tgt, corr, threshold_mm=6.0)
        assert pairs == [(0, 1)]

    def test_threshold_is_strict(self):
        src, tgt, corr = _pair_fixture()
        assert select_pairs(src, tgt, corr, threshold_mm=5.0) == []
        assert select_pairs(src, tgt, corr, threshold_mm=5.0 + 1e-9) == [(0, 1)]

    def test_zero_threshold_keeps_nothing(self):
        src, tgt, corr = _pair_fixture()
        # even an exact duplicate is at distance 0, which is not < 0
        assert select_pairs(tgt, tgt, ((0, 1, 2), (0, 1, 2)), threshold_mm=0.0) == []
        assert select_pairs(src, tgt, corr, threshold_mm=0.0) == []

    def test_pairs_in_source_order(self):
        src, tgt, corr = _pair_fixture()
        two = np.concatenate([src, tgt[2:3]], axis=0)
        pairs = select_pairs(two, tgt, corr, threshold_mm=6.0)
        assert pairs == [(0, 1), (1, 2)]

    def test_correspondence_validation(self):
        src, tgt, _ = _pair_fixture()
        with pytest.raises(SkeletonMismatchError):
            select_pairs(src, tgt, ((0, 1), (0,)))
        with pytest.raises(SkeletonMismatchError):
            select_pairs(src, tgt, ((), ()))
        with pytest.raises(SkeletonMismatchError):
            select_pairs(src, tgt, ((0, 7), (0, 1)))

    def test_empty_corpus_rejected(self):
        src, tgt, corr = _pair_fixture()
        with pytest.raises(EmptyCorpusError):
            select_pairs(np.zeros((0, 3, 3)), tgt, corr)
        with pytest.raises(EmptyCorpusError):
            select_pairs(src, np.zeros((0, 3, 3)), corr)


def _toy_skeletons() -> tuple[SkeletonSpec, SkeletonSpec]:
    src = SkeletonSpec("toy4", ("a", "b", "c", "d"), 0)
    tgt = SkeletonSpec("toy3", ("p", "q", "r"), 0)
    return src, tgt


def _affine_ground_truth(rng, j_src: int, j_tgt: int):
    weights = rng.normal(scale=0.5, size=(j_tgt, 3, 3 * j_src))
    bias = rng.normal(scale=50.0, size=(j_tgt, 3))
    return weights, bias


class TestFitRetarget:
    def test_recovers_exact_affine_map(self):
        """Targets generated by a known per-joint affine map are refit to it."""
        rng = np.random.default_rng(30)
        src_skel, tgt_skel = _toy_skeletons()
        weights, bias = _affine_ground_truth(rng, 4, 3)
        src = rng.normal(scale=300.0, size=(20, 4, 3))
        tgt = np.einsum("tcs,ns->ntc", weights, src.reshape(20, -1)) + bias
        model = fit_retarget(src, tgt, src_skel, tgt_skel)
        np.testing.assert_allclose(model.weights, weights, atol=1e-8)
        np.testing.assert_allclose(model.bias, bias, atol=1e-6)
        assert model.residual_rms_mm < 1e-6
        assert model.pair_count == 20

    def test_apply_matches_ground_truth(self):
        rng = np.random.default_rng(31)
        src_skel, tgt_skel = _toy_skeletons()
        weights, bias = _affine_ground_truth(rng, 4, 3)
        src = rng.normal(scale=300.0, size=(25, 4, 3))
        tgt = np.einsum("tcs,ns->ntc", weights, src.reshape(25, -1)) + bias
        model = fit_retarget(src, tgt, src_skel, tgt_skel)
        probe = rng.normal(scale=300.0, size=(4, 3))
        expected = np.einsum("tcs,s->tc", weights, probe.reshape(-1)) + bias
        np.testing.assert_allclose(apply_retarget(model, probe), expected, atol=1e-6)

    def test_needs_one_more_pair_than_parameters(self):
        rng = np.random.default_rng(32)
        src_skel, tgt_skel = _toy_skeletons()
        n_params = 3 * 4 + 1
        src = rng.normal(size=(n_params - 1, 4, 3))
        tgt = rng.normal(size=(n_params - 1, 3, 3))
        with pytest.raises(ValueError, match="pairs"):
            fit_retarget(src, tgt, src_skel, tgt_skel)

    def test_duplicate_pairs_are_degenerate(self):
        rng = np.random.default_rng(33)
        src_skel, tgt_skel = _toy_skeletons()
        one = rng.normal(size=(1, 4, 3))
        src = np.repeat(one, 20, axis=0)
        tgt = rng.normal(size=(20, 3, 3))
        with pytest.raises(DegenerateInputError):
            fit_retarget(src, tgt, src_skel, tgt_skel)

    def test_skeleton_shape_checks(self):
        rng = np.random.default_rng(34)
        src_skel, tgt_skel = _toy_skeletons()
        with pytest.raises(SkeletonMismatchError):
            fit_retarget(
                rng.normal(size=(20, 5, 3)), rng.normal(size=(20, 3, 3)),
                src_skel, tgt_skel,
            )
        with pytest.raises(SkeletonMismatchError):
            fit_retarget(
                rng.normal(size=(20, 4, 3)), rng.normal(size=(19, 3, 3)),
                src_skel, tgt_skel,
            )


class TestRetargetModel:
    def _model(self) -> RetargetModel:
        rng = np.random.default_rng(35)
        src_skel, tgt_skel = _toy_skeletons()
        weights, bias = _affine_ground_truth(rng, 4, 3)
        src = rng.normal(scale=300.0, size=(20, 4, 3))
        tgt = np.einsum("tcs,ns->ntc", weights, src.reshape(20, -1)) + bias
        return fit_retarget(src, tgt, src_skel, tgt_skel)

    def test_json_round_trip(self):
        model = self._model()
        back = RetargetModel.from_json(model.to_json())
        np.testing.assert_array_equal(back.weights, model.weights)
        np.testing.assert_array_equal(back.bias, model.bias)
        assert back.source_skeleton == model.source_skeleton
        assert back.target_skeleton == model.target_skeleton
        assert back.pair_count == model.pair_count
        assert back.residual_rms_mm == model.residual_rms_mm

    def test_save_load(self, tmp_path):
        model = self._model()
        path = tmp_path / "map.json"
        model.save(path)
        back = RetargetModel.load(path)
        np.testing.assert_array_equal(back.weights, model.weights)

    def test_bad_version_rejected(self):
        model = self._model()
        text = model.to_json().replace('"format_version": 1', '"format_version": 99')
        with pytest.raises(ValueError, match="version"):
            RetargetModel.from_json(text)

    def test_apply_rejects_wrong_joint_count(self):
        model = self._model()
        with pytest.raises(SkeletonMismatchError):
            apply_retarget(model, np.zeros((5, 3)))
