"""Density allocation and mask construction against brute-force oracles."""

import math

import numpy as np
import pytest

import sparserepair as sr
from oracles import erk_bisection_oracle, lamp_mask_oracle, lamp_scores_oracle
from util import two_block_cnn


def _rand_shapes(rng, n_layers, max_ch=24):
    shapes = {}
    for i in range(n_layers):
        if rng.random() < 0.7:
            o, c = rng.integers(2, max_ch, size=2)
            k = int(rng.choice([1, 3, 5]))
            shapes[f"layer{i}"] = (int(o), int(c), k, k)
        else:
            o, c = rng.integers(2, 4 * max_ch, size=2)
            shapes[f"layer{i}"] = (int(o), int(c))
    return shapes


class TestErkAllocation:
    def test_single_layer_density_is_one_minus_s(self):
        plan = sr.erk_allocation({"w": (32, 16, 3, 3)}, 0.9)
        assert plan.densities["w"] == pytest.approx(0.1, abs=1e-12)

    def test_two_layer_case_matches_bisection_oracle(self):
        shapes = {"a": (16, 16, 3, 3), "b": (64, 64, 3, 3)}
        plan = sr.erk_allocation(shapes, 0.9)
        want = erk_bisection_oracle(shapes, 0.9)
        for name in shapes:
            assert plan.densities[name] == pytest.approx(want[name], abs=1e-9)

    def test_capped_tiny_layer_redistributes_budget(self):
        shapes = {"tiny": (2, 2, 1, 1), "big": (64, 64, 3, 3)}
        plan = sr.erk_allocation(shapes, 0.5)
        want = erk_bisection_oracle(shapes, 0.5)
        assert plan.densities["tiny"] == pytest.approx(1.0)
        for name in shapes:
            assert plan.densities[name] == pytest.approx(want[name], abs=1e-9)

    def test_randomized_oracle_agreement(self):
        rng = np.random.default_rng(20)
        for case in range(30):
            shapes = _rand_shapes(rng, int(rng.integers(1, 7)))
            for s in (0.9, 0.925, 0.95):
                plan = sr.erk_allocation(shapes, s)
                want = erk_bisection_oracle(shapes, s)
                for name in shapes:
                    assert plan.densities[name] == pytest.approx(
                        want[name], abs=1e-9), (case, s, name)

    def test_density_depends_only_on_shapes(self):
        shapes = {"a": (8, 4, 3, 3), "b": (16, 8, 3, 3)}
        assert sr.erk_allocation(shapes, 0.8).densities == \
               sr.erk_allocation(dict(shapes), 0.8).densities

    def test_invalid_sparsity_rejected(self):
        for s in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(sr.SparseRepairError, match="sparsity"):
                sr.erk_allocation({"w": (4, 4, 3, 3)}, s)

    def test_no_layers_rejected(self):
        with pytest.raises(sr.SparseRepairError, match="at least one"):
            sr.erk_allocation({}, 0.9)


class TestMagnitudeMask:
    def test_full_density_keeps_everything(self):
        w = {"w": np.arange(1, 13, dtype=np.float32).reshape(3, 4)}
        plan = sr.AllocationPlan({"w": 1.0}, "uniform", 1e-9)
        masks = sr.magnitude_mask(w, plan)
        np.testing.assert_array_equal(masks["w"], np.ones((3, 4)))

    def test_forced_keep_set(self):
        w = {"w": np.array([0.1, -0.5, 0.3, 0.2], dtype=np.float32)}
        plan = sr.AllocationPlan({"w": 0.5}, "uniform", 0.5)
        masks = sr.magnitude_mask(w, plan)
        np.testing.assert_array_equal(masks["w"], [0, 1, 1, 0])

    def test_ties_keep_lowest_flat_index(self):
        w = {"w": np.array([2.0, 2.0, 2.0, 2.0], dtype=np.float32)}
        plan = sr.AllocationPlan({"w": 0.5}, "uniform", 0.5)
        masks = sr.magnitude_mask(w, plan)
        np.testing.assert_array_equal(masks["w"], [1, 1, 0, 0])

    def test_kept_set_matches_full_sort_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            w = rng.normal(size=int(rng.integers(5, 200))).astype(np.float32)
            d = float(rng.uniform(0.05, 0.95))
            keep = int(math.floor(d * w.size + 0.5))
            plan = sr.AllocationPlan({"w": d}, "uniform", 1 - d)
            mask = sr.magnitude_mask({"w": w}, plan)["w"]
            order = sorted(range(w.size), key=lambda i: (-abs(w[i]), i))
            want = np.zeros(w.size, dtype=np.float32)
            want[order[:keep]] = 1.0
            np.testing.assert_array_equal(mask, want)

    def test_permutation_equivariant_without_ties(self):
        rng = np.random.default_rng(8)
        w = rng.normal(size=40).astype(np.float32)
        perm = rng.permutation(40)
        plan = sr.AllocationPlan({"w": 0.4}, "uniform", 0.6)
        m = sr.magnitude_mask({"w": w}, plan)["w"]
        mp = sr.magnitude_mask({"w": w[perm]}, plan)["w"]
        np.testing.assert_array_equal(mp, m[perm])

    def test_bad_density_rejected(self):
        plan = sr.AllocationPlan({"w": 0.0}, "uniform", 0.5)
        with pytest.raises(sr.SparseRepairError, match="density"):
            sr.magnitude_mask({"w": np.ones(4, dtype=np.float32)}, plan)


class TestLampScores:
    def test_hand_computed_three_weights(self):
        scores = sr.lamp_scores(np.array([1.0, 2.0, 3.0], dtype=np.float32))
        np.testing.assert_allclose(scores, [1 / 14, 4 / 13, 1.0], rtol=1e-12)

    def test_sign_is_ignored(self):
        a = sr.lamp_scores(np.array([-3.0, 2.0, -1.0], dtype=np.float32))
        b = sr.lamp_scores(np.array([3.0, 2.0, 1.0], dtype=np.float32))
        np.testing.assert_allclose(a, b)

    def test_score_order_follows_magnitude_order(self):
        rng = np.random.default_rng(17)
        w = rng.normal(size=100).astype(np.float32)
        scores = sr.lamp_scores(w)
        by_mag = np.argsort(np.abs(w), kind="stable")
        assert np.all(np.diff(scores[by_mag]) >= 0)

    def test_matches_quadratic_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            w = rng.normal(size=(int(rng.integers(2, 12)), int(rng.integers(2, 12)))) \
                .astype(np.float32)
            np.testing.assert_allclose(
                sr.lamp_scores(w), lamp_scores_oracle(w), rtol=1e-10, atol=1e-15)

    def test_all_zero_layer_scores_zero(self):
        scores = sr.lamp_scores(np.zeros((3, 3), dtype=np.float32))
        np.testing.assert_array_equal(scores, np.zeros((3, 3)))

    def test_duplicate_magnitudes_share_denominator(self):
        scores = sr.lamp_scores(np.array([2.0, 2.0, 1.0], dtype=np.float32))
        # both 2.0 entries divide by 4+4, the 1.0 entry by 4+4+1
        np.testing.assert_allclose(scores, [0.5, 0.5, 1 / 9], rtol=1e-12)


class TestLampMask:
    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(40)
        for case in range(8):
            weights = {
                f"l{i}": rng.normal(size=int(rng.integers(4, 60))).astype(np.float32)
                for i in range(int(rng.integers(1, 5)))
            }
            s = float(rng.uniform(0.2, 0.9))
            got = sr.lamp_mask(weights, s)
            want = lamp_mask_oracle(weights, s)
            for name in weights:
                np.testing.assert_array_equal(got[name], want[name],
                                              err_msg=f"case {case} {name}")

    def test_prunes_exactly_ceil_fraction(self):
        rng = np.random.default_rng(41)
        weights = {"a": rng.normal(size=53).astype(np.float32),
                   "b": rng.normal(size=47).astype(np.float32)}
        for s in (0.3, 0.5, 0.77):
            masks = sr.lamp_mask(weights, s)
            zeros = sum(int((m == 0).sum()) for m in masks.values())
            assert zeros == math.ceil(s * 100)

    def test_identical_layers_pruned_identically(self):
        rng = np.random.default_rng(42)
        w = rng.normal(size=(4, 4)).astype(np.float32)
        masks = sr.lamp_mask({"a": w.copy(), "b": w.copy()}, 0.5)
        np.testing.assert_array_equal(masks["a"], masks["b"])

    def test_all_zero_layer_pruned_first(self):
        weights = {"dead": np.zeros(10, dtype=np.float32),
                   "live": np.arange(1, 11, dtype=np.float32)}
        masks = sr.lamp_mask(weights, 0.5)
        np.testing.assert_array_equal(masks["dead"], np.zeros(10))
        np.testing.assert_array_equal(masks["live"], np.ones(10))

    def test_global_rescale_leaves_mask_unchanged(self):
        rng = np.random.default_rng(44)
        weights = {"a": rng.normal(size=30).astype(np.float32),
                   "b": rng.normal(size=50).astype(np.float32)}
        masks = sr.lamp_mask(weights, 0.6)
        scaled = {n: (3.7 * w).astype(np.float32) for n, w in weights.items()}
        rescaled = sr.lamp_mask(scaled, 0.6)
        for name in weights:
            np.testing.assert_array_equal(masks[name], rescaled[name])


class TestApplyMaskAndBudget:
    def test_all_ones_is_identity(self):
        w = {"w": np.arange(6, dtype=np.float32)}
        out = sr.apply_mask(w, {"w": np.ones(6, dtype=np.float32)})
        np.testing.assert_array_equal(out["w"], w["w"])

    def test_all_zeros_clears_weights(self):
        w = {"w": np.arange(6, dtype=np.float32)}
        out = sr.apply_mask(w, {"w": np.zeros(6, dtype=np.float32)})
        np.testing.assert_array_equal(out["w"], np.zeros(6))

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        w = {"w": rng.normal(size=20).astype(np.float32)}
        m = {"w": (rng.random(20) > 0.5).astype(np.float32)}
        once = sr.apply_mask(w, m)
        twice = sr.apply_mask(once, m)
        np.testing.assert_array_equal(once["w"], twice["w"])

    def test_mask_shape_mismatch_rejected(self):
        with pytest.raises(sr.ShapeMismatch):
            sr.apply_mask({"w": np.ones(4, dtype=np.float32)},
                          {"w": np.ones(5, dtype=np.float32)})

    @pytest.mark.parametrize("alloc", ["erk", "uniform"])
    def test_global_sparsity_within_one_weight(self, alloc):
        model = two_block_cnn(seed=6, c1=10, c2=14)
        total = sum(w.size for w in sr.allocate.prunable_weights(model).values())
        for s in (0.5, 0.9, 0.925, 0.95):
            pruned = sr.prune_model(model, alloc, s)
            achieved = sr.global_sparsity(sr.model_masks(pruned))
            assert abs(achieved - s) <= 1.0 / total + 1e-12

    def test_lamp_prunes_ceil_globally(self):
        model = two_block_cnn(seed=6)
        total = sum(w.size for w in sr.allocate.prunable_weights(model).values())
        pruned = sr.prune_model(model, "lamp", 0.9)
        masks = sr.model_masks(pruned)
        zeros = sum(int((m == 0).sum()) for m in masks.values())
        assert zeros == math.ceil(0.9 * total)

    def test_prune_model_zeroes_weights_and_stores_masks(self):
        model = two_block_cnn(seed=9)
        pruned = sr.prune_model(model, "erk", 0.8)
        for name, mask in sr.model_masks(pruned).items():
            w = pruned.weights[name]
            np.testing.assert_array_equal(w[mask == 0], 0.0)
            dense = model.weights[name]
            np.testing.assert_array_equal(w[mask == 1], dense[mask == 1])

    def test_unknown_allocation_rejected(self):
        with pytest.raises(sr.SparseRepairError, match="unknown allocation"):
            sr.prune_model(two_block_cnn(), "magic", 0.5)
