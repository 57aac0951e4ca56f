import math
from fractions import Fraction

import numpy as np
import pytest

from lesionkit import (
    VARIANTS,
    BinaryMask,
    DomainMask,
    GridShape,
    InputError,
    LabelVolume,
    LossConfig,
    ProbVolume,
    WeightMap,
    binary_ce,
    blob_domain,
    combined_loss,
    connected_components,
    global_dc_ce,
    instance_loss,
    iwl_weight,
    shirokikh_weights,
    soft_dice,
)

from helpers import central_difference_grad, random_labels, random_prob, relative_error


def _prob(shape, arrays):
    data = np.ascontiguousarray(np.stack(arrays).astype(np.float64))
    data.flags.writeable = False
    return ProbVolume(shape, data, normalized=True)


def _labels(dims, data, num_classes, spacing=(1.0, 1.0, 1.0)):
    return LabelVolume(GridShape(dims, spacing),
                       np.asarray(data, dtype=np.int32).reshape(dims), num_classes)


class TestLossConfig:
    def test_defaults(self):
        cfg = LossConfig()
        assert cfg.variant == "baseline"
        assert cfg.dice_smooth == 1e-5
        assert cfg.ce_clip == 1e-7
        assert cfg.weight_clamp == (1.0, 2e5)

    @pytest.mark.parametrize("kwargs", [
        dict(variant="nope"),
        dict(alpha=-1.0),
        dict(alpha=0.0, beta=0.0),
        dict(dice_smooth=-1e-9),
        dict(ce_clip=0.0),
        dict(ce_clip=0.6),
        dict(weight_clamp=(2.0, 1.0)),
        dict(connectivity=4),
        dict(units="inch"),
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(InputError):
            LossConfig(**kwargs)

    def test_all_variants_accepted(self):
        for v in VARIANTS:
            assert LossConfig(variant=v).variant == v


class TestSoftDice:
    def test_perfect_prediction_scores_zero(self):
        g = np.array([1.0, 0.0, 1.0, 0.0])
        value, grad = soft_dice(g, g)
        assert value == pytest.approx(0.0, abs=1e-12)
        assert grad.shape == g.shape

    def test_half_overlap(self):
        p = np.array([1.0, 1.0, 0.0, 0.0])
        g = np.array([1.0, 0.0, 1.0, 0.0])
        value, _ = soft_dice(p, g, smooth=0.0)
        assert value == pytest.approx(0.5)

    def test_empty_inputs_with_zero_smooth(self):
        z = np.zeros(5)
        value, grad = soft_dice(z, z, smooth=0.0)
        assert value == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_domain_restriction(self):
        p = np.array([0.9, 0.1, 0.7, 0.3])
        g = np.array([1.0, 0.0, 0.0, 1.0])
        dom = np.array([True, True, False, False])
        v_dom, g_dom = soft_dice(p, g, domain=dom)
        v_ref, _ = soft_dice(p[:2], g[:2])
        assert v_dom == pytest.approx(v_ref)
        np.testing.assert_array_equal(g_dom[~dom], 0.0)

    def test_domain_mask_object_equivalent_to_array(self):
        shape = GridShape((1, 1, 4), (1, 1, 1))
        p = np.array([[[0.9, 0.1, 0.7, 0.3]]])
        g = np.array([[[1.0, 0.0, 0.0, 1.0]]])
        dom = np.array([[[True, False, True, False]]])
        v1, g1 = soft_dice(p, g, domain=dom)
        v2, g2 = soft_dice(p, g, domain=DomainMask(shape, dom, kind="blob"))
        assert v1 == v2
        np.testing.assert_array_equal(g1, g2)

    def test_uniform_weight_scaling_cancels_without_smooth(self):
        rng = np.random.default_rng(3)
        p = rng.random(20)
        g = (rng.random(20) < 0.5).astype(float)
        v1, _ = soft_dice(p, g, weights=np.ones(20), smooth=0.0)
        v2, _ = soft_dice(p, g, weights=np.full(20, 7.0), smooth=0.0)
        assert v1 == pytest.approx(v2, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        p = rng.uniform(0.05, 0.95, size=(2, 3, 3))
        g = (rng.random((2, 3, 3)) < 0.4).astype(float)
        w = rng.uniform(0.5, 3.0, size=(2, 3, 3))
        dom = rng.random((2, 3, 3)) < 0.8
        dom[0, 0, 0] = True
        _, grad = soft_dice(p, g, domain=dom, weights=w)
        num = central_difference_grad(
            lambda arr: soft_dice(arr, g, domain=dom, weights=w)[0], p)
        assert relative_error(grad, num) < 1e-6

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InputError):
            soft_dice(np.zeros(3), np.zeros(4))


class TestBinaryCe:
    def test_coin_flip_prediction(self):
        p = np.full(6, 0.5)
        g = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 0.0])
        value, grad = binary_ce(p, g)
        assert value == pytest.approx(math.log(2.0))
        np.testing.assert_allclose(grad[g == 1], -2.0 / 6.0)
        np.testing.assert_allclose(grad[g == 0], 2.0 / 6.0)

    def test_weighted_mean(self):
        p = np.array([0.5, 0.5])
        g = np.array([1.0, 1.0])
        w = np.array([1.0, 3.0])
        value, _ = binary_ce(p, g, weights=w)
        assert value == pytest.approx(math.log(2.0))  # constant ce, any weights

        p2 = np.array([0.5, 0.25])
        value2, _ = binary_ce(p2, g, weights=w)
        want = (1.0 * math.log(2.0) + 3.0 * math.log(4.0)) / 4.0
        assert value2 == pytest.approx(want)

    def test_weight_map_object(self):
        shape = GridShape((1, 1, 2), (1, 1, 1))
        p = np.array([[[0.5, 0.25]]])
        g = np.array([[[1.0, 1.0]]])
        wmap = WeightMap(shape, np.array([[[1.0, 3.0]]]))
        v1, _ = binary_ce(p, g, weights=wmap)
        v2, _ = binary_ce(p, g, weights=np.array([[[1.0, 3.0]]]))
        assert v1 == v2

    def test_empty_domain(self):
        p = np.array([0.3, 0.7])
        value, grad = binary_ce(p, p, domain=np.zeros(2, dtype=bool))
        assert value == 0.0
        np.testing.assert_array_equal(grad, 0.0)

    def test_clamp_saturates_value_and_zeroes_gradient(self):
        p = np.array([0.0, 1.0])
        g = np.array([1.0, 1.0])
        value, grad = binary_ce(p, g, clip=1e-7)
        # -log(1e-7) on the confident miss, -log(1 - 1e-7) on the hit
        assert value == pytest.approx((-math.log(1e-7) - math.log1p(-1e-7)) / 2.0)
        np.testing.assert_array_equal(grad, 0.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        p = rng.uniform(0.05, 0.95, size=(3, 2, 2))
        g = (rng.random((3, 2, 2)) < 0.5).astype(float)
        w = rng.uniform(0.5, 2.0, size=(3, 2, 2))
        dom = rng.random((3, 2, 2)) < 0.7
        dom[0, 0, 0] = True
        _, grad = binary_ce(p, g, domain=dom, weights=w)
        num = central_difference_grad(
            lambda arr: binary_ce(arr, g, domain=dom, weights=w)[0], p)
        assert relative_error(grad, num) < 1e-6


class TestGlobalDcCe:
    def test_perfect_one_hot_prediction(self):
        labels = _labels((1, 1, 4), [0, 1, 1, 0], 2)
        one_hot = np.stack([(labels.data == c).astype(np.float64) for c in range(2)])
        prob = _prob(labels.shape, one_hot)
        value, _ = global_dc_ce(prob, labels)
        # dice term vanishes; ce is the clip floor
        assert value == pytest.approx(-math.log1p(-1e-7), abs=1e-12)

    def test_hand_computed_two_class_case(self):
        labels = _labels((1, 1, 2), [0, 1], 2)
        p1 = np.array([[[0.25, 0.75]]])
        prob = _prob(labels.shape, [1.0 - p1, p1])
        value, _ = global_dc_ce(prob, labels, smooth=0.0, clip=1e-7)
        dice = 1.0 - 2.0 * 0.75 / (0.25 + 0.75 + 1.0)
        ce = (-math.log(0.75) - math.log(0.75)) / 2.0
        assert value == pytest.approx(dice + ce, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        labels = random_labels(rng, (3, 3, 3), 3, (1, 1, 1))
        prob = random_prob(rng, labels.shape, 3)
        _, grad = global_dc_ce(prob, labels)
        num = central_difference_grad(
            lambda arr: global_dc_ce(ProbVolume(labels.shape, arr, normalized=True), labels)[0],
            prob.data)
        assert relative_error(grad, num) < 1e-6

    def test_grid_mismatch_rejected(self):
        labels = _labels((1, 1, 2), [0, 1], 2)
        other = GridShape((1, 1, 3), (1, 1, 1))
        prob = ProbVolume(other, np.full((2, 1, 1, 3), 0.5), normalized=True)
        with pytest.raises(InputError):
            global_dc_ce(prob, labels)


class TestBlobDomainAndIwl:
    def test_blob_domain_excludes_sibling_components(self):
        labels = _labels((1, 1, 5), [1, 0, 1, 0, 0], 2)
        comps = connected_components(BinaryMask(labels.shape, labels.data == 1))
        assert comps.num_components == 2
        dom1 = blob_domain(comps, 1)
        np.testing.assert_array_equal(dom1.data[0, 0], [True, True, False, True, True])
        dom2 = blob_domain(comps, 2)
        np.testing.assert_array_equal(dom2.data[0, 0], [False, True, True, True, True])
        assert dom1.kind == "blob"

    def test_blob_domain_index_range(self):
        labels = _labels((1, 1, 3), [1, 0, 0], 2)
        comps = connected_components(BinaryMask(labels.shape, labels.data == 1))
        with pytest.raises(InputError):
            blob_domain(comps, 0)
        with pytest.raises(InputError):
            blob_domain(comps, 2)

    def test_iwl_weight_interior(self):
        assert iwl_weight(1000, 10) == pytest.approx(100.0)

    def test_iwl_weight_clamp_boundaries_exact(self):
        # at and below the lower bound
        assert iwl_weight(10, 10) == 1.0
        assert iwl_weight(5, 10) == 1.0
        # exactly at the upper bound, and past it
        assert iwl_weight(200000, 1) == 2e5
        assert iwl_weight(200001, 1) == 2e5
        assert iwl_weight(199999, 1) == 199999.0

    def test_iwl_weight_custom_clamp(self):
        assert iwl_weight(50, 1, clamp=(2.0, 10.0)) == 10.0
        assert iwl_weight(1, 1, clamp=(2.0, 10.0)) == 2.0

    def test_iwl_weight_rejects_empty_component(self):
        with pytest.raises(InputError):
            iwl_weight(10, 0)


class TestShirokikhWeights:
    def test_two_voxel_hand_case(self):
        labels = _labels((1, 1, 2), [0, 1], 2)
        wmap = shirokikh_weights(labels)
        # N=2, one lesion piece of size 1 plus background of size 1:
        # each voxel gets 2 / (2 * 1) = 1
        np.testing.assert_allclose(wmap.data, 1.0)
        assert wmap.provenance == "shirokikh_global"

    def test_four_voxel_hand_case(self):
        labels = _labels((1, 1, 4), [0, 1, 0, 0], 2)
        wmap = shirokikh_weights(labels)
        np.testing.assert_allclose(wmap.data[0, 0], [2 / 3, 2.0, 2 / 3, 2 / 3])

    def test_all_foreground_single_piece(self):
        labels = _labels((1, 1, 4), [1, 1, 1, 1], 2)
        wmap = shirokikh_weights(labels)
        np.testing.assert_allclose(wmap.data, 1.0)

    def test_no_foreground_uniform(self):
        labels = _labels((2, 2, 2), [0] * 8, 2)
        wmap = shirokikh_weights(labels)
        np.testing.assert_allclose(wmap.data, 1.0)

    def test_weights_sum_to_voxel_count(self):
        rng = np.random.default_rng(21)
        for _ in range(15):
            dims = tuple(int(d) for d in rng.integers(3, 12, size=3))
            labels = random_labels(rng, dims, int(rng.integers(2, 5)), (1, 1, 1))
            wmap = shirokikh_weights(labels)
            n = labels.shape.num_voxels
            assert abs(float(wmap.data.sum()) - n) < 1e-9 * n

    def test_exact_rational_mirror(self):
        # re-derive the map with exact arithmetic and confirm the mass
        # identity holds as a theorem, not just numerically
        rng = np.random.default_rng(22)
        labels = random_labels(rng, (6, 6, 6), 3, (1, 1, 1))
        comps = connected_components(BinaryMask(labels.shape, labels.data > 0))
        n = labels.shape.num_voxels
        n_bg = n - int(comps.sizes_voxels.sum())
        pieces = comps.num_components + (1 if n_bg else 0)
        total = Fraction(0)
        for size in comps.sizes_voxels:
            total += int(size) * Fraction(n, pieces * int(size))
        if n_bg:
            total += n_bg * Fraction(n, pieces * n_bg)
        assert total == n

    def test_local_scope_one_map_per_class(self):
        labels = _labels((1, 1, 6), [0, 1, 0, 2, 2, 0], 3)
        maps = shirokikh_weights(labels, scope="local")
        assert set(maps) == {1, 2}
        # class 1: one piece of size 1, bg of size 5 -> 6/(2*1)=3 and 6/(2*5)=0.6
        np.testing.assert_allclose(maps[1].data[0, 0], [0.6, 3.0, 0.6, 0.6, 0.6, 0.6])
        # class 2: one piece of size 2, bg of size 4 -> 6/(2*2)=1.5 and 6/(2*4)=0.75
        np.testing.assert_allclose(maps[2].data[0, 0], [0.75, 0.75, 0.75, 1.5, 1.5, 0.75])
        for m in maps.values():
            assert abs(float(m.data.sum()) - 6.0) < 1e-12

    def test_bad_scope(self):
        labels = _labels((1, 1, 2), [0, 1], 2)
        with pytest.raises(InputError):
            shirokikh_weights(labels, scope="continental")


def _two_class_fixture(rng, dims=(5, 5, 5), num_classes=3):
    """Labels with at least one component in each foreground class."""
    while True:
        labels = random_labels(rng, dims, num_classes, (1, 1, 1))
        present = [c for c in range(1, num_classes) if (labels.data == c).any()]
        if len(present) == num_classes - 1:
            return labels


class TestInstanceLoss:
    def test_requires_instance_variant(self):
        rng = np.random.default_rng(31)
        labels = _two_class_fixture(rng)
        prob = random_prob(rng, labels.shape, 3)
        with pytest.raises(InputError):
            instance_loss(prob, labels, LossConfig(variant="baseline"))

    def test_aggregation_is_mean_of_class_means(self):
        rng = np.random.default_rng(32)
        for variant in ("blob", "cc", "iwl_blob", "iwl_cc"):
            labels = _two_class_fixture(rng)
            prob = random_prob(rng, labels.shape, 3)
            out = instance_loss(prob, labels, LossConfig(variant=variant))
            means = []
            for c, bd in out.per_class.items():
                assert bd.mean == pytest.approx(
                    float(np.mean(bd.component_losses)), abs=1e-12)
                assert bd.num_components == len(bd.component_losses)
                means.append(bd.mean)
            assert out.instance_value == pytest.approx(float(np.mean(means)), abs=1e-12)
            assert out.total == out.instance_value

    def test_ten_vs_one_component_classes_balance(self):
        # class 1 gets ten isolated voxels, class 2 a single one; with a
        # perfect one-hot prediction every component loss is the same ce
        # floor, so both classes must pull with identical strength
        dims = (3, 5, 9)
        data = np.zeros(dims, dtype=np.int32)
        ones = [(0, 0, 0), (0, 0, 4), (0, 0, 8), (0, 2, 2), (0, 2, 6),
                (2, 0, 2), (2, 0, 6), (2, 2, 0), (2, 2, 4), (2, 2, 8)]
        for z, y, x in ones:
            data[z, y, x] = 1
        data[2, 4, 8] = 2
        labels = LabelVolume(GridShape(dims, (1, 1, 1)), data, 3)
        one_hot = np.stack([(data == c).astype(np.float64) for c in range(3)])
        prob = _prob(labels.shape, one_hot)

        out = instance_loss(prob, labels, LossConfig(variant="blob"))
        assert out.per_class[1].num_components == 10
        assert out.per_class[2].num_components == 1
        assert abs(out.per_class[1].mean - out.per_class[2].mean) <= 1e-12
        assert out.instance_value == pytest.approx(out.per_class[1].mean, abs=1e-12)

    def test_no_foreground_means_zero_instance_term(self):
        labels = _labels((2, 2, 2), [0] * 8, 3)
        prob = ProbVolume(labels.shape, np.full((3, 2, 2, 2), 1 / 3), normalized=True)
        out = instance_loss(prob, labels, LossConfig(variant="cc"))
        assert out.instance_value == 0.0
        assert out.per_class == {}
        assert out.active_classes == ()
        np.testing.assert_array_equal(out.grad, 0.0)

    def test_blob_equals_voronoi_for_single_components(self):
        # with one component per class both domains are the whole grid
        rng = np.random.default_rng(33)
        for _ in range(5):
            data = np.zeros((4, 4, 4), dtype=np.int32)
            data[1, 1, 1] = 1
            data[3, 3, 3] = 2
            labels = LabelVolume(GridShape((4, 4, 4), (1, 1, 1)), data, 3)
            prob = random_prob(rng, labels.shape, 3)
            blob = instance_loss(prob, labels, LossConfig(variant="blob"))
            cell = instance_loss(prob, labels, LossConfig(variant="cc"))
            assert abs(blob.instance_value - cell.instance_value) <= 1e-12
            np.testing.assert_allclose(blob.grad, cell.grad, atol=1e-12)

    def test_iwl_weight_one_when_component_fills_domain(self):
        # a component covering the whole grid has |domain|/|S| exactly 1, so
        # iwl collapses onto its unweighted base variant bit for bit
        data = np.ones((3, 3, 3), dtype=np.int32)
        labels = LabelVolume(GridShape((3, 3, 3), (1, 1, 1)), data, 2)
        rng = np.random.default_rng(34)
        prob = random_prob(rng, labels.shape, 2)
        base = instance_loss(prob, labels, LossConfig(variant="blob"))
        iwl = instance_loss(prob, labels, LossConfig(variant="iwl_blob"))
        assert iwl.instance_value == base.instance_value
        np.testing.assert_array_equal(iwl.grad, base.grad)

    def test_iwl_weights_sit_on_component_voxels_only(self):
        # two single-voxel lesions on a 5-voxel line: each blob domain has 4
        # voxels, so the component weight is 4; everything else stays at 1
        labels = _labels((1, 1, 5), [1, 0, 0, 0, 1], 2)
        rng = np.random.default_rng(35)
        prob = random_prob(rng, labels.shape, 2)
        out = instance_loss(prob, labels, LossConfig(variant="iwl_blob"))

        p = prob.data[1]
        g = (labels.data == 1).astype(np.float64)
        doms = [np.array([[[True, True, True, True, False]]]),
                np.array([[[False, True, True, True, True]]])]
        wmaps = [np.array([[[4.0, 1.0, 1.0, 1.0, 1.0]]]),
                 np.array([[[1.0, 1.0, 1.0, 1.0, 4.0]]])]
        for k, (dom, w) in enumerate(zip(doms, wmaps)):
            dval, _ = soft_dice(p, g, dom, w)
            cval, _ = binary_ce(p, g, dom, w)
            assert out.per_class[1].component_losses[k] == dval + cval


class TestCombinedLoss:
    def test_beta_zero_is_bitwise_baseline(self):
        rng = np.random.default_rng(41)
        labels = _two_class_fixture(rng)
        prob = random_prob(rng, labels.shape, 3)
        base = combined_loss(prob, labels, LossConfig(variant="baseline", alpha=1.0))
        for variant in ("blob", "cc", "iwl_blob", "iwl_cc"):
            out = combined_loss(prob, labels,
                                LossConfig(variant=variant, alpha=1.0, beta=0.0))
            assert out.total == base.total
            assert out.global_value == base.global_value
            assert out.instance_value == 0.0
            np.testing.assert_array_equal(out.grad, base.grad)

    def test_baseline_scales_with_alpha(self):
        rng = np.random.default_rng(42)
        labels = _two_class_fixture(rng)
        prob = random_prob(rng, labels.shape, 3)
        one = combined_loss(prob, labels, LossConfig(alpha=1.0))
        three = combined_loss(prob, labels, LossConfig(alpha=3.0))
        assert three.total == pytest.approx(3.0 * one.total, rel=1e-12)

    def test_instance_variant_combines_linearly(self):
        rng = np.random.default_rng(43)
        labels = _two_class_fixture(rng)
        prob = random_prob(rng, labels.shape, 3)
        cfg = LossConfig(variant="blob", alpha=0.5, beta=2.0)
        out = combined_loss(prob, labels, cfg)
        g = combined_loss(prob, labels, LossConfig(variant="baseline")).global_value
        i = instance_loss(prob, labels, LossConfig(variant="blob")).instance_value
        assert out.global_value == pytest.approx(g, abs=1e-15)
        assert out.instance_value == pytest.approx(i, abs=1e-15)
        assert out.total == pytest.approx(0.5 * g + 2.0 * i, rel=1e-12)

    def test_invweight_global_matches_explicit_weighting(self):
        rng = np.random.default_rng(44)
        labels = _two_class_fixture(rng)
        prob = random_prob(rng, labels.shape, 3)
        out = combined_loss(prob, labels, LossConfig(variant="invweight_global"))
        wmap = shirokikh_weights(labels, "global")
        want, want_grad = global_dc_ce(prob, labels, weights=wmap)
        assert out.total == pytest.approx(want, abs=1e-15)
        np.testing.assert_array_equal(out.grad, want_grad)

    def test_invweight_global_hand_case(self):
        # independent arithmetic for a 3-voxel line [0, 1, 0]:
        # N=3, pieces=2 (one lesion, background), w_fg=1.5, w_bg=0.75
        labels = _labels((1, 1, 3), [0, 1, 0], 2)
        p1 = np.array([[[0.2, 0.6, 0.3]]])
        prob = _prob(labels.shape, [1.0 - p1, p1])
        out = combined_loss(prob, labels, LossConfig(variant="invweight_global",
                                                     dice_smooth=0.0))
        w = np.array([0.75, 1.5, 0.75])
        pv = p1[0, 0]
        gv = np.array([0.0, 1.0, 0.0])
        a = float((w * pv * gv).sum())
        b = float((w * pv).sum() + (w * gv).sum())
        dice = 1.0 - 2.0 * a / b
        p_lab = np.array([0.8, 0.6, 0.7])
        ce = float((w * -np.log(p_lab)).sum() / w.sum())
        assert out.total == pytest.approx(dice + ce, rel=1e-12)

    def test_invweight_local_absent_class_degrades_to_uniform(self):
        # when a class has no voxels its one-vs-rest weight map is flat, so
        # with a single populated class out of one the variants agree
        labels = _labels((1, 1, 4), [0, 0, 0, 0], 2)
        prob = ProbVolume(labels.shape, np.stack([
            np.full((1, 1, 4), 0.7), np.full((1, 1, 4), 0.3)]), normalized=True)
        loc = combined_loss(prob, labels, LossConfig(variant="invweight_local"))
        base = combined_loss(prob, labels, LossConfig(variant="baseline"))
        assert loc.total == pytest.approx(base.total, rel=1e-12)

    @pytest.mark.parametrize("variant", VARIANTS)
    def test_gradient_matches_finite_differences(self, variant):
        rng = np.random.default_rng(45)
        labels = _two_class_fixture(rng, dims=(4, 4, 4))
        prob = random_prob(rng, labels.shape, 3)
        cfg = LossConfig(variant=variant, alpha=1.0, beta=2.0)
        out = combined_loss(prob, labels, cfg)
        num = central_difference_grad(
            lambda arr: combined_loss(ProbVolume(labels.shape, arr, normalized=True), labels, cfg).total,
            prob.data)
        assert relative_error(out.grad, num) < 1e-5

    def test_breakdown_json_schema(self):
        rng = np.random.default_rng(46)
        labels = _two_class_fixture(rng)
        prob = random_prob(rng, labels.shape, 3)
        d = combined_loss(prob, labels,
                          LossConfig(variant="iwl_cc", alpha=1.0, beta=0.5)).to_json_dict()
        assert set(d) == {"variant", "alpha", "beta", "global", "instance",
                          "total", "per_class"}
        assert d["variant"] == "iwl_cc"
        for key, entry in d["per_class"].items():
            assert key == str(int(key))
            assert set(entry) == {"K", "components"}
            assert entry["K"] == len(entry["components"])
        assert d["total"] == pytest.approx(d["global"] + 0.5 * d["instance"])
