import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from facadewin.annotations import WindowAnnotation
from facadewin.geometry import BBox
from facadewin.planner import (DatasetStats, LossWeights, NetworkConfig, PlanningError, Quantiles,
                               anchor_coverage, build_config, combine_losses, dataset_stats,
                               estimate_object_width, normalize_weights, plan_anchors, plan_depth,
                               plan_rois)


def stats(widths=(12.8, 12.8, 12.8), aspects=(1.0, 1.0, 1.0), mean=10.0, side=128):
    return DatasetStats(side, Quantiles(*widths), Quantiles(*aspects), mean, widths[1] / side)


class TestObjectWidth:
    @pytest.mark.parametrize("side,expected", [(128, 12.8), (256, 25.6), (1024, 102.4)])
    def test_ten_percent(self, side, expected):
        assert estimate_object_width(side) == pytest.approx(expected)

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            estimate_object_width(128, 1.5)


class TestDepth:
    def test_examples(self):
        assert plan_depth(12.8) == 2
        assert plan_depth(25.6) == 3

    @pytest.mark.parametrize("w", [3.0, 6.0, 0.5])
    def test_too_small(self, w):
        with pytest.raises(PlanningError, match="too small"):
            plan_depth(w)

    def test_cap(self):
        assert plan_depth(10_000.0) == 5

    def test_boundary_is_strict(self):
        # 24 / 8 == 3 is not > 3
        assert plan_depth(24.0) == 2
        assert plan_depth(24.0001) == 3

    @settings(max_examples=200, deadline=None)
    @given(st.floats(6.0001, 1e4, allow_nan=False))
    def test_rule(self, w):
        k = plan_depth(w)
        assert w / 2 ** k > 3
        assert k == 5 or w / 2 ** (k + 1) <= 3


class TestAnchorsAndRois:
    def test_quantile_scales(self):
        assert plan_anchors(stats((10, 12, 16), (1.0, 1.0, 1.5))) == ([10, 12, 16], [1.0, 1.5])

    def test_identical_windows(self):
        assert plan_anchors(stats((12, 12, 12))) == ([12], [1.0])

    def test_floor(self):
        assert plan_anchors(stats((2, 3, 4)))[0] == [4]

    @pytest.mark.parametrize("mean,expected", [(10, 30), (0, 8), (100, 200), (2.1, 8), (3.1, 10)])
    def test_rois(self, mean, expected):
        assert plan_rois(mean) == expected


class TestLosses:
    def test_unit_weights(self):
        assert combine_losses(LossWeights(), [0.2, 0.1, 0.3, 0.25, 0.15]) == pytest.approx(1.0)

    def test_triple_mask_weight(self):
        assert combine_losses(LossWeights(1, 1, 1, 1, 3), [0.1] * 4 + [0.2]) == pytest.approx(1.0)

    def test_scaling(self):
        k = LossWeights(0.3, 1.2, 0.7, 2.0, 0.4)
        losses = [0.5, 0.1, 0.9, 0.3, 0.2]
        assert combine_losses(k.scaled(3), losses) == pytest.approx(3 * combine_losses(k, losses), rel=1e-15)

    def test_gradient_is_weights(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            k = LossWeights.from_array(rng.uniform(0, 5, 5))
            x = rng.uniform(0.1, 2, 5)
            h = 1e-6
            grad = [(combine_losses(k, x + h * e) - combine_losses(k, x - h * e)) / (2 * h)
                    for e in np.eye(5)]
            np.testing.assert_allclose(grad, k.as_array(), atol=1e-9)

    def test_rejects_bad_losses(self):
        with pytest.raises(ValueError):
            combine_losses(LossWeights(), [0.1, -0.1, 0, 0, 0])
        with pytest.raises(ValueError):
            combine_losses(LossWeights(), [0.1] * 4)

    def test_normalize_examples(self):
        assert normalize_weights(LossWeights(2, 2, 2, 2, 2)).as_array() == pytest.approx([0.2] * 5)
        a = normalize_weights(LossWeights(1, 1, 3, 1, 1))
        b = normalize_weights(LossWeights(5, 5, 15, 5, 5))
        np.testing.assert_allclose(a.as_array(), [1 / 7, 1 / 7, 3 / 7, 1 / 7, 1 / 7], rtol=1e-15)
        np.testing.assert_allclose(a.as_array(), b.as_array(), rtol=1e-15)

    def test_normalize_idempotent(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            k = normalize_weights(LossWeights.from_array(rng.uniform(0, 10, 5)))
            np.testing.assert_allclose(normalize_weights(k).as_array(), k.as_array(), rtol=1e-14)

    def test_all_zero(self):
        with pytest.raises(ValueError):
            normalize_weights(LossWeights(0, 0, 0, 0, 0))


class TestBuildConfig:
    def test_128(self):
        assert build_config(DatasetStats.for_side(128)).k_layer == 2

    def test_256(self):
        assert build_config(DatasetStats.for_side(256)).k_layer == 3

    def test_no_windows(self):
        cfg = build_config(DatasetStats.for_side(128, mean_windows_per_image=0))
        assert cfg.rois_per_image == 8
        assert cfg.p_min == 0.7
        np.testing.assert_allclose(cfg.loss_weights.as_array(), [0.2] * 5)

    def test_deterministic_and_json_roundtrip(self):
        s = stats((9.6, 13.0, 17.2), (0.8, 1.25, 1.6), 14.0)
        a, b = build_config(s), build_config(s)
        assert a == b
        again = NetworkConfig.from_json(json.loads(json.dumps(a.to_json())))
        assert again == a

    def test_median_drives_depth(self):
        cfg = build_config(stats((20, 30, 40), side=256))
        q50 = 30
        assert q50 / 2 ** cfg.k_layer > 3 >= q50 / 2 ** (cfg.k_layer + 1)

    def test_stats_side_must_be_power_ratio(self):
        with pytest.raises(ValueError):
            stats(side=300)

    def test_dataset_stats(self):
        anns = [WindowAnnotation.from_box("a", BBox(0, 0, 10, 10), 128, 128),
                WindowAnnotation.from_box("a", BBox(20, 0, 10, 20), 128, 128),
                WindowAnnotation.from_box("b", BBox(0, 40, 12, 12), 128, 128)]
        s = dataset_stats(anns, 128, n_images=2)
        assert s.mean_windows_per_image == 1.5
        assert s.window_width_quantiles.q50 == pytest.approx(12.0)
        assert s.aspect_quantiles.q75 == pytest.approx(1.5)
        assert s.object_fraction == pytest.approx((10 + math.sqrt(200) + 12) / 3 / 128)

    def test_anchor_coverage_single_window(self):
        ann = WindowAnnotation.from_box("a", BBox(50, 50, 12, 12), 128, 128)
        cfg = build_config(stats((12, 12, 12)))
        assert anchor_coverage(cfg, [ann]) == 1.0
