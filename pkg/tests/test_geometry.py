import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from facadewin.geometry import (BBox, BinaryMask, CodecError, box_iou_matrix, iou_box, iou_mask,
                                mask_iou_matrix, rle_decode, rle_encode)

from oracles import brute_box_iou, brute_mask_iou


def square_mask(n, x, y, s):
    m = np.zeros((n, n), dtype=bool)
    m[y:y + s, x:x + s] = True
    return BinaryMask.from_dense(m)


class TestBoxIoU:
    def test_identity(self):
        assert iou_box(BBox(0, 0, 10, 10), BBox(0, 0, 10, 10)) == 1.0

    def test_disjoint(self):
        assert iou_box(BBox(0, 0, 10, 10), BBox(20, 20, 5, 5)) == 0.0

    def test_touching_edges_do_not_overlap(self):
        # half-open lattice: [0, 10) and [10, 20) share no pixel
        assert iou_box(BBox(0, 0, 10, 10), BBox(10, 0, 10, 10)) == 0.0

    def test_half_shift(self):
        expected = brute_box_iou((0, 0, 10, 10), (5, 0, 10, 10))
        assert expected == pytest.approx(50 / 150, abs=1e-15)
        assert iou_box(BBox(0, 0, 10, 10), BBox(5, 0, 10, 10)) == pytest.approx(expected, abs=1e-12)

    @settings(max_examples=150, deadline=None)
    @given(st.tuples(*[st.integers(0, 12)] * 2, *[st.integers(1, 10)] * 2),
           st.tuples(*[st.integers(0, 12)] * 2, *[st.integers(1, 10)] * 2))
    def test_matches_pixel_enumeration(self, a, b):
        got = iou_box(BBox(*a), BBox(*b))
        assert got == pytest.approx(brute_box_iou(a, b), abs=1e-12)
        assert got == iou_box(BBox(*b), BBox(*a))
        assert 0.0 <= got <= 1.0

    def test_matrix_agrees_with_scalar(self):
        rng = np.random.default_rng(3)
        boxes = [BBox(*rng.integers(0, 20, 2), *rng.integers(1, 12, 2)) for _ in range(12)]
        mat = box_iou_matrix(boxes, boxes[::-1])
        for i, a in enumerate(boxes):
            for j, b in enumerate(boxes[::-1]):
                assert mat[i, j] == pytest.approx(iou_box(a, b), abs=1e-15)

    def test_invalid_boxes_rejected(self):
        with pytest.raises(ValueError):
            BBox(0, 0, 0, 5)
        with pytest.raises(ValueError):
            BBox(-1, 0, 3, 3)


class TestMaskIoU:
    def test_identical(self):
        m = square_mask(10, 2, 2, 4)
        assert iou_mask(m, m) == 1.0

    def test_disjoint(self):
        assert iou_mask(square_mask(10, 0, 0, 3), square_mask(10, 6, 6, 3)) == 0.0

    def test_offset_squares(self):
        a = np.zeros((10, 10), bool)
        a[0:6, 0:6] = True
        b = np.zeros((10, 10), bool)
        b[0:6, 3:9] = True
        expected = brute_mask_iou(a, b)
        assert expected == pytest.approx(18 / 54)
        assert iou_mask(BinaryMask.from_dense(a), BinaryMask.from_dense(b)) == pytest.approx(expected)

    def test_both_empty_is_one(self):
        e = BinaryMask.from_dense(np.zeros((4, 4), bool))
        assert iou_mask(e, e) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            iou_mask(square_mask(10, 0, 0, 2), square_mask(12, 0, 0, 2))

    def test_box_and_mask_iou_agree_on_filled_boxes(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            a = BBox(*rng.integers(0, 14, 2), *rng.integers(1, 10, 2))
            b = BBox(*rng.integers(0, 14, 2), *rng.integers(1, 10, 2))
            assert iou_mask(a.to_mask(24, 24), b.to_mask(24, 24)) == pytest.approx(iou_box(a, b), abs=1e-12)

    def test_matrix_agrees_with_scalar(self):
        rng = np.random.default_rng(5)
        masks = [BinaryMask.from_dense(rng.random((8, 9)) < 0.3) for _ in range(6)]
        mat = mask_iou_matrix(masks, masks)
        for i in range(6):
            for j in range(6):
                assert mat[i, j] == pytest.approx(iou_mask(masks[i], masks[j]))


class TestCodec:
    def test_all_zero(self):
        assert rle_encode(np.zeros((4, 4), bool)) == [16]

    def test_all_one(self):
        assert rle_encode(np.ones((4, 4), bool)) == [0, 16]

    def test_column_major(self):
        m = np.zeros((2, 3), bool)
        m[0, 1] = True  # column-major flat index 2
        assert rle_encode(m) == [2, 1, 3]

    def test_random_roundtrip(self):
        rng = np.random.default_rng(1234)
        for _ in range(50):
            x = rng.random((16, 16)) < rng.random()
            runs = rle_encode(x)
            assert sum(runs) == 256
            np.testing.assert_array_equal(rle_decode(runs, 16, 16), x)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 12), st.data())
    def test_roundtrip_property(self, h, w, data):
        bits = data.draw(st.lists(st.booleans(), min_size=h * w, max_size=h * w))
        x = np.array(bits, dtype=bool).reshape(h, w)
        m = BinaryMask.from_dense(x)
        np.testing.assert_array_equal(m.dense, x)
        assert m.area == int(x.sum())
        assert BinaryMask.from_coco(m.to_coco()) == m

    def test_bad_runs(self):
        with pytest.raises(CodecError):
            rle_decode([3, 4], 3, 3)
        with pytest.raises(CodecError):
            BinaryMask(3, 3, (10, -1))

    def test_tight_bbox(self):
        m = np.zeros((10, 10), bool)
        m[2:5, 3:9] = True
        assert BinaryMask.from_dense(m).bbox() == BBox(3, 2, 6, 3)
        assert BinaryMask.from_dense(np.zeros((3, 3), bool)).bbox() is None
