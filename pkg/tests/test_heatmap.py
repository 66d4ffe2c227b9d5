import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fasthand.errors import ContractError
from fasthand.geometry import BoundingBox, CropTransform
from fasthand.heatmap import SKELETON_EDGES, KeypointSet, decode_peaks, map_keypoints, render_gaussian


def _kps(xy, frame="heatmap", size=None):
    return KeypointSet(np.asarray(xy, float), frame=frame, size=size)


def _random_heatmap_kps(rng, n=21):
    return _kps(rng.uniform(0, 63, size=(n, 2)))


class TestDecode:
    def test_delta_peak(self):
        h = np.zeros((64, 64, 21), np.float32)
        h[20, 10, :] = 1.0  # row 20, column 10
        k = decode_peaks(h, subpixel=True)
        np.testing.assert_array_equal(k.xy, np.tile([10.0, 20.0], (21, 1)))
        np.testing.assert_array_equal(k.confidence, 1.0)
        assert k.frame == "heatmap"

    def test_all_zero_channel(self):
        k = decode_peaks(np.zeros((64, 64, 21)), subpixel=True)
        np.testing.assert_array_equal(k.xy, 0.0)
        np.testing.assert_array_equal(k.confidence, 0.0)

    def test_constant_channel_confidence_zero(self):
        k = decode_peaks(np.full((64, 64, 21), 0.7))
        np.testing.assert_array_equal(k.xy, 0.0)
        np.testing.assert_array_equal(k.confidence, 0.0)

    def test_tie_break_row_then_column(self):
        h = np.zeros((64, 64, 21))
        h[5, 30, 0] = h[5, 7, 0] = h[9, 1, 0] = 1.0
        assert tuple(decode_peaks(h, subpixel=False).xy[0]) == (7.0, 5.0)

    def test_quarter_shift_toward_larger_neighbour(self):
        h = np.zeros((64, 64, 21))
        h[10, 10, 0], h[10, 11, 0], h[9, 10, 0] = 1.0, 0.6, 0.2
        xy = decode_peaks(h, subpixel=True).xy[0]
        assert tuple(xy) == (10.25, 9.75)

    def test_gaussian_round_trip_known_point(self):
        k = _kps(np.tile([10.0, 20.0], (21, 1)))
        h = render_gaussian(k, 2.0)
        assert np.abs(decode_peaks(h, subpixel=False).xy - k.xy).max() <= 0.5
        assert np.abs(decode_peaks(h, subpixel=True).xy - k.xy).max() <= 0.25

    @pytest.mark.parametrize("sigma", [1.0, 2.0, 3.0])
    def test_round_trip_random(self, rng, sigma):
        for _ in range(20):
            k = _random_heatmap_kps(rng)
            h = render_gaussian(k, sigma)
            assert np.abs(decode_peaks(h, subpixel=False).xy - k.xy).max() <= 0.5
            assert np.abs(decode_peaks(h, subpixel=True).xy - k.xy).max() <= 0.25

    @given(st.floats(0.01, 100), st.floats(-50, 50), st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_affine_invariance(self, a, b, seed):
        rng = np.random.default_rng(seed)
        h = rng.uniform(0, 1, (64, 64, 21))
        base, scaled = decode_peaks(h), decode_peaks(a * h + b)
        np.testing.assert_array_equal(base.xy, scaled.xy)
        np.testing.assert_allclose(base.confidence, scaled.confidence, atol=1e-9)

    def test_confidence_in_unit_interval(self, rng):
        c = decode_peaks(rng.normal(size=(64, 64, 21))).confidence
        assert ((c >= 0) & (c <= 1)).all()

    def test_wrong_channel_count(self):
        with pytest.raises(ContractError):
            decode_peaks(np.zeros((64, 64, 20)))


class TestRender:
    def test_cell_centre_peak_is_one(self):
        k = _kps(np.tile([17.0, 40.0], (21, 1)))
        h = render_gaussian(k, 2.0)
        assert h[40, 17, 0] == 1.0 and h[..., 0].max() == 1.0

    def test_tiny_sigma_is_one_hot(self):
        h = render_gaussian(_kps(np.tile([3.0, 5.0], (21, 1))), 0.1)
        assert h[5, 3, 0] == 1.0
        assert np.count_nonzero(h[..., 0] > 1e-6) == 1

    def test_out_of_frame_is_zero_channel(self):
        xy = np.tile([3.0, 5.0], (21, 1))
        xy[4] = (70.0, 5.0)
        h = render_gaussian(_kps(xy), 2.0)
        assert not h[..., 4].any() and h[..., 3].any()

    def test_bad_sigma(self):
        with pytest.raises(ContractError):
            render_gaussian(_kps(np.zeros((21, 2))), 0.0)


class TestMapKeypoints:
    def test_heatmap_to_roi(self):
        k = map_keypoints(_kps(np.full((21, 2), 16.0)), None, "roi")
        assert k.frame == "roi"
        np.testing.assert_array_equal(k.xy, 64.0)

    def test_identity_crop(self, rng):
        xy = rng.uniform(0, 255, (21, 2))
        t = CropTransform.for_square(BoundingBox(0, 0, 256, 256), image_size=(256, 256))
        k = map_keypoints(_kps(xy, "roi"), t, "image")
        np.testing.assert_array_equal(k.xy, xy)
        assert k.size == (256, 256)

    def test_round_trip_random_boxes(self, rng):
        for _ in range(50):
            x1, y1 = rng.uniform(-50, 500, 2)
            side = rng.uniform(5, 400)
            t = CropTransform.for_square(BoundingBox(x1, y1, x1 + side, y1 + side), image_size=(640, 480))
            img = _kps(rng.uniform(0, 480, (21, 2)), "image", (640, 480))
            back = map_keypoints(map_keypoints(img, t, "roi"), t, "image")
            np.testing.assert_allclose(back.xy, img.xy, atol=1e-6)
            hm = map_keypoints(img, t, "heatmap")
            np.testing.assert_allclose(map_keypoints(hm, t, "image").xy, img.xy, atol=1e-6)

    def test_degenerate_transform(self):
        with pytest.raises(ContractError):
            CropTransform(0.0, 0, 0)

    def test_image_frame_needs_transform(self):
        with pytest.raises(ContractError):
            map_keypoints(_kps(np.zeros((21, 2)), "roi"), None, "image")


def test_keypointset_needs_21():
    with pytest.raises(ContractError):
        KeypointSet(np.zeros((20, 2)), frame="heatmap")


def test_skeleton_has_20_bones():
    assert len(SKELETON_EDGES) == 20
    assert {j for e in SKELETON_EDGES for j in e} == set(range(21))
