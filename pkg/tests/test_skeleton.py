"""Skeleton filtering, normalization, placement, and heatmap rendering."""
import numpy as np
import pytest
from scipy import integrate

from dummynet.errors import DegeneratePose
from dummynet.skeleton import (
    LEFT_HIP,
    LEFT_SHOULDER,
    NUM_KEYPOINTS,
    RIGHT_HIP,
    RIGHT_SHOULDER,
    Skeleton,
    filter_sample,
    normalize_skeleton,
    place_skeleton,
    render_heatmaps,
    skeleton_from_record,
)


def make_skeleton(points, visible, size=(32, 32)):
    kp = np.zeros((NUM_KEYPOINTS, 2))
    vis = np.zeros(NUM_KEYPOINTS, dtype=bool)
    for idx, xy in points.items():
        kp[idx] = xy
    for idx in visible:
        vis[idx] = True
    return Skeleton(keypoints=kp, visibility=vis, image_size=size)


class TestFilterSample:
    def test_all_visible_passes(self):
        s = make_skeleton({i: (1 + i, 1 + i) for i in range(17)}, range(17))
        assert filter_sample(s) is True

    def test_six_visible_with_hip_and_shoulder_passes(self):
        visible = [0, 1, 2, 3, LEFT_HIP, RIGHT_SHOULDER]
        s = make_skeleton({i: (2, 2) for i in visible}, visible)
        assert filter_sample(s) is True

    def test_ten_visible_without_hip_fails(self):
        visible = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]  # shoulders yes, hips no
        s = make_skeleton({i: (2, 2) for i in visible}, visible)
        assert filter_sample(s) is False

    def test_five_visible_fails(self):
        visible = [LEFT_HIP, RIGHT_HIP, LEFT_SHOULDER, RIGHT_SHOULDER, 0]
        s = make_skeleton({i: (2, 2) for i in visible}, visible)
        assert filter_sample(s) is False

    def test_no_shoulder_fails(self):
        visible = [0, 1, 2, 3, 4, LEFT_HIP, RIGHT_HIP]
        s = make_skeleton({i: (2, 2) for i in visible}, visible)
        assert filter_sample(s) is False


class TestNormalize:
    def test_forced_example(self):
        # shoulders at (0,0),(2,0); hips at (0,2),(2,2)
        s = make_skeleton(
            {LEFT_SHOULDER: (0, 0), RIGHT_SHOULDER: (2, 0), LEFT_HIP: (0, 2), RIGHT_HIP: (2, 2)},
            [LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP],
        )
        norm = normalize_skeleton(s)
        pts = norm.points()
        assert pts[LEFT_SHOULDER] == pytest.approx((-0.5, -0.5))
        assert pts[RIGHT_HIP] == pytest.approx((0.5, 0.5))

    def test_scale_and_translation_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            kp = rng.uniform(0, 20, size=(NUM_KEYPOINTS, 2))
            vis = rng.uniform(size=NUM_KEYPOINTS) < 0.8
            vis[[LEFT_SHOULDER, LEFT_HIP]] = True
            base = Skeleton(kp, vis, (64, 64))
            scale = rng.uniform(0.5, 5.0)
            shift = rng.uniform(-10, 10, size=2)
            moved = Skeleton(kp * scale + shift, vis, (64, 64))
            a = normalize_skeleton(base).coords
            b = normalize_skeleton(moved).coords
            assert np.abs(a - b).max() <= 1e-9

    def test_torso_invariants_hold(self):
        rng = np.random.default_rng(1)
        kp = rng.uniform(0, 50, size=(NUM_KEYPOINTS, 2))
        s = Skeleton(kp, np.ones(NUM_KEYPOINTS, bool), (64, 64))
        pts = normalize_skeleton(s).points()
        shoulder = 0.5 * (pts[LEFT_SHOULDER] + pts[RIGHT_SHOULDER])
        hip = 0.5 * (pts[LEFT_HIP] + pts[RIGHT_HIP])
        center = 0.5 * (shoulder + hip)
        assert np.abs(center).max() < 1e-12
        assert np.linalg.norm(shoulder - hip) == pytest.approx(1.0)

    def test_single_visible_side_uses_it(self):
        s = make_skeleton(
            {LEFT_SHOULDER: (1, 0), LEFT_HIP: (1, 4)}, [LEFT_SHOULDER, LEFT_HIP]
        )
        pts = normalize_skeleton(s).points()
        assert pts[LEFT_SHOULDER] == pytest.approx((0.0, -0.5))

    def test_coincident_centers_degenerate(self):
        s = make_skeleton(
            {LEFT_SHOULDER: (3, 3), RIGHT_SHOULDER: (5, 3), LEFT_HIP: (3, 3), RIGHT_HIP: (5, 3)},
            [LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP],
        )
        with pytest.raises(DegeneratePose):
            normalize_skeleton(s)

    def test_invisible_entries_zeroed(self):
        s = make_skeleton(
            {LEFT_SHOULDER: (0, 0), RIGHT_SHOULDER: (2, 0), LEFT_HIP: (0, 2), RIGHT_HIP: (2, 2)},
            [LEFT_SHOULDER, RIGHT_SHOULDER, LEFT_HIP, RIGHT_HIP],
        )
        norm = normalize_skeleton(s)
        pts = norm.points()
        assert np.all(pts[~norm.source_visibility] == 0.0)


class TestRenderHeatmaps:
    def test_unit_peak_at_keypoint_pixel(self):
        s = make_skeleton({0: (8, 8)}, [0], size=(16, 16))
        hm = render_heatmaps(s, sigma=1.0)
        chan = hm.tensor[0]
        assert chan[8, 8] == pytest.approx(1.0)
        assert np.unravel_index(np.argmax(chan), chan.shape) == (8, 8)

    def test_invisible_channel_all_zero(self):
        s = make_skeleton({0: (8, 8)}, [0], size=(16, 16))
        hm = render_heatmaps(s, sigma=1.0)
        assert np.all(hm.tensor[1:] == 0.0)

    def test_values_in_unit_range(self):
        s = make_skeleton({i: (10 + i, 12) for i in range(17)}, range(17), size=(48, 48))
        hm = render_heatmaps(s, sigma=2.0)
        assert hm.tensor.min() >= 0.0 and hm.tensor.max() <= 1.0

    def test_channel_sum_matches_gaussian_integral(self):
        # independent quadrature oracle for the continuous mass
        sigma = 2.0
        s = make_skeleton({0: (32, 32)}, [0], size=(64, 64))
        hm = render_heatmaps(s, sigma=sigma)
        oracle, _ = integrate.dblquad(
            lambda y, x: np.exp(-((x - 32) ** 2 + (y - 32) ** 2) / (2 * sigma**2)),
            0, 64, 0, 64,
        )
        assert hm.tensor[0].sum() == pytest.approx(oracle, rel=0.01)
        assert oracle == pytest.approx(2 * np.pi * sigma**2, rel=0.01)


class TestPlaceSkeleton:
    def test_vertical_extent_and_anchor(self):
        rng = np.random.default_rng(0)
        from dummynet.synthetic import sample_pose

        pose = sample_pose(rng)
        placed = place_skeleton(pose, (64, 64), height_frac=0.8, anchor=(32.0, 60.0))
        vis_pts = placed.visible_points()
        extent = vis_pts[:, 1].max() - vis_pts[:, 1].min()
        assert extent == pytest.approx(0.8 * 64)
        assert vis_pts[:, 1].max() == pytest.approx(60.0)


class TestRecordParsing:
    def test_round_trip_record(self):
        flat = []
        for i in range(17):
            flat += [float(i), float(2 * i), 2 if i % 2 == 0 else 0]
        rec = {"image_id": "a", "bbox": [0, 0, 20, 40], "keypoints": flat}
        s = skeleton_from_record(rec)
        assert s.visibility[0] and not s.visibility[1]
        assert s.keypoints[4][0] == 4.0
        assert s.image_size == (40, 20)
