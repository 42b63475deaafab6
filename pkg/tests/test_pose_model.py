"""Clustering, bounded PCA, sampling, and the model archive."""
import numpy as np
import pytest

from dummynet.errors import TooFewMembers
from dummynet.pose_model import (
    PoseModel,
    cluster_poses,
    cluster_viewpoints,
    fit_pca,
    fit_pose_model,
    project,
    sample_skeleton,
)
from dummynet.skeleton import NUM_KEYPOINTS, NormalizedSkeleton, Skeleton
from dummynet.synthetic import make_person_sample


def skeleton_with_visibility(vis):
    kp = np.tile(np.arange(NUM_KEYPOINTS, dtype=float)[:, None], (1, 2))
    return Skeleton(kp, np.asarray(vis, bool), (32, 32))


def normalized_from(coords, vis=None):
    if vis is None:
        vis = np.ones(NUM_KEYPOINTS, bool)
    return NormalizedSkeleton(np.asarray(coords, float), vis)


class TestViewpointClustering:
    def test_two_patterns_two_clusters(self):
        pat_a = np.ones(NUM_KEYPOINTS, bool)
        pat_b = np.ones(NUM_KEYPOINTS, bool)
        pat_b[:5] = False
        samples = [skeleton_with_visibility(pat_a if i % 2 == 0 else pat_b) for i in range(30)]
        clusters = cluster_viewpoints(samples, 2)
        assert len(clusters) == 2
        patterns = {tuple(c.visibility_pattern) for c in clusters}
        assert patterns == {tuple(pat_a), tuple(pat_b)}
        all_members = sorted(m for c in clusters for m in c.members)
        assert all_members == list(range(30))

    def test_single_sample_single_cluster(self):
        clusters = cluster_viewpoints([skeleton_with_visibility(np.ones(17, bool))], 5)
        assert len(clusters) == 1
        assert clusters[0].members == [0]

    def test_partition_property(self):
        rng = np.random.default_rng(3)
        samples = [make_person_sample(rng)["skeleton"] for _ in range(80)]
        clusters = cluster_viewpoints(samples, 4)
        seen = sorted(m for c in clusters for m in c.members)
        assert seen == list(range(80))

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        samples = [make_person_sample(rng)["skeleton"] for _ in range(40)]
        a = cluster_viewpoints(samples, 3)
        b = cluster_viewpoints(samples, 3)
        assert [c.members for c in a] == [c.members for c in b]


class TestPoseClustering:
    def test_identical_skeletons_one_cluster(self):
        coords = np.linspace(-1, 1, 34)
        members = [normalized_from(coords) for _ in range(10)]
        cluster = cluster_viewpoints([skeleton_with_visibility(np.ones(17, bool))] * 10, 1)[0]
        labels = cluster_poses(cluster, members, 3)
        assert set(labels) == {0}

    def test_separated_groups_recovered(self):
        rng = np.random.default_rng(0)
        group_a = [normalized_from(rng.normal(0, 0.01, 34)) for _ in range(15)]
        group_b = [normalized_from(10 + rng.normal(0, 0.01, 34)) for _ in range(15)]
        members = group_a + group_b
        cluster = cluster_viewpoints(
            [skeleton_with_visibility(np.ones(17, bool))] * 30, 1
        )[0]
        labels = cluster_poses(cluster, members, 2)
        # oracle: exhaustive nearest-centroid assignment must agree
        x = np.stack([m.coords for m in members])
        centroids = np.stack([x[labels == k].mean(axis=0) for k in sorted(set(labels))])
        oracle = np.argmin(((x[:, None] - centroids[None]) ** 2).sum(-1), axis=1)
        assert np.array_equal(oracle, labels)
        assert len(set(labels[:15])) == 1 and len(set(labels[15:])) == 1
        assert labels[0] != labels[-1]

    def test_empty_members_empty_result(self):
        cluster = cluster_viewpoints([skeleton_with_visibility(np.ones(17, bool))], 1)[0]
        cluster.members = []
        assert cluster_poses(cluster, [], 2).size == 0


class TestFitPca:
    def test_too_few_members(self):
        members = [normalized_from(np.random.default_rng(i).normal(size=34)) for i in range(19)]
        with pytest.raises(TooFewMembers):
            fit_pca(members)

    def test_rank_one_line_variance(self):
        rng = np.random.default_rng(0)
        direction = rng.normal(size=34)
        direction /= np.linalg.norm(direction)
        members = [normalized_from(rng.uniform(-3, 3) * direction) for _ in range(50)]
        model = fit_pca(members)
        x = np.stack([m.coords for m in members])
        centered = x - x.mean(axis=0)
        svals = np.linalg.svd(centered, compute_uv=False)  # independent oracle
        explained = svals[0] ** 2 / (svals**2).sum()
        assert explained >= 0.999
        proj_var = ((centered @ model.pca_basis.T) ** 2).sum(axis=0)
        assert proj_var[0] / proj_var.sum() >= 0.999

    def test_variances_match_svd_oracle(self):
        rng = np.random.default_rng(1)
        members = [normalized_from(rng.normal(size=34) * np.linspace(3, 0.1, 34)) for _ in range(60)]
        model = fit_pca(members)
        x = np.stack([m.coords for m in members])
        centered = x - x.mean(axis=0)
        svals = np.linalg.svd(centered, compute_uv=False)
        oracle_var = svals**2 / (len(members) - 1)
        proj = centered @ model.pca_basis.T
        model_var = proj.var(axis=0, ddof=1)
        assert np.abs(model_var - oracle_var[:20]).max() <= 1e-8 * max(1.0, oracle_var[0])

    def test_orthonormal_basis(self):
        rng = np.random.default_rng(2)
        members = [normalized_from(rng.normal(size=34)) for _ in range(40)]
        model = fit_pca(members)
        gram = model.pca_basis @ model.pca_basis.T
        assert np.abs(gram - np.eye(20)).max() <= 1e-6

    def test_reconstruction_error_bounded_by_discarded_svals(self):
        rng = np.random.default_rng(3)
        members = [normalized_from(rng.normal(size=34) * np.linspace(2, 0.05, 34)) for _ in range(60)]
        model = fit_pca(members)
        x = np.stack([m.coords for m in members])
        centered = x - x.mean(axis=0)
        svals = np.linalg.svd(centered, compute_uv=False)
        residual_budget = np.sqrt((svals[20:] ** 2).sum())  # total energy outside top-20
        proj = centered @ model.pca_basis.T
        recon = proj @ model.pca_basis
        err = np.linalg.norm(centered - recon)
        assert err <= residual_budget + 1e-9

    def test_bounds_ordered(self):
        rng = np.random.default_rng(4)
        members = [normalized_from(rng.normal(size=34)) for _ in range(25)]
        model = fit_pca(members)
        assert np.all(model.component_bounds[:, 0] <= model.component_bounds[:, 1])
        assert model.member_count == 25


class TestSampling:
    def _model(self, seed=0, n=40):
        rng = np.random.default_rng(seed)
        members = [normalized_from(rng.normal(size=34) * np.linspace(2, 0.1, 34)) for _ in range(n)]
        return fit_pca(members)

    def test_collapsed_bounds_return_mean(self):
        model = self._model()
        model.component_bounds = np.zeros_like(model.component_bounds)
        out = sample_skeleton(model, np.random.default_rng(0))
        assert np.allclose(out.coords, model.mean)

    def test_projections_inside_bounds(self):
        model = self._model()
        rng = np.random.default_rng(1)
        lo, hi = model.component_bounds[:, 0], model.component_bounds[:, 1]
        for _ in range(10_000):
            out = sample_skeleton(model, rng)
            c = project(model, out)
            assert np.all(c >= lo - 1e-9) and np.all(c <= hi + 1e-9)

    def test_distinct_seeds_distinct_samples(self):
        model = self._model()
        a = sample_skeleton(model, np.random.default_rng(1)).coords
        b = sample_skeleton(model, np.random.default_rng(2)).coords
        assert not np.allclose(a, b)

    def test_visibility_pattern_applied(self):
        model = self._model()
        model.visibility_pattern = np.ones(17, bool)
        model.visibility_pattern[3] = False
        out = sample_skeleton(model, np.random.default_rng(0))
        assert not out.source_visibility[3]
        assert out.coords[3] == 0.0 and out.coords[17 + 3] == 0.0


class TestFullModel:
    def test_fit_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        skeletons = [make_person_sample(rng)["skeleton"] for _ in range(150)]
        model = fit_pose_model(skeletons, viewpoint_clusters=3)
        path = tmp_path / "pose.npz"
        model.save(path)
        loaded = PoseModel.load(path)
        assert len(loaded.clusters) == len(model.clusters)
        for a, b in zip(model.clusters, loaded.clusters):
            assert np.allclose(a.mean, b.mean)
            assert np.allclose(a.pca_basis, b.pca_basis)
            assert np.allclose(a.component_bounds, b.component_bounds)
            assert np.array_equal(a.visibility_pattern, b.visibility_pattern)
            assert a.member_count == b.member_count

    def test_load_rejects_other_format(self, tmp_path):
        path = tmp_path / "bad.npz"
        np.savez(path, format=np.array("something_else"), n_clusters=np.array(0))
        with pytest.raises(ValueError):
            PoseModel.load(path)

    def test_every_sample_in_one_pose_cluster(self):
        rng = np.random.default_rng(6)
        skeletons = [make_person_sample(rng)["skeleton"] for _ in range(100)]
        from dummynet.pose_model import cluster_viewpoints as cv
        from dummynet.skeleton import normalize_skeleton

        clusters = cv(skeletons, 3)
        seen = set()
        for c in clusters:
            norms = [normalize_skeleton(skeletons[i]) for i in c.members]
            labels = cluster_poses(c, norms, 2)
            for member, lab in zip(c.members, labels):
                assert member not in seen
                seen.add(member)
        assert seen == set(range(100))
