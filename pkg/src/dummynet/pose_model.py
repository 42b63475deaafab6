"""Statistical pose model: two-stage clustering plus bounded per-cluster PCA.

Stage one groups skeletons by their keypoint visibility pattern
(self-occlusion, roughly the viewpoint). Stage two clusters the torso
normalized 34-dim coordinate vectors inside each viewpoint group. Each
pose cluster with enough members gets a 20-component PCA whose projection
bounds define the sampling box for novel skeletons.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.cluster import Birch
from sklearn.exceptions import ConvergenceWarning

from .errors import TooFewMembers
from .skeleton import NUM_KEYPOINTS, NormalizedSkeleton, Skeleton, normalize_skeleton

N_COMPONENTS = 20
MIN_CLUSTER_MEMBERS = 20

STORE_FORMAT = "pose_model_v1"


@dataclass
class ViewpointCluster:
    """Group of samples sharing one keypoint-visibility pattern."""

    id: int
    visibility_pattern: np.ndarray
    members: list[int]


@dataclass
class PoseClusterModel:
    """Bounded PCA model of one pose cluster.

    ``pca_basis`` has orthonormal rows (components); ``component_bounds``
    holds the (min, max) of member projections per component. Sampling
    draws coefficients uniformly inside those bounds.
    """

    viewpoint_id: int
    pose_cluster_id: int
    mean: np.ndarray
    pca_basis: np.ndarray
    component_bounds: np.ndarray
    member_count: int
    visibility_pattern: np.ndarray

    @property
    def key(self) -> str:
        return f"v{self.viewpoint_id:04d}_p{self.pose_cluster_id:04d}"


def _run_birch(x: np.ndarray, target_clusters: int, threshold: float, branching_factor: int) -> np.ndarray:
    """Birch labels for rows of x, capped to the number of distinct rows."""
    n_unique = np.unique(x, axis=0).shape[0]
    k = max(1, min(target_clusters, n_unique))
    if k == 1 or len(x) == 1:
        return np.zeros(len(x), dtype=int)
    model = Birch(threshold=threshold, branching_factor=branching_factor, n_clusters=k)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        labels = model.fit_predict(x)
    # relabel to dense 0..m-1 in first-appearance order for determinism
    _, dense = np.unique(labels, return_inverse=True)
    order = {}
    out = np.empty_like(dense)
    for i, lab in enumerate(dense):
        if lab not in order:
            order[lab] = len(order)
        out[i] = order[lab]
    return out


def cluster_viewpoints(
    samples: list[Skeleton],
    target_clusters: int,
    threshold: float = 0.5,
    branching_factor: int = 50,
) -> list[ViewpointCluster]:
    """Cluster skeletons by their 17-entry binary visibility vector.

    Every sample lands in exactly one cluster. The cluster's pattern is
    the per-keypoint majority visibility of its members.
    """
    if not samples:
        raise ValueError("samples must be nonempty")
    vecs = np.stack([s.visibility.astype(float) for s in samples])
    labels = _run_birch(vecs, target_clusters, threshold, branching_factor)
    clusters = []
    for cid in range(labels.max() + 1):
        idx = np.flatnonzero(labels == cid)
        pattern = vecs[idx].mean(axis=0) >= 0.5
        clusters.append(ViewpointCluster(id=cid, visibility_pattern=pattern, members=[int(i) for i in idx]))
    return clusters


def cluster_poses(
    cluster: ViewpointCluster,
    normalized: list[NormalizedSkeleton],
    target_clusters: int,
    threshold: float = 0.5,
    branching_factor: int = 50,
) -> np.ndarray:
    """Partition a viewpoint cluster's members by normalized pose.

    ``normalized`` is aligned with ``cluster.members``; the returned label
    array has one pose-cluster id per member.
    """
    if len(normalized) != len(cluster.members):
        raise ValueError("normalized poses must align with cluster members")
    if not normalized:
        return np.zeros(0, dtype=int)
    x = np.stack([n.coords for n in normalized])
    return _run_birch(x, target_clusters, threshold, branching_factor)


def default_pose_cluster_count(n_members: int) -> int:
    """One pose cluster per 200 members, at least one."""
    return max(1, math.ceil(n_members / 200))


def fit_pca(
    members: list[NormalizedSkeleton],
    viewpoint_id: int = 0,
    pose_cluster_id: int = 0,
    visibility_pattern: np.ndarray | None = None,
) -> PoseClusterModel:
    """Fit the bounded 20-component PCA of a pose cluster.

    Uses the eigendecomposition of the member covariance; components are
    sorted by decreasing variance and sign-fixed so the largest-magnitude
    entry of each row is positive. Raises TooFewMembers below 20 members.
    """
    n = len(members)
    if n < MIN_CLUSTER_MEMBERS:
        raise TooFewMembers(f"need at least {MIN_CLUSTER_MEMBERS} members, got {n}")
    x = np.stack([m.coords for m in members])
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:N_COMPONENTS]
    basis = eigvecs[:, order].T
    flip = np.sign(basis[np.arange(N_COMPONENTS), np.abs(basis).argmax(axis=1)])
    basis = basis * flip[:, None]
    proj = centered @ basis.T
    bounds = np.stack([proj.min(axis=0), proj.max(axis=0)], axis=1)
    if visibility_pattern is None:
        visibility_pattern = np.stack([m.source_visibility for m in members]).mean(axis=0) >= 0.5
    return PoseClusterModel(
        viewpoint_id=viewpoint_id,
        pose_cluster_id=pose_cluster_id,
        mean=mean,
        pca_basis=basis,
        component_bounds=bounds,
        member_count=n,
        visibility_pattern=np.asarray(visibility_pattern, bool),
    )


def sample_skeleton(model: PoseClusterModel, rng: np.random.Generator) -> NormalizedSkeleton:
    """Draw a novel normalized skeleton from a pose cluster model.

    Coefficients are uniform inside the per-component bounds; the result
    is mean + basis^T c with the cluster's visibility pattern applied.
    """
    lo = model.component_bounds[:, 0]
    hi = model.component_bounds[:, 1]
    c = rng.uniform(lo, hi)
    coords = model.mean + model.pca_basis.T @ c
    vis = model.visibility_pattern
    coords = coords.copy()
    coords[:NUM_KEYPOINTS][~vis] = 0.0
    coords[NUM_KEYPOINTS:][~vis] = 0.0
    return NormalizedSkeleton(coords=coords, source_visibility=vis.copy())


def project(model: PoseClusterModel, normalized: NormalizedSkeleton) -> np.ndarray:
    """Coefficients of a normalized skeleton in the model's basis."""
    return model.pca_basis @ (normalized.coords - model.mean)


@dataclass
class PoseModel:
    """The full fitted pose model: all bounded pose-cluster PCAs."""

    clusters: list[PoseClusterModel] = field(default_factory=list)

    def __post_init__(self):
        if not self.clusters:
            raise ValueError("pose model needs at least one cluster")

    def cluster_weights(self) -> np.ndarray:
        counts = np.array([c.member_count for c in self.clusters], dtype=np.float64)
        return counts / counts.sum()

    def sample(self, rng: np.random.Generator, cluster_index: int | None = None) -> tuple[NormalizedSkeleton, int]:
        """Sample a skeleton, choosing a cluster by member count by default."""
        if cluster_index is None:
            cluster_index = int(rng.choice(len(self.clusters), p=self.cluster_weights()))
        return sample_skeleton(self.clusters[cluster_index], rng), cluster_index

    def save(self, path: str | Path) -> None:
        """Write the whole model to one npz archive."""
        arrays: dict[str, np.ndarray] = {
            "format": np.array(STORE_FORMAT),
            "n_clusters": np.array(len(self.clusters)),
        }
        for i, c in enumerate(self.clusters):
            p = f"c{i:05d}_"
            arrays[p + "ids"] = np.array([c.viewpoint_id, c.pose_cluster_id, c.member_count])
            arrays[p + "mean"] = c.mean
            arrays[p + "basis"] = c.pca_basis
            arrays[p + "bounds"] = c.component_bounds
            arrays[p + "pattern"] = c.visibility_pattern
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "PoseModel":
        with np.load(path, allow_pickle=False) as data:
            fmt = str(data["format"])
            if fmt != STORE_FORMAT:
                raise ValueError(f"unsupported pose model format {fmt!r}")
            clusters = []
            for i in range(int(data["n_clusters"])):
                p = f"c{i:05d}_"
                ids = data[p + "ids"]
                clusters.append(
                    PoseClusterModel(
                        viewpoint_id=int(ids[0]),
                        pose_cluster_id=int(ids[1]),
                        member_count=int(ids[2]),
                        mean=data[p + "mean"],
                        pca_basis=data[p + "basis"],
                        component_bounds=data[p + "bounds"],
                        visibility_pattern=data[p + "pattern"].astype(bool),
                    )
                )
        return cls(clusters=clusters)


def fit_pose_model(
    skeletons: list[Skeleton],
    viewpoint_clusters: int = 8,
    pose_clusters_per_viewpoint: int | None = None,
    threshold: float = 0.5,
    branching_factor: int = 50,
) -> PoseModel:
    """Fit the full pose model from raw skeletons.

    Filters nothing (callers apply the visibility filter first), clusters
    viewpoints, then poses within each viewpoint, and keeps every pose
    cluster with at least 20 members.
    """
    normalized = [normalize_skeleton(s) for s in skeletons]
    vclusters = cluster_viewpoints(skeletons, viewpoint_clusters, threshold, branching_factor)
    models: list[PoseClusterModel] = []
    for vc in vclusters:
        member_norms = [normalized[i] for i in vc.members]
        k = pose_clusters_per_viewpoint or default_pose_cluster_count(len(vc.members))
        labels = cluster_poses(vc, member_norms, k, threshold, branching_factor)
        for pid in range(labels.max() + 1 if len(labels) else 0):
            group = [member_norms[j] for j in np.flatnonzero(labels == pid)]
            if len(group) < MIN_CLUSTER_MEMBERS:
                continue
            models.append(fit_pca(group, vc.id, pid, vc.visibility_pattern))
    if not models:
        raise TooFewMembers("no pose cluster reached the minimum member count")
    return PoseModel(clusters=models)
