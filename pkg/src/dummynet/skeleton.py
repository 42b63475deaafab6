"""Body-pose skeletons: 17 keypoints in COCO order.

A skeleton is the pose representation used everywhere in the pipeline:
ingestion filtering, torso normalization for the statistical pose model,
placement into a canvas, and rendering into per-keypoint heatmaps.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegeneratePose

COCO_KEYPOINT_NAMES = (
    "nose",            # 0
    "left_eye",        # 1
    "right_eye",       # 2
    "left_ear",        # 3
    "right_ear",       # 4
    "left_shoulder",   # 5
    "right_shoulder",  # 6
    "left_elbow",      # 7
    "right_elbow",     # 8
    "left_wrist",      # 9
    "right_wrist",     # 10
    "left_hip",        # 11
    "right_hip",       # 12
    "left_knee",       # 13
    "right_knee",      # 14
    "left_ankle",      # 15
    "right_ankle",     # 16
)
NUM_KEYPOINTS = 17

LEFT_SHOULDER, RIGHT_SHOULDER = 5, 6
LEFT_HIP, RIGHT_HIP = 11, 12
LEFT_ANKLE, RIGHT_ANKLE = 15, 16

# Limb segments (keypoint index pairs) of the COCO skeleton graph.
COCO_BONES = (
    (15, 13), (13, 11), (16, 14), (14, 12),       # legs
    (11, 12), (5, 11), (6, 12), (5, 6),           # torso
    (5, 7), (7, 9), (6, 8), (8, 10),              # arms
    (0, 1), (0, 2), (1, 3), (2, 4), (0, 5), (0, 6),  # head/neck
)


@dataclass
class Skeleton:
    """17 keypoints with per-keypoint visibility in an image canvas.

    ``keypoints`` is a (17, 2) float array of (x, y) pixel coordinates and
    ``visibility`` a (17,) bool array. Coordinates of invisible keypoints
    carry no meaning. ``image_size`` is (height, width).
    """

    keypoints: np.ndarray
    visibility: np.ndarray
    image_size: tuple[int, int]

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float64)
        self.visibility = np.asarray(self.visibility, dtype=bool)
        if self.keypoints.shape != (NUM_KEYPOINTS, 2):
            raise ValueError(f"keypoints must be (17, 2), got {self.keypoints.shape}")
        if self.visibility.shape != (NUM_KEYPOINTS,):
            raise ValueError(f"visibility must be (17,), got {self.visibility.shape}")

    @property
    def n_visible(self) -> int:
        return int(self.visibility.sum())

    def visible_points(self) -> np.ndarray:
        return self.keypoints[self.visibility]


@dataclass
class NormalizedSkeleton:
    """Torso-normalized pose: 34-vector of 17 x-values then 17 y-values.

    The torso center (mean of shoulder center and hip center) sits at the
    origin and the torso height (distance between those centers) is 1.
    Entries of invisible keypoints are zeroed.
    """

    coords: np.ndarray
    source_visibility: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        self.source_visibility = np.asarray(self.source_visibility, dtype=bool)
        if self.coords.shape != (2 * NUM_KEYPOINTS,):
            raise ValueError(f"coords must be (34,), got {self.coords.shape}")

    def points(self) -> np.ndarray:
        """(17, 2) view of the coordinate vector."""
        return np.stack([self.coords[:NUM_KEYPOINTS], self.coords[NUM_KEYPOINTS:]], axis=1)


@dataclass
class KeypointHeatmaps:
    """Per-keypoint heatmap stack: (17, H, W) float32 in [0, 1]."""

    tensor: np.ndarray
    sigma: float

    def __post_init__(self):
        self.tensor = np.asarray(self.tensor, dtype=np.float32)
        if self.tensor.ndim != 3 or self.tensor.shape[0] != NUM_KEYPOINTS:
            raise ValueError(f"tensor must be (17, H, W), got {self.tensor.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.tensor.shape[1], self.tensor.shape[2]


def filter_sample(skeleton: Skeleton) -> bool:
    """Keep a training sample only if its pose is informative enough.

    Requires at least 6 of 17 keypoints visible, with at least one hip
    and at least one shoulder among them.
    """
    vis = skeleton.visibility
    if vis.sum() < 6:
        return False
    if not (vis[LEFT_HIP] or vis[RIGHT_HIP]):
        return False
    if not (vis[LEFT_SHOULDER] or vis[RIGHT_SHOULDER]):
        return False
    return True


def _side_center(skeleton: Skeleton, left: int, right: int) -> np.ndarray:
    """Center of a keypoint pair; falls back to the single visible side."""
    vis = skeleton.visibility
    if vis[left] and vis[right]:
        return 0.5 * (skeleton.keypoints[left] + skeleton.keypoints[right])
    if vis[left]:
        return skeleton.keypoints[left].copy()
    if vis[right]:
        return skeleton.keypoints[right].copy()
    raise DegeneratePose("neither side of the pair is visible")


def torso_frame(skeleton: Skeleton) -> tuple[np.ndarray, float]:
    """(torso center, torso height) of a skeleton.

    The shoulder center and hip center use both sides when visible and
    the single visible side otherwise.
    """
    shoulder = _side_center(skeleton, LEFT_SHOULDER, RIGHT_SHOULDER)
    hip = _side_center(skeleton, LEFT_HIP, RIGHT_HIP)
    center = 0.5 * (shoulder + hip)
    height = float(np.linalg.norm(shoulder - hip))
    return center, height


def normalize_skeleton(skeleton: Skeleton) -> NormalizedSkeleton:
    """Map a skeleton to torso-centered, torso-height-1 coordinates.

    Raises DegeneratePose when the shoulder and hip centers coincide.
    """
    center, height = torso_frame(skeleton)
    if height == 0.0:
        raise DegeneratePose("torso height is zero")
    rel = (skeleton.keypoints - center) / height
    rel[~skeleton.visibility] = 0.0
    coords = np.concatenate([rel[:, 0], rel[:, 1]])
    return NormalizedSkeleton(coords=coords, source_visibility=skeleton.visibility.copy())


def place_skeleton(
    normalized: NormalizedSkeleton,
    canvas: tuple[int, int],
    height_frac: float = 0.8,
    anchor: tuple[float, float] | None = None,
) -> Skeleton:
    """Scale a normalized skeleton into an H x W canvas.

    The pose is scaled so that its visible vertical extent covers
    ``height_frac`` of the canvas height. The lowest visible foot keypoint
    (lowest visible keypoint if no ankle is visible) is anchored at
    ``anchor`` = (x, y) in pixel coordinates; by default the bottom center
    of the canvas with a small margin.
    """
    h, w = canvas
    pts = normalized.points()
    vis = normalized.source_visibility
    if not vis.any():
        raise DegeneratePose("no visible keypoints to place")
    visible = pts[vis]
    extent = visible[:, 1].max() - visible[:, 1].min()
    if extent <= 0:
        raise DegeneratePose("zero vertical extent")
    scale = height_frac * h / extent

    ankles = [i for i in (LEFT_ANKLE, RIGHT_ANKLE) if vis[i]]
    if ankles:
        foot_idx = max(ankles, key=lambda i: pts[i, 1])
    else:
        foot_idx = int(np.flatnonzero(vis)[np.argmax(visible[:, 1])])
    if anchor is None:
        anchor = (w / 2.0, 0.95 * h)

    placed = pts * scale
    shift = np.asarray(anchor, dtype=np.float64) - placed[foot_idx]
    placed = placed + shift
    placed[~vis] = 0.0
    return Skeleton(keypoints=placed, visibility=vis.copy(), image_size=(h, w))


def render_heatmaps(skeleton: Skeleton, sigma: float) -> KeypointHeatmaps:
    """Render each visible keypoint as a unit-peak isotropic Gaussian.

    Channel k holds exp(-((x-xk)^2 + (y-yk)^2) / (2 sigma^2)) sampled at
    pixel centers; channels of invisible keypoints are all zero.
    """
    h, w = skeleton.image_size
    if h <= 0 or w <= 0:
        raise ValueError("canvas must be positive-sized")
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    out = np.zeros((NUM_KEYPOINTS, h, w), dtype=np.float32)
    inv = 1.0 / (2.0 * sigma * sigma)
    for k in range(NUM_KEYPOINTS):
        if not skeleton.visibility[k]:
            continue
        x, y = skeleton.keypoints[k]
        out[k] = np.exp(-((xs - x) ** 2 + (ys - y) ** 2) * inv).astype(np.float32)
    return KeypointHeatmaps(tensor=out, sigma=float(sigma))


def load_keypoint_records(path: str | Path) -> list[dict]:
    """Read JSON-lines keypoint records.

    Each line is an object {image_id, bbox, keypoints} where keypoints is
    a flat list of 51 numbers (x, y, v triplets in COCO order). v > 0
    counts as visible.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def skeleton_from_record(record: dict, image_size: tuple[int, int] | None = None) -> Skeleton:
    """Build a Skeleton from one JSONL keypoint record."""
    flat = np.asarray(record["keypoints"], dtype=np.float64)
    if flat.shape != (3 * NUM_KEYPOINTS,):
        raise ValueError(f"expected 51 keypoint numbers, got {flat.shape}")
    trip = flat.reshape(NUM_KEYPOINTS, 3)
    vis = trip[:, 2] > 0
    if image_size is None:
        x0, y0, bw, bh = record["bbox"]
        image_size = (int(np.ceil(y0 + bh)), int(np.ceil(x0 + bw)))
    return Skeleton(keypoints=trip[:, :2], visibility=vis, image_size=image_size)
