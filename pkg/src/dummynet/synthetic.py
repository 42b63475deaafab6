"""Synthetic desk-scale data: capsule-figure persons with exact masks.

People are drawn as unions of ellipses along the skeleton limb segments,
so the true foreground mask is analytic. Poses come from a jittered
template, appearances from a flat-color wardrobe, and backgrounds from
smooth random gradients with soft blobs. This stands in for the
large-scale keypoint/mask/person corpora when exercising the pipeline.
"""
from __future__ import annotations

import numpy as np

from .compositing import composite
from .placement import PersonBox, SceneContext, SemanticLabel
from .skeleton import (
    COCO_BONES,
    NUM_KEYPOINTS,
    NormalizedSkeleton,
    Skeleton,
    place_skeleton,
)

# Upright template pose in torso units: torso center at the origin,
# shoulder-hip distance 1, y growing downward like image rows.
POSE_TEMPLATE = np.array(
    [
        (0.00, -0.95),   # nose
        (-0.06, -1.02),  # left_eye
        (0.06, -1.02),   # right_eye
        (-0.13, -0.97),  # left_ear
        (0.13, -0.97),   # right_ear
        (-0.33, -0.50),  # left_shoulder
        (0.33, -0.50),   # right_shoulder
        (-0.44, -0.05),  # left_elbow
        (0.44, -0.05),   # right_elbow
        (-0.50, 0.38),   # left_wrist
        (0.50, 0.38),    # right_wrist
        (-0.22, 0.50),   # left_hip
        (0.22, 0.50),    # right_hip
        (-0.26, 1.15),   # left_knee
        (0.26, 1.15),    # right_knee
        (-0.28, 1.80),   # left_ankle
        (0.28, 1.80),    # right_ankle
    ],
    dtype=np.float64,
)

VISIBILITY_PATTERNS = {
    "full": np.ones(NUM_KEYPOINTS, dtype=bool),
    "no_left_arm": np.array([i not in (7, 9) for i in range(NUM_KEYPOINTS)]),
    "no_face_sides": np.array([i not in (3, 4) for i in range(NUM_KEYPOINTS)]),
}


def _rotate(points: np.ndarray, pivot: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    rel = points - pivot
    return pivot + rel @ np.array([[c, s], [-s, c]])


def sample_pose(rng: np.random.Generator, pattern: str = "full") -> NormalizedSkeleton:
    """Template pose with random limb swings, in normalized coordinates."""
    pts = POSE_TEMPLATE.copy()
    for shoulder, elbow, wrist in ((5, 7, 9), (6, 8, 10)):
        swing = rng.uniform(-0.7, 0.7)
        pts[[elbow, wrist]] = _rotate(pts[[elbow, wrist]], pts[shoulder], swing)
        bend = rng.uniform(-0.5, 0.5)
        pts[[wrist]] = _rotate(pts[[wrist]], pts[elbow], bend)
    for hip, knee, ankle in ((11, 13, 15), (12, 14, 16)):
        swing = rng.uniform(-0.35, 0.35)
        pts[[knee, ankle]] = _rotate(pts[[knee, ankle]], pts[hip], swing)
        bend = rng.uniform(-0.3, 0.3)
        pts[[ankle]] = _rotate(pts[[ankle]], pts[knee], bend)
    lean = rng.uniform(-0.08, 0.08)
    pts = _rotate(pts, np.zeros(2), lean)

    vis = VISIBILITY_PATTERNS[pattern].copy()
    pts = pts.copy()
    pts[~vis] = 0.0
    coords = np.concatenate([pts[:, 0], pts[:, 1]])
    return NormalizedSkeleton(coords=coords, source_visibility=vis)


def _ellipse(canvas: tuple[int, int], p0: np.ndarray, p1: np.ndarray, width: float) -> np.ndarray:
    """Boolean mask of an ellipse spanning segment p0-p1 with given width."""
    h, w = canvas
    center = 0.5 * (p0 + p1)
    d = p1 - p0
    length = float(np.hypot(d[0], d[1]))
    if length < 1e-9:
        ct, st = 1.0, 0.0
        a = width
    else:
        ct, st = d[0] / length, d[1] / length
        a = length / 2 + width
    b = width
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    dx = xs - center[0]
    dy = ys - center[1]
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


# bone index pairs grouped by body part for rendering
_ARM_BONES = ((5, 7), (7, 9), (6, 8), (8, 10))
_LEG_BONES = ((11, 13), (13, 15), (12, 14), (14, 16))
_TORSO_SPANS = ((5, 12), (6, 11))


def analytic_person_mask(skeleton: Skeleton, canvas: tuple[int, int] | None = None) -> np.ndarray:
    """Exact foreground mask: union of limb, torso, and head ellipses."""
    if canvas is None:
        canvas = skeleton.image_size
    pts = skeleton.keypoints
    vis = skeleton.visibility
    torso = _torso_height_px(skeleton)
    mask = np.zeros(canvas, dtype=bool)
    for i, j in _ARM_BONES + _LEG_BONES:
        if vis[i] and vis[j]:
            mask |= _ellipse(canvas, pts[i], pts[j], 0.10 * torso)
    for i, j in _TORSO_SPANS:
        if vis[i] and vis[j]:
            mask |= _ellipse(canvas, pts[i], pts[j], 0.17 * torso)
    if vis[0]:
        mask |= _ellipse(canvas, pts[0], pts[0], 0.24 * torso)
    return mask.astype(np.float32)


def _torso_height_px(skeleton: Skeleton) -> float:
    pts, vis = skeleton.keypoints, skeleton.visibility
    sh = [i for i in (5, 6) if vis[i]]
    hp = [i for i in (11, 12) if vis[i]]
    shoulder = pts[sh].mean(axis=0)
    hip = pts[hp].mean(axis=0)
    return float(np.linalg.norm(shoulder - hip))


def sample_wardrobe(rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Flat part colors: shirt, pants, and a skin tone."""
    skin_tones = np.array([(0.95, 0.80, 0.68), (0.78, 0.60, 0.48), (0.55, 0.40, 0.30)])
    return {
        "shirt": rng.uniform(0.1, 1.0, size=3),
        "pants": rng.uniform(0.05, 0.9, size=3),
        "skin": skin_tones[rng.integers(len(skin_tones))],
    }


def render_person(
    skeleton: Skeleton,
    wardrobe: dict[str, np.ndarray],
    canvas: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(person image, exact mask); the image is black outside the mask."""
    if canvas is None:
        canvas = skeleton.image_size
    pts = skeleton.keypoints
    vis = skeleton.visibility
    torso = _torso_height_px(skeleton)
    image = np.zeros(canvas + (3,), dtype=np.float64)

    def paint(region: np.ndarray, color: np.ndarray) -> None:
        image[region] = color

    for i, j in _ARM_BONES:
        if vis[i] and vis[j]:
            paint(_ellipse(canvas, pts[i], pts[j], 0.10 * torso), wardrobe["shirt"])
    for i, j in _LEG_BONES:
        if vis[i] and vis[j]:
            paint(_ellipse(canvas, pts[i], pts[j], 0.10 * torso), wardrobe["pants"])
    for i, j in _TORSO_SPANS:
        if vis[i] and vis[j]:
            paint(_ellipse(canvas, pts[i], pts[j], 0.17 * torso), wardrobe["shirt"])
    if vis[0]:
        paint(_ellipse(canvas, pts[0], pts[0], 0.24 * torso), wardrobe["skin"])
    mask = analytic_person_mask(skeleton, canvas)
    return image, mask


def random_background(rng: np.random.Generator, size: tuple[int, int], brightness: float = 1.0) -> np.ndarray:
    """Cluttered background: gradient, soft blobs, pole-like distractors.

    The elongated distractor shapes appear in both classes, so a person
    classifier cannot get away with detecting any solid foreground blob.
    """
    h, w = size
    c0 = rng.uniform(0.1, 0.9, size=3)
    c1 = rng.uniform(0.1, 0.9, size=3)
    direction = rng.uniform(-1, 1, size=2)
    direction /= np.linalg.norm(direction) + 1e-9
    ys = np.arange(h)[:, None] / max(h - 1, 1)
    xs = np.arange(w)[None, :] / max(w - 1, 1)
    t = (direction[0] * xs + direction[1] * ys + 1) / 2
    img = c0[None, None] + (c1 - c0)[None, None] * t[..., None]
    for _ in range(rng.integers(1, 5)):
        cx, cy = rng.uniform(0, w), rng.uniform(0, h)
        radius = rng.uniform(0.1, 0.35) * max(h, w)
        color = rng.uniform(0, 1, size=3)
        weight = np.exp(-((xs * (w - 1) - cx) ** 2 + (ys * (h - 1) - cy) ** 2) / (2 * radius**2))
        img = img * (1 - 0.5 * weight[..., None]) + color[None, None] * 0.5 * weight[..., None]
    for _ in range(rng.integers(0, 4)):
        p0 = np.array([rng.uniform(0, w), rng.uniform(0, h)])
        angle = rng.uniform(0, np.pi)
        length = rng.uniform(0.25, 0.9) * h
        p1 = p0 + length * np.array([np.cos(angle), np.sin(angle)])
        width = rng.uniform(0.02, 0.09) * h
        region = _ellipse((h, w), p0, p1, width)
        img[region] = rng.uniform(0, 1, size=3)
    img += rng.normal(0, 0.02, size=img.shape)
    return np.clip(img * brightness, 0.0, 1.0)


def make_person_sample(
    rng: np.random.Generator,
    size: int = 64,
    pattern: str | None = None,
    wardrobe: dict[str, np.ndarray] | None = None,
    pose: NormalizedSkeleton | None = None,
    background: np.ndarray | None = None,
    brightness: float = 1.0,
) -> dict:
    """One composited person image with its skeleton, mask, and wardrobe."""
    if pattern is None:
        pattern = "full" if rng.uniform() < 0.7 else str(rng.choice(["no_left_arm", "no_face_sides"]))
    if pose is None:
        pose = sample_pose(rng, pattern)
    height_frac = rng.uniform(0.45, 0.85)
    anchor = (rng.uniform(0.3, 0.7) * size, rng.uniform(0.88, 0.97) * size)
    skeleton = place_skeleton(pose, (size, size), height_frac=height_frac, anchor=anchor)
    if wardrobe is None:
        wardrobe = sample_wardrobe(rng)
    person, mask = render_person(skeleton, wardrobe)
    if background is None:
        background = random_background(rng, (size, size), brightness=brightness)
    image = composite(mask, person, background)
    return {
        "image": image.astype(np.float64),
        "skeleton": skeleton,
        "mask": mask,
        "wardrobe": wardrobe,
        "background": background,
    }


def toy_classification_data(
    rng: np.random.Generator,
    n_pos: int,
    n_neg: int,
    size: int = 64,
) -> tuple[np.ndarray, np.ndarray]:
    """(positives, negatives) image stacks for the tiny classifier task."""
    pos = np.stack([make_person_sample(rng, size)["image"] for _ in range(n_pos)])
    neg = np.stack([random_background(rng, (size, size)) for _ in range(n_neg)])
    return pos, neg


def make_scene(
    rng: np.random.Generator,
    size: tuple[int, int] = (96, 128),
    n_existing: int = 1,
    horizon_frac: float = 0.45,
) -> SceneContext:
    """Scene with walkable lower region and optional existing persons."""
    h, w = size
    image = random_background(rng, size)
    semantics = np.full(size, int(SemanticLabel.OTHER), dtype=np.int64)
    horizon = int(horizon_frac * h)
    labels = (SemanticLabel.GROUND, SemanticLabel.ROAD, SemanticLabel.SIDEWALK)
    band = (h - horizon) // len(labels) or 1
    for i, lab in enumerate(labels):
        top = horizon + i * band
        bottom = h if i == len(labels) - 1 else min(h, top + band)
        semantics[top:bottom] = int(lab)
    persons = []
    for _ in range(n_existing):
        y_bottom = float(rng.integers(2, max(3, h - horizon - 2)))
        height = float(rng.uniform(0.3, 0.6) * h)
        persons.append(PersonBox(x=float(rng.uniform(0.15, 0.85) * w), y_bottom=y_bottom, height=height))
    return SceneContext(image=image, semantics=semantics, persons=persons)


def height_samples_for_scene(scene: SceneContext, rng: np.random.Generator, n: int = 64) -> list[tuple[float, float]]:
    """Plausible (y_bottom, height) pairs: people farther up are smaller."""
    h = scene.height
    samples = []
    for _ in range(n):
        y = float(rng.uniform(0, 0.5 * h))
        height = 0.55 * h - 0.8 * y + float(rng.normal(0, 1.0))
        samples.append((y, max(4.0, height)))
    return samples
