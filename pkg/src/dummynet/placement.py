"""Scene placement: where and how large to insert a synthesized person.

Placement is constrained by scene semantics (people stand on ground, road
or sidewalk), by a linear height-vs-row model fitted to existing
annotations, and by an occlusion rule protecting persons taller than
50 px. Vertical positions ``y`` are measured in pixels from the BOTTOM of
the image, increasing upward; image row = H - 1 - y.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .compositing import composite
from .errors import (
    DegenerateFit,
    EmptyMask,
    NoValidPlacement,
    OutOfBounds,
    ShapeMismatch,
)

PROTECTED_MIN_HEIGHT = 50.0
# width/height ratio used to turn (x, y_bottom, height) into a box
PERSON_ASPECT = 0.41


class SemanticLabel(IntEnum):
    OTHER = 0
    GROUND = 1
    ROAD = 2
    SIDEWALK = 3


WALKABLE = (SemanticLabel.GROUND, SemanticLabel.ROAD, SemanticLabel.SIDEWALK)


@dataclass
class PersonBox:
    """Existing person annotation: footprint center x, bottom y, height.

    ``y_bottom`` is measured from the image bottom. Width defaults to the
    standard pedestrian aspect ratio when not annotated.
    """

    x: float
    y_bottom: float
    height: float
    width: float | None = None

    def to_xyxy(self, image_height: int) -> tuple[float, float, float, float]:
        w = self.width if self.width is not None else PERSON_ASPECT * self.height
        bottom_row = image_height - 1 - self.y_bottom
        return (self.x - w / 2, bottom_row - self.height, self.x + w / 2, bottom_row)


@dataclass
class SceneContext:
    """Background scene plus semantics and existing person boxes."""

    image: np.ndarray       # (H, W, 3) float in [0, 1]
    semantics: np.ndarray   # (H, W) int labels
    persons: list[PersonBox] = field(default_factory=list)

    def __post_init__(self):
        self.image = np.asarray(self.image, dtype=np.float64)
        self.semantics = np.asarray(self.semantics)
        if self.semantics.shape != self.image.shape[:2]:
            raise ShapeMismatch(
                f"semantics {self.semantics.shape} vs image {self.image.shape[:2]}"
            )

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


@dataclass
class HeightModel:
    """Linear person-height model h = a * y + b, y measured from the bottom."""

    a: float
    b: float

    def predict(self, y_bottom: float) -> float:
        return self.a * y_bottom + self.b


@dataclass
class Placement:
    x: int
    y_bottom: int
    height: float


def fit_height_model(samples: list[tuple[float, float]]) -> HeightModel:
    """Least-squares fit of height against bottom-row position.

    ``samples`` are (y_bottom, height) pairs with y from the image bottom.
    Raises DegenerateFit without two distinct y values.
    """
    if len(samples) < 2:
        raise DegenerateFit("need at least 2 samples")
    ys = np.asarray([s[0] for s in samples], dtype=np.float64)
    hs = np.asarray([s[1] for s in samples], dtype=np.float64)
    if np.unique(ys).size < 2:
        raise DegenerateFit("all samples share one y value")
    design = np.stack([ys, np.ones_like(ys)], axis=1)
    coef, *_ = np.linalg.lstsq(design, hs, rcond=None)
    return HeightModel(a=float(coef[0]), b=float(coef[1]))


def _boxes_overlap(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> bool:
    """True when intersection area is strictly positive."""
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    return ix > 0 and iy > 0


def _candidate_box(x: float, y_bottom: float, height: float, image_height: int) -> tuple[float, float, float, float]:
    return PersonBox(x=x, y_bottom=y_bottom, height=height).to_xyxy(image_height)


def placement_is_valid(scene: SceneContext, model: HeightModel, col: int, row: int) -> bool:
    """Full validity check for a candidate footprint pixel (row, col).

    The pixel must carry a walkable label, the height model must give a
    positive height there, and the implied box must not overlap any
    existing person taller than 50 px.
    """
    if int(scene.semantics[row, col]) not in tuple(int(l) for l in WALKABLE):
        return False
    y_bottom = scene.height - 1 - row
    h = model.predict(y_bottom)
    if h <= 0:
        return False
    box = _candidate_box(col, y_bottom, h, scene.height)
    for person in scene.persons:
        if person.height > PROTECTED_MIN_HEIGHT and _boxes_overlap(box, person.to_xyxy(scene.height)):
            return False
    return True


def propose_placement(
    scene: SceneContext,
    model: HeightModel,
    rng: np.random.Generator,
    attempts: int = 50,
    neighborhood_scale: float = 2.0,
) -> Placement:
    """Pick a footprint pixel and height for a new person.

    If the scene has persons taller than 50 px, sampling first tries a
    horizontal window of +-neighborhood_scale * height around a randomly
    chosen one; remaining attempts (and person-free scenes) sample
    uniformly over all walkable pixels. Raises NoValidPlacement once the
    attempt budget is exhausted.
    """
    walk = np.isin(scene.semantics, tuple(int(l) for l in WALKABLE))
    rows, cols = np.nonzero(walk)
    if rows.size == 0:
        raise NoValidPlacement("scene has no walkable footprint pixels")

    tall = [p for p in scene.persons if p.height >= PROTECTED_MIN_HEIGHT]
    near_attempts = attempts // 2 if tall else 0

    for attempt in range(attempts):
        if attempt < near_attempts:
            anchor = tall[int(rng.integers(len(tall)))]
            half = neighborhood_scale * anchor.height
            sel = np.abs(cols - anchor.x) <= half
            if not sel.any():
                continue
            idx = int(rng.integers(sel.sum()))
            row, col = int(rows[sel][idx]), int(cols[sel][idx])
        else:
            idx = int(rng.integers(rows.size))
            row, col = int(rows[idx]), int(cols[idx])
        if placement_is_valid(scene, model, col, row):
            y_bottom = scene.height - 1 - row
            return Placement(x=col, y_bottom=y_bottom, height=model.predict(y_bottom))
    raise NoValidPlacement(f"no valid placement in {attempts} attempts")


def _rescale_bilinear(arr: np.ndarray, scale: float) -> np.ndarray:
    """Bilinear rescale of an (H, W) or (H, W, C) array."""
    zoom = (scale, scale) if arr.ndim == 2 else (scale, scale, 1)
    return ndimage.zoom(arr, zoom, order=1, mode="nearest")


def _mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    """(row0, row1, col0, col1) inclusive bounds of mask > 0.5."""
    fg = mask > 0.5
    rows = np.flatnonzero(fg.any(axis=1))
    cols = np.flatnonzero(fg.any(axis=0))
    return int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])


def insert_person(
    scene: SceneContext,
    patch: np.ndarray,
    patch_mask: np.ndarray,
    placement: Placement,
) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    """Composite a generated patch into the scene at a placement.

    The patch and mask are rescaled so the visible (mask > 0.5) extent
    matches the placement height, anchored with the visible bottom center
    at the placement footprint. Pixels where the scaled mask is zero stay
    bit-identical to the scene. Returns the augmented image and the tight
    (x0, y0, x1, y1) box around visible mask pixels.
    """
    patch = np.asarray(patch, dtype=np.float64)
    patch_mask = np.asarray(patch_mask, dtype=np.float64)
    if patch.shape[:2] != patch_mask.shape:
        raise ShapeMismatch(f"patch {patch.shape[:2]} vs mask {patch_mask.shape}")
    if not (patch_mask > 0.5).any():
        raise EmptyMask("patch mask has no foreground")

    r0, r1, c0, c1 = _mask_bbox(patch_mask)
    visible_height = r1 - r0 + 1
    scale = placement.height / visible_height
    patch_s = np.clip(_rescale_bilinear(patch, scale), 0.0, 1.0)
    mask_s = np.clip(_rescale_bilinear(patch_mask, scale), 0.0, 1.0)
    if not (mask_s > 0.5).any():
        raise EmptyMask("rescaled mask lost all foreground")
    r0, r1, c0, c1 = _mask_bbox(mask_s)

    bottom_row = scene.height - 1 - placement.y_bottom
    top = bottom_row - (r1 - r0)
    left = placement.x - (c0 + c1) // 2 + c0
    # patch-to-scene offset: scaled-mask pixel (r, c) lands at scene
    # (top + r - r0, left + c - c0)
    off_r = top - r0
    off_c = left - c0
    if top < 0 or bottom_row >= scene.height or left < 0 or left + (c1 - c0) >= scene.width:
        raise OutOfBounds("visible person extent exceeds scene bounds")

    ph, pw = mask_s.shape
    pr0 = max(0, -off_r)
    pc0 = max(0, -off_c)
    pr1 = min(ph, scene.height - off_r)
    pc1 = min(pw, scene.width - off_c)

    out = scene.image.copy()
    region = out[pr0 + off_r : pr1 + off_r, pc0 + off_c : pc1 + off_c]
    m = mask_s[pr0:pr1, pc0:pc1]
    p = patch_s[pr0:pr1, pc0:pc1]
    blend = composite(m, p, region)
    keep = m == 0.0
    blend[keep] = region[keep]
    out[pr0 + off_r : pr1 + off_r, pc0 + off_c : pc1 + off_c] = blend

    box = (off_c + c0, off_r + r0, off_c + c1 + 1, off_r + r1 + 1)
    return out, box
