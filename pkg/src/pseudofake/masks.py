"""Blending-mask generation from 68-point landmarks.

Four strategies, sampled uniformly: the filled convex hull of all 68
points, a hull over the outer face contour only, a dilated hull, and a
semantic mask covering one named facial part. Semantic parts follow the
iBUG-68 index mapping pinned below. Deformation (affine jitter, elastic
warp, Gaussian feathering) turns the binary hulls into the soft masks the
blending stage consumes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import cv2
import numpy as np

from .core import BlendMask, LandmarkSet, MaskError, RngStream


class FacePart(enum.Enum):
    RIGHT_JAW = "right-jaw"
    LEFT_JAW = "left-jaw"
    RIGHT_CHEEK = "right-cheek"
    LEFT_CHEEK = "left-cheek"
    NOSE_RIDGE = "nose-ridge"
    NOSE = "nose"
    RIGHT_EYE = "right-eye"
    LEFT_EYE = "left-eye"


# iBUG-68 indices for each part. "Right" is the subject's right, which sits
# on the viewer's left in a frontal image.
PART_LANDMARK_INDICES: dict[FacePart, tuple[int, ...]] = {
    FacePart.RIGHT_JAW: tuple(range(0, 9)),
    FacePart.LEFT_JAW: tuple(range(8, 17)),
    FacePart.RIGHT_CHEEK: (1, 2, 3, 4, 5, 31, 48),
    FacePart.LEFT_CHEEK: (11, 12, 13, 14, 15, 35, 54),
    FacePart.NOSE_RIDGE: tuple(range(27, 31)),
    FacePart.NOSE: tuple(range(31, 36)),
    FacePart.RIGHT_EYE: tuple(range(36, 42)),
    FacePart.LEFT_EYE: tuple(range(42, 48)),
}

# Outer face contour (jaw line plus eyebrows) used by hull variant A.
OUTER_CONTOUR_INDICES = tuple(range(0, 27))

HULL_DILATE_FRACTION = 0.10  # of inter-ocular distance, variant B
PART_DILATE_FRACTION = 0.05  # of inter-ocular distance, semantic parts


class StrategyKind(enum.Enum):
    FULL_HULL = "full-hull"
    HULL_VARIANT_A = "hull-variant-A"
    HULL_VARIANT_B = "hull-variant-B"
    SEMANTIC = "semantic"


@dataclass(frozen=True)
class MaskStrategy:
    kind: StrategyKind
    part: FacePart | None = None

    def __post_init__(self):
        if (self.kind is StrategyKind.SEMANTIC) != (self.part is not None):
            raise MaskError("semantic strategy carries exactly one FacePart")

    @property
    def tag(self) -> str:
        if self.part is not None:
            return f"{self.kind.value}:{self.part.value}"
        return self.kind.value

    @classmethod
    def from_tag(cls, tag: str) -> "MaskStrategy":
        if ":" in tag:
            kind, part = tag.split(":", 1)
            return cls(StrategyKind(kind), FacePart(part))
        return cls(StrategyKind(tag))


def interocular_distance(landmarks: LandmarkSet) -> float:
    pts = landmarks.points
    right = pts[36:42].mean(axis=0)
    left = pts[42:48].mean(axis=0)
    return float(np.hypot(*(left - right)))


def _dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    if radius < 1:
        return mask
    size = 2 * radius + 1
    kernel = cv2.getStructuringElement(cv2.MORPH_ELLIPSE, (size, size))
    return cv2.dilate(mask, kernel)


def _rasterize_hull(
    points: np.ndarray, width: int, height: int, allow_thin: bool = False
) -> np.ndarray:
    pts = np.round(points).astype(np.int32)
    hull = cv2.convexHull(pts)
    area = cv2.contourArea(hull)
    mask = np.zeros((height, width), dtype=np.float32)
    if area <= 0.0:
        if not allow_thin:
            raise MaskError("degenerate (collinear) landmark hull")
        # Thin parts such as the nose ridge rasterize as a line and only
        # gain area through dilation.
        cv2.polylines(mask, [hull], isClosed=True, color=1.0, thickness=1)
    else:
        cv2.fillConvexPoly(mask, hull, 1.0)
    return mask


def full_face_mask(
    landmarks: LandmarkSet,
    width: int,
    height: int,
    variant: StrategyKind = StrategyKind.FULL_HULL,
) -> BlendMask:
    """Whole-face binary mask: the convex hull of all 68 landmarks, the
    hull of the outer contour (variant A), or the hull dilated by 10% of
    the inter-ocular distance (variant B)."""
    if variant is StrategyKind.SEMANTIC:
        raise MaskError("semantic masks go through semantic_part_mask")
    if variant is StrategyKind.HULL_VARIANT_A:
        pts = landmarks.points[list(OUTER_CONTOUR_INDICES)]
        return BlendMask(_rasterize_hull(pts, width, height))
    mask = _rasterize_hull(landmarks.points, width, height)
    if variant is StrategyKind.HULL_VARIANT_B:
        radius = int(round(HULL_DILATE_FRACTION * interocular_distance(landmarks)))
        mask = _dilate(mask, radius)
    return BlendMask(mask)


def semantic_part_mask(
    landmarks: LandmarkSet, part: FacePart, width: int, height: int
) -> BlendMask:
    """Mask of one facial part: hull of its landmark subset, dilated by 5%
    of the inter-ocular distance so thin parts get nonzero area."""
    pts = landmarks.points[list(PART_LANDMARK_INDICES[part])]
    mask = _rasterize_hull(pts, width, height, allow_thin=True)
    radius = max(1, int(round(PART_DILATE_FRACTION * interocular_distance(landmarks))))
    mask = _dilate(mask, radius)
    if mask.max() == 0.0:
        raise MaskError(f"part {part.value} rasterized to an empty mask")
    return BlendMask(mask)


def sample_mask_strategy(rng: RngStream) -> MaskStrategy:
    """Uniform over the four strategies; a uniform FacePart when semantic."""
    kind = (
        StrategyKind.FULL_HULL,
        StrategyKind.HULL_VARIANT_A,
        StrategyKind.HULL_VARIANT_B,
        StrategyKind.SEMANTIC,
    )[rng.categorical([1, 1, 1, 1])]
    if kind is StrategyKind.SEMANTIC:
        part = list(FacePart)[rng.randint(0, len(FacePart) - 1)]
        return MaskStrategy(kind, part)
    return MaskStrategy(kind)


def build_mask(
    landmarks: LandmarkSet, strategy: MaskStrategy, width: int, height: int
) -> BlendMask:
    if strategy.kind is StrategyKind.SEMANTIC:
        return semantic_part_mask(landmarks, strategy.part, width, height)
    return full_face_mask(landmarks, width, height, strategy.kind)


def choose_mask(
    landmarks: LandmarkSet, rng: RngStream, width: int, height: int
) -> tuple[BlendMask, MaskStrategy]:
    strategy = sample_mask_strategy(rng)
    return build_mask(landmarks, strategy, width, height), strategy


# Deformation constants, pinned for reproducibility.
AFFINE_TRANSLATE_FRACTION = 0.03
AFFINE_SCALE_RANGE = (0.95, 1.05)
ELASTIC_GRID = 4
ELASTIC_AMPLITUDE_FRACTION = 0.02
FEATHER_SIGMA_RANGE = (3.0, 9.0)


def deform_mask(mask: BlendMask, rng: RngStream) -> BlendMask:
    """Soften a binary mask: random affine jitter, a coarse-grid elastic
    warp, then Gaussian feathering with sigma ~ Uniform(3, 9) px."""
    m = mask.values
    if m.max() == 0.0:
        return BlendMask(m.copy())
    h, w = m.shape
    tx = rng.uniform(-AFFINE_TRANSLATE_FRACTION * w, AFFINE_TRANSLATE_FRACTION * w)
    ty = rng.uniform(-AFFINE_TRANSLATE_FRACTION * h, AFFINE_TRANSLATE_FRACTION * h)
    scale = rng.uniform(*AFFINE_SCALE_RANGE)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    affine = np.array(
        [[scale, 0.0, cx - scale * cx + tx], [0.0, scale, cy - scale * cy + ty]],
        dtype=np.float32,
    )
    out = cv2.warpAffine(
        m, affine, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT
    )

    g = ELASTIC_GRID
    dx = np.array(
        [[rng.uniform(-1.0, 1.0) for _ in range(g)] for _ in range(g)], np.float32
    ) * (ELASTIC_AMPLITUDE_FRACTION * w)
    dy = np.array(
        [[rng.uniform(-1.0, 1.0) for _ in range(g)] for _ in range(g)], np.float32
    ) * (ELASTIC_AMPLITUDE_FRACTION * h)
    dx = cv2.resize(dx, (w, h), interpolation=cv2.INTER_CUBIC)
    dy = cv2.resize(dy, (w, h), interpolation=cv2.INTER_CUBIC)
    grid_x, grid_y = np.meshgrid(
        np.arange(w, dtype=np.float32), np.arange(h, dtype=np.float32)
    )
    out = cv2.remap(
        out,
        grid_x + dx,
        grid_y + dy,
        interpolation=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
    )

    sigma = rng.uniform(*FEATHER_SIGMA_RANGE)
    out = cv2.GaussianBlur(out, (0, 0), sigma)
    return BlendMask(np.clip(out, 0.0, 1.0))
