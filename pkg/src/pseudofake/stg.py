"""Source-target generation: the discrepancy between the two images that
blending turns into a detectable boundary.

Either a random subset of appearance/geometric transforms is applied to
one copy of the image (the self-blending route), or a pre-built
generator-artifact cache supplies the source with probability p_g per
cache, leaving the original as the target.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .core import (
    ArtifactError,
    ImageBuffer,
    PmmConfig,
    RngStream,
    image_from_array,
    load_image,
)

RGB_SHIFT_MAX = 20.0 / 255.0
HUE_SHIFT_FRACTION = 0.10  # of a full hue turn
SAT_FACTOR_RANGE = (0.9, 1.1)
BRIGHTNESS_CONTRAST_RANGE = (0.9, 1.1)
DOWN_UP_RANGE = (0.25, 0.5)
SHARPEN_AMOUNT_RANGE = (0.5, 1.5)
AFFINE_TRANSLATE_FRACTION = 0.03
AFFINE_SCALE_RANGE = (0.95, 1.05)

_TRANSFORMS = ("rgb_shift", "hue_sat", "brightness_contrast", "down_up", "sharpen", "affine")


def _apply_transform(arr: np.ndarray, name: str, rng: RngStream) -> np.ndarray:
    h, w = arr.shape[:2]
    if name == "rgb_shift":
        deltas = np.array(
            [rng.uniform(-RGB_SHIFT_MAX, RGB_SHIFT_MAX) for _ in range(3)], np.float32
        )
        return np.clip(arr + deltas, 0.0, 1.0)
    if name == "hue_sat":
        hsv = cv2.cvtColor(arr, cv2.COLOR_RGB2HSV)
        hue_shift = rng.uniform(-HUE_SHIFT_FRACTION, HUE_SHIFT_FRACTION) * 360.0
        sat_factor = rng.uniform(*SAT_FACTOR_RANGE)
        hsv[:, :, 0] = np.mod(hsv[:, :, 0] + np.float32(hue_shift), 360.0)
        hsv[:, :, 1] = np.clip(hsv[:, :, 1] * np.float32(sat_factor), 0.0, 1.0)
        return np.clip(cv2.cvtColor(hsv, cv2.COLOR_HSV2RGB), 0.0, 1.0)
    if name == "brightness_contrast":
        fb = rng.uniform(*BRIGHTNESS_CONTRAST_RANGE)
        fc = rng.uniform(*BRIGHTNESS_CONTRAST_RANGE)
        out = np.clip(arr * np.float32(fb), 0.0, 1.0)
        mu = np.float32(
            0.299 * out[:, :, 0].mean()
            + 0.587 * out[:, :, 1].mean()
            + 0.114 * out[:, :, 2].mean()
        )
        return np.clip(mu + np.float32(fc) * (out - mu), 0.0, 1.0)
    if name == "down_up":
        factor = rng.uniform(*DOWN_UP_RANGE)
        nw, nh = max(1, int(round(w * factor))), max(1, int(round(h * factor)))
        small = cv2.resize(arr, (nw, nh), interpolation=cv2.INTER_LINEAR)
        return np.clip(
            cv2.resize(small, (w, h), interpolation=cv2.INTER_LINEAR), 0.0, 1.0
        )
    if name == "sharpen":
        amount = rng.uniform(*SHARPEN_AMOUNT_RANGE)
        blurred = cv2.GaussianBlur(arr, (0, 0), 1.0)
        return np.clip(arr + np.float32(amount) * (arr - blurred), 0.0, 1.0)
    if name == "affine":
        tx = rng.uniform(-AFFINE_TRANSLATE_FRACTION * w, AFFINE_TRANSLATE_FRACTION * w)
        ty = rng.uniform(-AFFINE_TRANSLATE_FRACTION * h, AFFINE_TRANSLATE_FRACTION * h)
        scale = rng.uniform(*AFFINE_SCALE_RANGE)
        cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
        mat = np.array(
            [[scale, 0.0, cx - scale * cx + tx], [0.0, scale, cy - scale * cy + ty]],
            dtype=np.float32,
        )
        warped = cv2.warpAffine(
            arr, mat, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REPLICATE
        )
        return np.clip(warped, 0.0, 1.0)
    raise ValueError(f"unknown transform {name!r}")


def sbi_transform(
    image: ImageBuffer, rng: RngStream
) -> tuple[ImageBuffer, ImageBuffer]:
    """Split an image into a (source, target) pair by transforming exactly
    one copy; a fair coin decides which. At least one transform is always
    in effect, and on pathological inputs where every sampled transform is
    a no-op a minimal brightness offset is forced so the pair never comes
    back bit-identical."""
    base = image.to_float().data
    selected = [name for name in _TRANSFORMS if rng.bernoulli(0.5)]
    if not selected:
        selected = [_TRANSFORMS[rng.randint(0, len(_TRANSFORMS) - 1)]]
    transformed = base
    for name in _TRANSFORMS:
        if name in selected:
            transformed = _apply_transform(transformed, name, rng)
    if np.array_equal(transformed, base):
        step = np.float32(1.0 / 255.0)
        if float(base.mean()) > 0.5:
            transformed = np.clip(base - step, 0.0, 1.0)
        else:
            transformed = np.clip(base + step, 0.0, 1.0)
    transformed_buf = image_from_array(transformed)
    original_buf = image.to_float()
    if rng.bernoulli(0.5):
        return transformed_buf, original_buf
    return original_buf, transformed_buf


@dataclass(frozen=True)
class ArtifactCache:
    """Directory of pre-generated artifact images mirroring the input tree:
    <root>/<relative-original-path> with identical filenames."""

    name: str
    root: Path

    def resolve(self, rel_path: str) -> Path | None:
        candidate = Path(self.root) / rel_path
        return candidate if candidate.is_file() else None

    def load(self, rel_path: str, expected_extent: tuple[int, int]) -> ImageBuffer:
        path = self.resolve(rel_path)
        if path is None:
            raise ArtifactError(f"cache {self.name!r} has no entry for {rel_path!r}")
        try:
            img = load_image(path)
        except Exception as exc:
            raise ArtifactError(
                f"cache {self.name!r} entry {rel_path!r} failed to decode: {exc}"
            ) from exc
        if (img.width, img.height) != expected_extent:
            raise ArtifactError(
                f"cache {self.name!r} entry {rel_path!r} extent "
                f"{img.width}x{img.height} != original {expected_extent[0]}x{expected_extent[1]}"
            )
        return img


def artifact_substitute(
    rel_path: str,
    image: ImageBuffer,
    caches: list[ArtifactCache],
    rng: RngStream,
    p_g: float,
) -> tuple[ImageBuffer, str | None]:
    """Walk the caches in declared order; the first whose independent
    Bernoulli(p_g) succeeds and which holds an entry for this path supplies
    the substituted image. A missing entry counts as a failure for that
    cache only."""
    for cache in caches:
        if not rng.bernoulli(p_g):
            continue
        if cache.resolve(rel_path) is None:
            continue
        substituted = cache.load(rel_path, (image.width, image.height))
        return substituted.to_float(), cache.name
    return image, None


def make_pair(
    rel_path: str,
    image: ImageBuffer,
    caches: list[ArtifactCache],
    rng: RngStream,
    config: PmmConfig,
) -> tuple[ImageBuffer, ImageBuffer, str]:
    """Build the (source, target) pair: generator artifacts replace the
    transform route when a cache fires, pairing (artifact, original);
    otherwise fall back to sbi_transform. The tag names the branch taken."""
    substituted, tag = artifact_substitute(rel_path, image, caches, rng, config.p_g)
    if tag is not None:
        original = image.to_float()
        if not np.array_equal(substituted.data, original.data):
            return substituted, original, tag
        # A cache that reproduces the original exactly creates no
        # discrepancy to learn from; fall back to the transform route.
    source, target = sbi_transform(image, rng)
    return source, target, "sbi"
