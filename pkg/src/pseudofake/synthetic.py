"""Procedural portrait fixtures: deterministic face-like images with exact
landmark ground truth.

No real faces and no landmark estimation anywhere in this package; tests,
demos, and bridge fixtures all draw from this generator. The canonical
frontal landmark layout ships as package data (iBUG-68 ordering, 256x256
frame).
"""

from __future__ import annotations

import importlib.resources
import json
from pathlib import Path

import cv2
import numpy as np

from .core import ImageBuffer, LandmarkSet, RngStream, save_image_png, save_landmarks


def reference_landmarks() -> LandmarkSet:
    """Canonical frontal 68-point layout on a 256x256 frame."""
    raw = (
        importlib.resources.files("pseudofake")
        .joinpath("data/reference_landmarks.json")
        .read_text(encoding="utf-8")
    )
    return LandmarkSet(np.asarray(json.loads(raw), dtype=np.float64))


def _jitter_landmarks(rng: RngStream, size: int) -> LandmarkSet:
    pts = reference_landmarks().points * (size / 256.0)
    center = pts.mean(axis=0)
    angle = rng.uniform(-0.08, 0.08)
    scale = rng.uniform(0.85, 1.05)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    shift = np.array([rng.uniform(-0.05, 0.05) * size, rng.uniform(-0.05, 0.05) * size])
    out = (pts - center) @ rot.T * scale + center + shift
    out = out + rng.normal((68, 2)) * (0.002 * size)
    return LandmarkSet(out)


def _poly(pts: np.ndarray) -> np.ndarray:
    return np.round(pts).astype(np.int32)


def make_face(seed: int, size: int = 256) -> tuple[ImageBuffer, LandmarkSet]:
    """Render one synthetic portrait and its landmarks, fully determined by
    the seed."""
    rng = RngStream(seed).fork("synthetic-face")
    lm = _jitter_landmarks(rng, size)
    pts = lm.points

    img = np.zeros((size, size, 3), np.float32)
    top = np.array([rng.uniform(0.2, 0.7) for _ in range(3)], np.float32)
    bottom = np.array([rng.uniform(0.2, 0.7) for _ in range(3)], np.float32)
    ramp = np.linspace(0.0, 1.0, size, dtype=np.float32)[:, None, None]
    img[:] = top * (1 - ramp) + bottom * ramp

    # Head: hull of jaw and brows, one solid skin tone with soft shading.
    skin = np.array(
        [rng.uniform(0.55, 0.85), rng.uniform(0.45, 0.7), rng.uniform(0.35, 0.6)],
        np.float32,
    )
    head = np.zeros((size, size), np.float32)
    cv2.fillConvexPoly(head, cv2.convexHull(_poly(pts[:27])), 1.0)
    # extend above the brows so the head does not stop at the eyebrow line
    brow_y = pts[17:27, 1].min()
    jaw_span = pts[16, 0] - pts[0, 0]
    cv2.ellipse(
        head,
        (int(pts[27, 0]), int(brow_y) + 4),
        (int(jaw_span / 2 * 0.92), int(jaw_span / 2 * 0.7)),
        0, 180, 360, 1.0, -1,
    )
    head = cv2.GaussianBlur(head, (0, 0), 1.5)
    shade = cv2.GaussianBlur(rng.normal((size // 8, size // 8)).astype(np.float32), (0, 0), 2)
    shade = cv2.resize(shade, (size, size), interpolation=cv2.INTER_CUBIC) * 0.06
    img = img * (1 - head[:, :, None]) + (skin + shade[:, :, None]) * head[:, :, None]

    sclera = rng.uniform(0.85, 0.97)
    iris = np.array([rng.uniform(0.1, 0.5) for _ in range(3)], np.float32)
    for eye in (pts[36:42], pts[42:48]):
        cv2.fillConvexPoly(img, cv2.convexHull(_poly(eye)), (sclera,) * 3)
        c = eye.mean(axis=0)
        radius = max(2, int(round((eye[:, 0].max() - eye[:, 0].min()) * 0.22)))
        cv2.circle(img, (int(c[0]), int(c[1])), radius, iris.tolist(), -1)

    lip = np.array([rng.uniform(0.5, 0.8), rng.uniform(0.2, 0.4), rng.uniform(0.25, 0.45)], np.float32)
    cv2.fillConvexPoly(img, cv2.convexHull(_poly(pts[48:60])), lip.tolist())
    dark = (0.25, 0.18, 0.15)
    cv2.polylines(img, [_poly(pts[17:22]), _poly(pts[22:27])], False, dark, max(1, size // 85))
    cv2.polylines(img, [_poly(pts[27:31]), _poly(pts[31:36])], False, dark, max(1, size // 128))
    cv2.polylines(img, [_poly(pts[0:17])], False, (0.3, 0.22, 0.18), max(1, size // 128))

    img = cv2.GaussianBlur(img, (0, 0), 0.8)
    img += rng.normal((size, size, 3)).astype(np.float32) * 0.01
    img = np.clip(img, 0.0, 1.0)
    return ImageBuffer(np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)), lm


def write_corpus(
    input_root: str | Path,
    landmark_root: str | Path,
    count: int,
    size: int = 256,
    seed: int = 0,
) -> list[str]:
    """Write a synthetic corpus: PNGs under input_root and matching
    landmark JSON files (path mirrored, .json extension) under
    landmark_root. Returns the relative image paths."""
    input_root, landmark_root = Path(input_root), Path(landmark_root)
    rel_paths = []
    for i in range(count):
        image, lm = make_face(seed_for_index(seed, i), size)
        rel = f"img_{i:04d}.png"
        save_image_png(image, input_root / rel)
        save_landmarks(lm, landmark_root / f"img_{i:04d}.json")
        rel_paths.append(rel)
    return rel_paths


def seed_for_index(seed: int, index: int) -> int:
    return seed * 100003 + index


def write_artifact_cache(
    input_root: str | Path,
    cache_root: str | Path,
    seed: int = 0,
    amplitude: float = 3.0 / 255.0,
) -> int:
    """Build a synthetic generator-artifact cache mirroring input_root:
    each entry is the original plus a mild high-frequency perturbation."""
    input_root, cache_root = Path(input_root), Path(cache_root)
    n = 0
    for path in sorted(input_root.rglob("*.png")):
        rel = path.relative_to(input_root)
        rng = RngStream(seed).fork(f"cache:{rel.as_posix()}")
        bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
        arr = bgr[:, :, ::-1].astype(np.float32) / 255.0
        h, w = arr.shape[:2]
        ripple = rng.normal((h, w, 3)).astype(np.float32)
        ripple -= cv2.GaussianBlur(ripple, (0, 0), 1.2)  # keep only high freq
        arr = np.clip(arr + ripple * amplitude, 0.0, 1.0)
        save_image_png(ImageBuffer(np.clip(np.rint(arr * 255), 0, 255).astype(np.uint8)), cache_root / rel)
        n += 1
    return n
