"""Test-time degradation sweeps and AUC robustness curves.

Unlike the training-time scheduler, sweep degradations are single-op and
deterministic: one kind at one fixed strength per image, with noise seeded
per image id. The harness never runs a detector; it degrades images to
disk and consumes externally produced score files.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np
from scipy.stats import rankdata

from .core import (
    HarnessError,
    ImageBuffer,
    MetricError,
    PmmConfig,
    RngStream,
    ValidationError,
    image_from_array,
    load_image,
    save_image_png,
    seed_for_id,
)
from .degrade import build_blur_kernel, _convolve_replicate, _apply_jpeg
from .pipeline import discover_images


class SweepKind(enum.Enum):
    GAUSSIAN_NOISE = "gaussian-noise"
    GAUSSIAN_BLUR = "gaussian-blur"
    JPEG = "jpeg"
    MOTION_BLUR = "motion-blur"
    SPECKLE = "speckle"
    RESIZE = "resize"


# Inclusive level domains per kind (resize factor additionally must be > 0).
SWEEP_DOMAINS: dict[SweepKind, tuple[float, float]] = {
    SweepKind.GAUSSIAN_NOISE: (0.0, 60.0),
    SweepKind.GAUSSIAN_BLUR: (0.0, 30.0),
    SweepKind.JPEG: (0.0, 100.0),
    SweepKind.MOTION_BLUR: (0.0, 60.0),
    SweepKind.SPECKLE: (0.0, 60.0),
    SweepKind.RESIZE: (0.0, 1.0),
}

# Seven levels per kind by default; resize follows the usual power-of-two
# fractions instead of a linear grid.
DEFAULT_LEVELS: dict[SweepKind, tuple[float, ...]] = {
    SweepKind.GAUSSIAN_NOISE: (0, 10, 20, 30, 40, 50, 60),
    SweepKind.GAUSSIAN_BLUR: (0, 5, 10, 15, 20, 25, 30),
    SweepKind.JPEG: (100, 85, 70, 55, 40, 25, 10),
    SweepKind.MOTION_BLUR: (0, 10, 20, 30, 40, 50, 60),
    SweepKind.SPECKLE: (0, 10, 20, 30, 40, 50, 60),
    SweepKind.RESIZE: (1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625),
}


@dataclass(frozen=True)
class SweepSpec:
    kind: SweepKind
    levels: tuple[float, ...]

    def __post_init__(self):
        if not self.levels:
            raise ValidationError("sweep needs at least one level")
        lo, hi = SWEEP_DOMAINS[self.kind]
        for lv in self.levels:
            if not (lo <= lv <= hi) or (
                self.kind is SweepKind.RESIZE and lv <= 0.0
            ):
                raise ValidationError(
                    f"level {lv} outside {self.kind.value} domain [{lo}, {hi}]"
                )
        object.__setattr__(self, "levels", tuple(float(lv) for lv in self.levels))

    @classmethod
    def default(cls, kind: SweepKind) -> "SweepSpec":
        return cls(kind, DEFAULT_LEVELS[kind])


def format_level(level: float) -> str:
    """Filesystem-safe level token: integral levels print without a dot."""
    return str(int(level)) if float(level).is_integer() else repr(float(level))


def _is_identity(kind: SweepKind, level: float) -> bool:
    if kind is SweepKind.GAUSSIAN_NOISE or kind is SweepKind.SPECKLE:
        return level == 0.0
    if kind is SweepKind.GAUSSIAN_BLUR:
        return level == 0.0
    if kind is SweepKind.JPEG:
        return level >= 100.0
    if kind is SweepKind.MOTION_BLUR:
        return round(level) <= 1
    return level == 1.0


def apply_test_degradation(
    image: ImageBuffer, kind: SweepKind, level: float, seed: int = 0
) -> ImageBuffer:
    """One deterministic degradation at a fixed strength. Identity levels
    (sigma 0, quality >= 100, kernel width <= 1, factor 1) are pixel-exact
    no-ops. Noise kinds draw from a stream derived from the explicit seed,
    so a per-image-id seed makes the sweep reproducible end to end."""
    lo, hi = SWEEP_DOMAINS[kind]
    if not (lo <= level <= hi) or (kind is SweepKind.RESIZE and level <= 0.0):
        raise ValidationError(f"level {level} outside {kind.value} domain [{lo}, {hi}]")
    if _is_identity(kind, level):
        return image
    arr = image.to_float().data
    h, w = arr.shape[:2]
    if kind is SweepKind.GAUSSIAN_NOISE:
        rng = RngStream(seed).fork(f"sweep:{kind.value}:{format_level(level)}")
        noise = rng.normal((h, w, 3), dtype=np.float32) * np.float32(level / 255.0)
        return image_from_array(arr + noise)
    if kind is SweepKind.SPECKLE:
        rng = RngStream(seed).fork(f"sweep:{kind.value}:{format_level(level)}")
        noise = rng.normal((h, w, 3), dtype=np.float32) * np.float32(level / 255.0)
        return image_from_array(arr + arr * noise)
    if kind is SweepKind.GAUSSIAN_BLUR:
        kernel = build_blur_kernel({"kind": "isotropic", "sigma": float(level)})
        return image_from_array(_convolve_replicate(arr, kernel.taps))
    if kind is SweepKind.JPEG:
        return image_from_array(_apply_jpeg(arr, int(round(level))))
    if kind is SweepKind.MOTION_BLUR:
        width = int(round(level))
        taps = np.full((1, width), 1.0 / width)
        out = cv2.filter2D(arr, -1, taps, borderType=cv2.BORDER_REPLICATE)
        return image_from_array(out)
    # resize: downsample by the factor, then back to the original extent
    nw, nh = max(1, int(round(w * level))), max(1, int(round(h * level)))
    small = cv2.resize(arr, (nw, nh), interpolation=cv2.INTER_AREA)
    out = cv2.resize(small, (w, h), interpolation=cv2.INTER_LINEAR)
    return image_from_array(out)


def run_sweep(
    input_root: str | Path,
    output_root: str | Path,
    spec: SweepSpec,
    seed: int = 0,
) -> int:
    """Write degraded copies of every input image under
    <output_root>/<kind>/<level>/, mirroring the input layout."""
    input_root, output_root = Path(input_root), Path(output_root)
    rels = discover_images(input_root)
    for rel in rels:
        image = load_image(input_root / rel)
        for level in spec.levels:
            degraded = apply_test_degradation(
                image, spec.kind, level, seed=seed_for_id(rel, seed)
            )
            out_path = output_root / spec.kind.value / format_level(level) / rel
            save_image_png(degraded, out_path.with_suffix(".png"))
    return len(rels) * len(spec.levels)


# ---------------------------------------------------------------------------
# AUC


@dataclass(frozen=True)
class ScoredSample:
    id: str
    label: int  # 0 real, 1 fake
    score: float  # higher = more fake

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValidationError(f"label must be 0 or 1, got {self.label!r}")
        if not np.isfinite(self.score):
            raise ValidationError(f"score must be finite, got {self.score!r}")


def auc(samples: list[ScoredSample]) -> float:
    """Exact rank-based AUC (Mann-Whitney with tie correction):
    P(score_fake > score_real) + 0.5 * P(tie)."""
    labels = np.array([s.label for s in samples])
    scores = np.array([s.score for s in samples], dtype=np.float64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError(
            f"AUC needs both classes; got {n_pos} positives, {n_neg} negatives"
        )
    ranks = rankdata(scores, method="average")
    rank_sum_pos = float(ranks[labels == 1].sum())
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def read_score_file(path: str | Path) -> list[ScoredSample]:
    """CSV with header id,label,score."""
    samples = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != [
            "id",
            "label",
            "score",
        ]:
            raise HarnessError(
                f"score file {path} must have header id,label,score, "
                f"got {reader.fieldnames}"
            )
        for row in reader:
            try:
                samples.append(
                    ScoredSample(row["id"], int(row["label"]), float(row["score"]))
                )
            except (TypeError, ValueError) as exc:
                raise HarnessError(f"score file {path}: bad row {row}") from exc
    return samples


def robustness_curve(
    spec: SweepSpec,
    score_files: dict[float, str | Path],
    out_csv: str | Path | None = None,
) -> list[tuple[float, float, int, int]]:
    """AUC per sweep level from per-level score files. Sample ids must be
    consistent across levels; the error lists any missing ids. Optionally
    writes the curve as CSV level,auc,n_pos,n_neg."""
    missing_levels = [lv for lv in spec.levels if lv not in score_files]
    if missing_levels:
        raise HarnessError(f"no score file for levels {missing_levels}")
    per_level = {lv: read_score_file(score_files[lv]) for lv in spec.levels}
    id_sets = {lv: {s.id for s in samples} for lv, samples in per_level.items()}
    reference = id_sets[spec.levels[0]]
    for lv, ids in id_sets.items():
        if ids != reference:
            gone = sorted(reference - ids) + sorted(ids - reference)
            raise HarnessError(
                f"sample ids at level {lv} do not match level {spec.levels[0]}; "
                f"mismatched ids: {gone[:20]}"
            )
    rows = []
    for lv in spec.levels:
        samples = per_level[lv]
        n_pos = sum(1 for s in samples if s.label == 1)
        n_neg = len(samples) - n_pos
        rows.append((lv, auc(samples), n_pos, n_neg))
    if out_csv is not None:
        out_csv = Path(out_csv)
        out_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["level", "auc", "n_pos", "n_neg"])
            for lv, value, n_pos, n_neg in rows:
                writer.writerow([format_level(lv), f"{value:.6f}", n_pos, n_neg])
    return rows


def low_quality_config(base: PmmConfig | None = None) -> PmmConfig:
    """The weakened "low-quality" evaluation preset: the training
    degradation model at s=0.35, p=0.5 with distractors off. The exact
    weakening used for the published ablation is not public; this preset is
    a documented stand-in, not a canonical reproduction."""
    base = base or PmmConfig()
    return replace(base, p=0.5, s=0.35, p_d=0.0)
