"""End-to-end orchestration: source-target generation, mask choice and
deformation, blending, then degradations, over whole datasets.

Every image gets a child RNG stream derived from its relative path, so
outputs are a pure function of (config, inputs) regardless of worker count
or scheduling order. The manifest (JSON lines, one entry per image,
schema_version on every line) records every stage tag and sampled
parameter needed to regenerate an output bit-exactly.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import blend as blend_mod
from . import degrade as degrade_mod
from . import masks as masks_mod
from . import stg as stg_mod
from .core import (
    ImageBuffer,
    LandmarkSet,
    PipelineError,
    PmmConfig,
    PseudofakeError,
    RngStream,
    load_image,
    load_landmarks,
    save_image_png,
)

SCHEMA_VERSION = 1

MANIFEST_NAME = "manifest.jsonl"

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp", ".webp", ".tif", ".tiff"}

LABEL_REAL = "real"
LABEL_FAKE = "pseudo-fake"


@dataclass
class ManifestEntry:
    input_path: str
    label: str
    child_seed_label: str
    config_fingerprint: str
    output_path: str | None = None
    stg_tag: str | None = None
    mask_strategy: str | None = None
    blend_method: str | None = None
    degradation_log: degrade_mod.DegradationLog | None = None
    error: str | None = None
    schema_version: int = SCHEMA_VERSION

    def to_json_line(self) -> str:
        obj = {
            "schema_version": self.schema_version,
            "input_path": self.input_path,
            "output_path": self.output_path,
            "label": self.label,
            "stg_tag": self.stg_tag,
            "mask_strategy": self.mask_strategy,
            "blend_method": self.blend_method,
            "degradations": self.degradation_log.to_json_obj()
            if self.degradation_log is not None
            else None,
            "child_seed_label": self.child_seed_label,
            "config_fingerprint": self.config_fingerprint,
            "error": self.error,
        }
        return json.dumps(obj, sort_keys=True)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ManifestEntry":
        log = obj.get("degradations")
        return cls(
            input_path=obj["input_path"],
            label=obj["label"],
            child_seed_label=obj["child_seed_label"],
            config_fingerprint=obj["config_fingerprint"],
            output_path=obj.get("output_path"),
            stg_tag=obj.get("stg_tag"),
            mask_strategy=obj.get("mask_strategy"),
            blend_method=obj.get("blend_method"),
            degradation_log=degrade_mod.DegradationLog.from_json_obj(log)
            if log is not None
            else None,
            error=obj.get("error"),
            schema_version=obj.get("schema_version", SCHEMA_VERSION),
        )


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    path: Path | None = None

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [e.to_json_line() for e in self.entries]
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        self.path = path

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        entries = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                entries.append(ManifestEntry.from_json_obj(json.loads(line)))
        return cls(entries, Path(path))

    def find(self, input_path: str) -> ManifestEntry:
        for entry in self.entries:
            if entry.input_path == input_path:
                return entry
        raise PipelineError(f"manifest has no entry for {input_path!r}")

    @property
    def errors(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.error is not None]


def synthesize_pseudo_fake(
    rel_path: str,
    image: ImageBuffer,
    landmarks: LandmarkSet,
    caches: list[stg_mod.ArtifactCache],
    gallery: list,
    rng: RngStream,
    config: PmmConfig,
) -> tuple[ImageBuffer, ManifestEntry]:
    """Fixed stage order (randomness lives inside the stages): pair
    generation, mask choice, mask deformation, blending, degradations."""
    source, target, stg_tag = stg_mod.make_pair(
        rel_path, image, caches, rng.fork("stg"), config
    )
    mask, strategy = masks_mod.choose_mask(
        landmarks, rng.fork("mask"), image.width, image.height
    )
    soft_mask = masks_mod.deform_mask(mask, rng.fork("deform"))
    blended, method = blend_mod.blend(
        source, target, soft_mask, rng.fork("blend"), config.p_p
    )
    degraded, log = degrade_mod.apply_degradations(
        blended, gallery, rng.fork("degrade"), config
    )
    entry = ManifestEntry(
        input_path=rel_path,
        label=LABEL_FAKE,
        child_seed_label=rel_path,
        config_fingerprint=config.fingerprint(),
        stg_tag=stg_tag,
        mask_strategy=strategy.tag,
        blend_method=method,
        degradation_log=log,
    )
    return degraded, entry


def process_real(
    image: ImageBuffer,
    gallery: list,
    rng: RngStream,
    config: PmmConfig,
    rel_path: str = "",
) -> tuple[ImageBuffer, ManifestEntry]:
    """Reals share the degradation model (no blending); with degrade_reals
    off this is an identity copy."""
    if config.degrade_reals:
        out, log = degrade_mod.apply_degradations(
            image, gallery, rng.fork("degrade"), config
        )
    else:
        out, log = image.to_float(), None
    entry = ManifestEntry(
        input_path=rel_path,
        label=LABEL_REAL,
        child_seed_label=rel_path,
        config_fingerprint=config.fingerprint(),
        degradation_log=log,
    )
    return out, entry


def discover_images(input_root: str | Path) -> list[str]:
    root = Path(input_root)
    rels = [
        p.relative_to(root).as_posix()
        for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    ]
    return sorted(rels)


def _output_rel(rel_path: str) -> str:
    return str(Path(rel_path).with_suffix(".png"))


def _landmark_rel(rel_path: str) -> str:
    return str(Path(rel_path).with_suffix(".json"))


def _process_one(args: tuple) -> str:
    (
        rel_path,
        mode,
        config,
        input_root,
        landmark_root,
        output_root,
        caches,
        gallery,
    ) = args
    cv2.setNumThreads(1)
    root_rng = RngStream(config.seed)
    rng = root_rng.fork(rel_path)
    try:
        image = load_image(Path(input_root) / rel_path)
        if mode == "forge":
            landmarks = load_landmarks(Path(landmark_root) / _landmark_rel(rel_path))
            out, entry = synthesize_pseudo_fake(
                rel_path, image, landmarks, caches, gallery, rng, config
            )
        else:
            out, entry = process_real(image, gallery, rng, config, rel_path)
        entry.output_path = _output_rel(rel_path)
        save_image_png(out, Path(output_root) / entry.output_path)
    except (PseudofakeError, OSError, cv2.error) as exc:
        entry = ManifestEntry(
            input_path=rel_path,
            label=LABEL_FAKE if mode == "forge" else LABEL_REAL,
            child_seed_label=rel_path,
            config_fingerprint=config.fingerprint(),
            error=f"{type(exc).__name__}: {exc}",
        )
    return entry.to_json_line()


def run_dataset(
    config: PmmConfig,
    input_root: str | Path,
    landmark_root: str | Path | None,
    output_root: str | Path,
    caches: list[stg_mod.ArtifactCache] | None = None,
    workers: int = 1,
    mode: str = "forge",
) -> Manifest:
    """Process every image under input_root; outputs are byte-identical for
    any worker count. mode "forge" synthesizes pseudo-fakes (landmarks
    required per image); mode "real" runs the degradation model only."""
    if mode not in ("forge", "real"):
        raise PipelineError(f"unknown mode {mode!r}")
    if mode == "forge" and landmark_root is None:
        raise PipelineError("forge mode requires a landmark root")
    caches = caches or []
    input_root = Path(input_root)
    output_root = Path(output_root)
    if not input_root.is_dir():
        raise PipelineError(f"input root {input_root} is not a directory")
    output_root.mkdir(parents=True, exist_ok=True)
    rel_paths = discover_images(input_root)
    gallery = [str(input_root / rel) for rel in rel_paths]
    tasks = [
        (rel, mode, config, str(input_root), str(landmark_root), str(output_root), caches, gallery)
        for rel in rel_paths
    ]
    if workers <= 1 or len(tasks) <= 1:
        lines = [_process_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            lines = list(pool.map(_process_one, tasks, chunksize=8))
    entries = [ManifestEntry.from_json_obj(json.loads(line)) for line in lines]
    entries.sort(key=lambda e: e.input_path)
    manifest = Manifest(entries)
    manifest.write(output_root / MANIFEST_NAME)
    return manifest


def replay_entry(
    entry: ManifestEntry,
    config: PmmConfig,
    input_root: str | Path,
    landmark_root: str | Path | None,
    caches: list[stg_mod.ArtifactCache] | None = None,
    gallery: list | None = None,
) -> ImageBuffer:
    """Regenerate one manifest entry bit-exactly from the same inputs and
    config. The stage tags of the regenerated run are checked against the
    stored entry so silent config drift cannot pass unnoticed."""
    if entry.error is not None:
        raise PipelineError(f"cannot replay an error entry: {entry.error}")
    if entry.config_fingerprint != config.fingerprint():
        raise PipelineError(
            "config fingerprint mismatch: manifest was produced with a "
            "different configuration (or seed)"
        )
    caches = caches or []
    input_root = Path(input_root)
    if gallery is None:
        gallery = [str(input_root / rel) for rel in discover_images(input_root)]
    rng = RngStream(config.seed).fork(entry.child_seed_label)
    image = load_image(input_root / entry.input_path)
    if entry.label == LABEL_FAKE:
        landmarks = load_landmarks(
            Path(landmark_root) / _landmark_rel(entry.input_path)
        )
        out, fresh = synthesize_pseudo_fake(
            entry.input_path, image, landmarks, caches, gallery, rng, config
        )
    else:
        out, fresh = process_real(image, gallery, rng, config, entry.input_path)
    for field_name in ("stg_tag", "mask_strategy", "blend_method"):
        if getattr(fresh, field_name) != getattr(entry, field_name):
            raise PipelineError(
                f"replay diverged on {field_name}: "
                f"{getattr(fresh, field_name)} != {getattr(entry, field_name)}"
            )
    return out


def contact_sheet(images: list[ImageBuffer], columns: int = 4) -> ImageBuffer:
    """Tile images into one grid raster (pads the last row with black)."""
    if not images:
        raise PipelineError("contact sheet needs at least one image")
    w = max(im.width for im in images)
    h = max(im.height for im in images)
    cols = min(columns, len(images))
    rows = (len(images) + cols - 1) // cols
    sheet = np.zeros((rows * h, cols * w, 3), dtype=np.uint8)
    for i, im in enumerate(images):
        r, c = divmod(i, cols)
        arr = im.to_uint8().data
        sheet[r * h : r * h + im.height, c * w : c * w + im.width] = arr
    return ImageBuffer(sheet)
