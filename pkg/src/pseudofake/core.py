"""Shared domain types, deterministic RNG streams, and configuration loading.

All pixel processing in this package happens in unit-float RGB; 8-bit
conversion is confined to I/O boundaries. Every type here is immutable
after construction and safe to share across worker processes. RngStream
is single-owner: never share one stream between threads, fork children
instead.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
import yaml


# ---------------------------------------------------------------------------
# Errors


class PseudofakeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PseudofakeError):
    """Config file could not be parsed or contains an unknown key."""


class ValidationError(PseudofakeError):
    """A value violates its documented domain."""


class DegradationError(PseudofakeError):
    """A degradation operation failed (e.g. codec error)."""


class DistractorError(DegradationError):
    """A distractor overlay could not be produced."""


class MaskError(PseudofakeError):
    """Mask generation failed (degenerate geometry, empty support)."""


class BlendError(PseudofakeError):
    """Blending failed (extent mismatch, solver non-convergence)."""


class ArtifactError(PseudofakeError):
    """A generator-artifact cache entry is unreadable or inconsistent."""


class MetricError(PseudofakeError):
    """Metric inputs are unusable (e.g. single-class AUC)."""


class HarnessError(PseudofakeError):
    """Evaluation-harness inputs are inconsistent."""


class PipelineError(PseudofakeError):
    """Dataset-level pipeline failure."""


# ---------------------------------------------------------------------------
# Deterministic RNG


_KEY_BYTES = 16  # Philox 2x64 key


def _derive_key(material: bytes) -> bytes:
    return hashlib.sha256(material).digest()[:_KEY_BYTES]


class RngStream:
    """Counter-based deterministic random stream (Philox keyed by SHA-256).

    A stream is a pure function of (seed, fork-label path): the same seed
    and the same sequence of draws produce the same outputs on every
    platform, and forked children are order-independent, which is what
    makes per-image parallelism reproducible. Forking never consumes
    state from the parent.
    """

    def __init__(self, seed: int, _key: bytes | None = None):
        if _key is None:
            _key = _derive_key(b"pmm-rng-v1:" + str(int(seed)).encode("ascii"))
        self._key = _key
        self._gen = np.random.Generator(
            np.random.Philox(key=np.frombuffer(_key, dtype=np.uint64))
        )

    @classmethod
    def from_key(cls, key_hex: str) -> "RngStream":
        """Rebuild a stream from its hex key (used for log replay)."""
        return cls(0, _key=bytes.fromhex(key_hex))

    @property
    def key_hex(self) -> str:
        return self._key.hex()

    def fork(self, label: str) -> "RngStream":
        """Child stream derived from (this stream's key, label)."""
        return RngStream(0, _key=_derive_key(self._key + label.encode("utf-8")))

    # -- draws ------------------------------------------------------------

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return float(self._gen.uniform(lo, hi))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer, inclusive on both ends."""
        return int(self._gen.integers(lo, hi + 1))

    def normal(self, size=None, dtype=np.float64):
        """Standard normal draw; scalar float when size is None."""
        if size is None:
            return float(self._gen.standard_normal())
        return self._gen.standard_normal(size, dtype=dtype)

    def poisson(self, lam):
        return self._gen.poisson(lam)

    def bernoulli(self, p: float) -> bool:
        return bool(self._gen.random() < p)

    def categorical(self, weights: Sequence[float]) -> int:
        """Index drawn with the given (unnormalized) weights; one draw."""
        w = np.asarray(weights, dtype=np.float64)
        u = self._gen.random() * w.sum()
        return int(np.searchsorted(np.cumsum(w), u, side="right").clip(0, len(w) - 1))

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, seq: Sequence):
        return seq[self.randint(0, len(seq) - 1)]

    def mvnormal(self, cov: np.ndarray, size) -> np.ndarray:
        """Zero-mean multivariate normal field; tolerates the slightly
        indefinite covariances produced by element-wise absolute value."""
        return self._gen.multivariate_normal(
            np.zeros(cov.shape[0]), cov, size=size, check_valid="ignore", method="svd"
        )


def fork_stream(parent: RngStream, label: str) -> RngStream:
    """Functional alias for :meth:`RngStream.fork`."""
    return parent.fork(label)


def seed_for_id(identifier: str, base_seed: int = 0) -> int:
    """Stable 63-bit seed derived from a string id."""
    digest = hashlib.sha256(f"{base_seed}:{identifier}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


# ---------------------------------------------------------------------------
# Raster types


@dataclass(frozen=True)
class ImageBuffer:
    """Interleaved RGB raster, either uint8 {0..255} or float32 [0, 1].

    The sample array is frozen on construction; operations always return
    new buffers.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = self.data
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValidationError(f"image must be (H, W, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError("image extent must be positive")
        if arr.dtype == np.uint8:
            pass
        elif arr.dtype == np.float32:
            lo, hi = float(arr.min()), float(arr.max())
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValidationError("float image contains non-finite samples")
            if lo < 0.0 or hi > 1.0:
                raise ValidationError(
                    f"unit-float image out of range [{lo}, {hi}]"
                )
        else:
            raise ValidationError(f"unsupported image dtype {arr.dtype}")
        arr.flags.writeable = False

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 3

    @property
    def is_float(self) -> bool:
        return self.data.dtype == np.float32

    def to_float(self) -> "ImageBuffer":
        if self.is_float:
            return self
        return ImageBuffer(self.data.astype(np.float32) / 255.0)

    def to_uint8(self) -> "ImageBuffer":
        if not self.is_float:
            return self
        return ImageBuffer(
            np.clip(np.rint(self.data * 255.0), 0, 255).astype(np.uint8)
        )


def image_from_array(arr: np.ndarray) -> ImageBuffer:
    """Wrap an arbitrary float or integer array, clamping into range."""
    if arr.dtype == np.uint8:
        return ImageBuffer(arr.copy())
    return ImageBuffer(np.clip(arr, 0.0, 1.0).astype(np.float32))


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered 68-point facial landmarks (iBUG-68 convention), pixel coords.

    Coordinates may lie outside the image frame but must be finite.
    """

    points: np.ndarray

    N_POINTS = 68

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (self.N_POINTS, 2):
            raise ValidationError(
                f"landmarks must be ({self.N_POINTS}, 2), got {pts.shape}"
            )
        if not np.isfinite(pts).all():
            raise ValidationError("landmarks contain non-finite coordinates")
        object.__setattr__(self, "points", pts)
        pts.flags.writeable = False


@dataclass(frozen=True)
class BlendMask:
    """Single-channel soft mask in [0, 1], same extent as its image."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ValidationError(f"mask must be 2-D, got shape {v.shape}")
        if v.dtype != np.float32:
            raise ValidationError(f"mask must be float32, got {v.dtype}")
        lo, hi = float(v.min()) if v.size else 0.0, float(v.max()) if v.size else 0.0
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"mask values out of [0, 1]: [{lo}, {hi}]")
        v.flags.writeable = False

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# Configuration


def _pair(name: str, value) -> tuple[float, float]:
    try:
        a, b = value
        return (float(a), float(b))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {name!r} must be a pair [lo, hi]") from exc


@dataclass(frozen=True)
class PmmConfig:
    """All pipeline probabilities and strengths, plus the run seed.

    Defaults: each degradation fires with p=0.5 at strength s=0.5, Poisson
    blending is chosen half the time, each distractor continues with
    p_d=0.2, and every artifact cache substitutes with p_g=0.25.
    """

    p: float = 0.5
    s: float = 0.5
    p_p: float = 0.5
    p_d: float = 0.2
    p_g: float = 0.25
    gaussian_levels_broad: tuple[float, float] = (2.0, 100.0)
    gaussian_levels_strong: tuple[float, float] = (80.0, 100.0)
    speckle_levels: tuple[float, float] = (2.0, 25.0)
    jpeg_quality_range: tuple[float, float] = (10.0, 95.0)
    enhance_range: tuple[float, float] = (0.5, 1.5)
    max_distractors: int = 10
    seed: int = 0
    degrade_reals: bool = True
    # Correlated-noise covariance is rescaled by 255 as published; the
    # dimensionally-consistent 255**2 alternative sits behind this switch.
    correlated_cov_squared_rescale: bool = False

    def __post_init__(self):
        for name in ("p", "p_p", "p_d", "p_g"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                raise ValidationError(f"probability {name}={v!r} must lie in [0, 1]")
        if not (isinstance(self.s, (int, float)) and self.s > 0):
            raise ValidationError(f"strength s={self.s!r} must be > 0")
        if 0.25 / self.s > 1.0:
            raise ValidationError(
                f"strength s={self.s} leaves the down-scale interval "
                f"(0.25/s, 1) empty; need s >= 0.25"
            )
        for name in (
            "gaussian_levels_broad",
            "gaussian_levels_strong",
            "speckle_levels",
            "jpeg_quality_range",
            "enhance_range",
        ):
            pair = _pair(name, getattr(self, name))
            object.__setattr__(self, name, pair)
            if pair[0] > pair[1]:
                raise ValidationError(f"{name}={pair} must satisfy lo <= hi")
        if not isinstance(self.max_distractors, int) or self.max_distractors < 0:
            raise ValidationError(
                f"max_distractors={self.max_distractors!r} must be a count"
            )
        if not isinstance(self.seed, int):
            raise ValidationError(f"seed={self.seed!r} must be an integer")

    def with_overrides(self, **kwargs) -> "PmmConfig":
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    def fingerprint(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


_CONFIG_COERCERS = {
    "p": float,
    "s": float,
    "p_p": float,
    "p_d": float,
    "p_g": float,
    "max_distractors": int,
    "seed": int,
    "degrade_reals": bool,
    "correlated_cov_squared_rescale": bool,
}


def config_from_dict(raw: dict) -> PmmConfig:
    known = {f.name for f in fields(PmmConfig)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key: {key!r}")
        coerce = _CONFIG_COERCERS.get(key)
        if coerce is not None:
            if coerce is bool:
                if not isinstance(value, bool):
                    raise ConfigError(f"config key {key!r} must be true/false")
                kwargs[key] = value
            else:
                try:
                    kwargs[key] = coerce(value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(
                        f"config key {key!r} has invalid value {value!r}"
                    ) from exc
        else:
            kwargs[key] = _pair(key, value)
    return PmmConfig(**kwargs)


def load_config(path: str | Path) -> PmmConfig:
    """Parse the YAML key/value config file; absent keys take the
    documented defaults, unknown keys are an error."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} failed to parse: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a key/value mapping")
    return config_from_dict(raw)


# ---------------------------------------------------------------------------
# I/O boundaries (8-bit conversion happens only here)


def load_image(path: str | Path) -> ImageBuffer:
    data = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if data is None:
        raise PipelineError(f"failed to decode image: {path}")
    return ImageBuffer(np.ascontiguousarray(data[:, :, ::-1]))


def save_image_png(image: ImageBuffer, path: str | Path) -> None:
    """Write lossless PNG so the stored pixels are exactly the log's."""
    bgr = np.ascontiguousarray(image.to_uint8().data[:, :, ::-1])
    ok, buf = cv2.imencode(".png", bgr)
    if not ok:
        raise PipelineError(f"PNG encoding failed for {path}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(buf.tobytes())


def load_landmarks(path: str | Path) -> LandmarkSet:
    """Landmark files hold one JSON array of 68 [x, y] float pairs."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"landmark file {path} is not valid JSON") from exc
    return LandmarkSet(np.asarray(raw, dtype=np.float64))


def save_landmarks(landmarks: LandmarkSet, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(
        json.dumps([[float(x), float(y)] for x, y in landmarks.points]),
        encoding="utf-8",
    )
