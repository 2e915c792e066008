"""Training-time image degradations and the random-order scheduler.

Eight candidate degradations (smoothing, resize, two Gaussian-noise bands,
non-Gaussian noise, JPEG, enhance, distractors) are permuted uniformly and
applied independently with their configured probabilities. Every sampled
parameter is captured in a DegradationLog, and each applied op runs on its
own forked stream whose key is recorded, so a log replays bit-exactly.

All ops map unit-float RGB to unit-float RGB of the same extent except
resize, whose extent change is undone by the scheduler after the last op.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy.linalg import orth

from .core import (
    DegradationError,
    DistractorError,
    ImageBuffer,
    PmmConfig,
    RngStream,
    ValidationError,
    image_from_array,
)

_INTERP = {
    "linear": cv2.INTER_LINEAR,
    "cubic": cv2.INTER_CUBIC,
    "area": cv2.INTER_AREA,
}

_LINE_TYPES = (cv2.LINE_4, cv2.LINE_8, cv2.LINE_AA)

# Correlated-covariance rescale from the unit-interval formula back to the
# 0..255 scale, as published; see PmmConfig.correlated_cov_squared_rescale.
COV_RESCALE = 255.0
COV_RESCALE_SQUARED = 255.0**2


# ---------------------------------------------------------------------------
# Blur kernels


@dataclass(frozen=True)
class BlurKernel:
    """2-D non-negative convolution taps, odd extent, summing to 1."""

    taps: np.ndarray

    def __post_init__(self):
        t = self.taps
        if t.ndim != 2 or t.shape[0] % 2 == 0 or t.shape[1] % 2 == 0:
            raise ValidationError(f"kernel must be odd-sized 2-D, got {t.shape}")
        if (t < 0).any():
            raise ValidationError("kernel taps must be non-negative")
        if abs(float(t.sum()) - 1.0) > 1e-9:
            raise ValidationError(f"kernel taps sum to {t.sum()}, expected 1")
        t.flags.writeable = False

    @property
    def width(self) -> int:
        return self.taps.shape[1]

    @property
    def height(self) -> int:
        return self.taps.shape[0]


def sample_blur_kernel_params(rng: RngStream, s: float) -> dict:
    """Uniformly pick one of the three kernel families and its parameters."""
    kind = ("anisotropic", "isotropic", "uniform")[rng.categorical([1, 1, 1])]
    if kind == "anisotropic":
        return {
            "kind": kind,
            "sigma1": rng.uniform(0.0, 30.0 * s),
            "sigma2": rng.uniform(0.0, 30.0 * s),
            "angle": rng.uniform(0.0, np.pi),
        }
    if kind == "isotropic":
        return {"kind": kind, "sigma": rng.uniform(0.0, 30.0 * s)}
    # Continuous width draw, rounded to the nearest odd integer >= 3.
    w = rng.uniform(3.0, 30.0 * s)
    w_odd = max(3, int(2 * round((w - 1) / 2) + 1))
    return {"kind": kind, "width": w_odd}


def build_blur_kernel(params: dict) -> BlurKernel:
    kind = params["kind"]
    if kind == "uniform":
        w = params["width"]
        return BlurKernel(np.full((w, w), 1.0 / (w * w), dtype=np.float64))
    if kind == "isotropic":
        sigma = params["sigma"]
        half = int(np.ceil(3.0 * sigma))
        if half == 0:
            return BlurKernel(np.array([[1.0]]))
        ax = np.arange(-half, half + 1, dtype=np.float64)
        g = np.exp(-(ax**2) / (2.0 * sigma**2))
        taps = np.outer(g, g)
        return BlurKernel(taps / taps.sum())
    s1, s2, angle = params["sigma1"], params["sigma2"], params["angle"]
    half = int(np.ceil(3.0 * max(s1, s2)))
    if half == 0:
        return BlurKernel(np.array([[1.0]]))
    # Quadratic form with variances clamped away from zero so degenerate
    # draws collapse to a line instead of dividing by zero.
    v1, v2 = max(s1, 1e-6) ** 2, max(s2, 1e-6) ** 2
    c, sn = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -sn], [sn, c]])
    inv = rot @ np.diag([1.0 / v1, 1.0 / v2]) @ rot.T
    ax = np.arange(-half, half + 1, dtype=np.float64)
    xx, yy = np.meshgrid(ax, ax)
    quad = inv[0, 0] * xx**2 + 2.0 * inv[0, 1] * xx * yy + inv[1, 1] * yy**2
    with np.errstate(under="ignore"):
        taps = np.exp(-0.5 * quad)
    return BlurKernel(taps / taps.sum())


def make_blur_kernel(rng: RngStream, s: float) -> BlurKernel:
    """Random blur kernel: rotated anisotropic Gaussian, isotropic Gaussian,
    or a uniform box, each chosen with probability 1/3. Gaussian support is
    truncated at +-3 sigma."""
    if s <= 0:
        raise ValidationError(f"strength s={s} must be > 0")
    return build_blur_kernel(sample_blur_kernel_params(rng, s))


def _convolve_replicate(arr: np.ndarray, taps: np.ndarray) -> np.ndarray:
    if taps.shape == (1, 1):
        return arr * np.float32(taps[0, 0])
    flipped = np.ascontiguousarray(taps[::-1, ::-1])
    out = cv2.filter2D(arr, -1, flipped, borderType=cv2.BORDER_REPLICATE)
    return np.clip(out, 0.0, 1.0)


def smooth(image: ImageBuffer, kernel: BlurKernel) -> ImageBuffer:
    """Per-channel 2-D convolution with edge-replicate padding."""
    arr = image.to_float().data
    return image_from_array(_convolve_replicate(arr, kernel.taps))


# ---------------------------------------------------------------------------
# Resize


def _sample_resize_params(rng: RngStream, s: float) -> dict:
    branch = ("up", "down", "same")[rng.categorical([0.2, 0.7, 0.1])]
    if branch == "up":
        factor = rng.uniform(1.0, 2.0)
    elif branch == "down":
        factor = rng.uniform(0.25 / s, 1.0)
    else:
        factor = 1.0
    filt = ("linear", "cubic", "area")[rng.categorical([1, 1, 1])]
    return {"branch": branch, "factor": factor, "filter": filt}


def _apply_resize(arr: np.ndarray, params: dict) -> np.ndarray:
    h, w = arr.shape[:2]
    nw = max(1, int(round(w * params["factor"])))
    nh = max(1, int(round(h * params["factor"])))
    out = cv2.resize(arr, (nw, nh), interpolation=_INTERP[params["filter"]])
    return np.clip(out, 0.0, 1.0)


def resize_degrade(
    image: ImageBuffer, rng: RngStream, s: float
) -> tuple[ImageBuffer, float]:
    """Resample: upscale by Uniform(1,2) w.p. 0.2, downscale by
    Uniform(0.25/s, 1) w.p. 0.7, or keep scale 1 w.p. 0.1; filter chosen
    uniformly from linear/cubic/area. Returns the applied scale."""
    if 0.25 / s > 1.0:
        raise ValidationError(f"strength s={s} leaves down-scale interval empty")
    params = _sample_resize_params(rng, s)
    return image_from_array(_apply_resize(image.to_float().data, params)), params[
        "factor"
    ]


# ---------------------------------------------------------------------------
# Noise


def sample_orthogonal_factors(rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """(U, D) for channel-correlated noise: U orthogonalized from a
    Uniform(0,1) 3x3 draw, D diagonal with Uniform(0,1) entries."""
    d = np.diag([rng.uniform(0.0, 1.0) for _ in range(3)])
    for _ in range(8):
        m = np.array([[rng.uniform(0.0, 1.0) for _ in range(3)] for _ in range(3)])
        u = orth(m)
        if u.shape == (3, 3):
            return u, d
    raise DegradationError("failed to draw a full-rank matrix for orthogonalization")


def correlated_noise_cov(
    rng: RngStream, l2: float, s: float, squared_rescale: bool = False
) -> np.ndarray:
    """3x3 covariance for channel-correlated noise on the 0..255 scale:
    |(l2/255 * s)^2 * U^T D U| rescaled by 255 (or 255^2 with the switch)."""
    if l2 <= 0:
        raise ValidationError(f"noise level l2={l2} must be > 0")
    u, d = sample_orthogonal_factors(rng)
    unit_cov = np.abs((l2 / 255.0 * s) ** 2 * (u.T @ d @ u))
    scale = COV_RESCALE_SQUARED if squared_rescale else COV_RESCALE
    return scale * unit_cov


def _sample_gaussian_noise_params(
    rng: RngStream, l1: float, l2: float, s: float, squared_rescale: bool
) -> dict:
    variant = ("uncorrelated", "grayscale", "correlated")[
        rng.categorical([0.4, 0.4, 0.2])
    ]
    if variant == "correlated":
        cov = correlated_noise_cov(rng, l2, s, squared_rescale)
        return {"variant": variant, "cov255": cov.tolist()}
    return {"variant": variant, "sigma255": rng.uniform(l1 * s, l2 * s)}


def _draw_noise_field(rng: RngStream, params: dict, h: int, w: int) -> np.ndarray:
    """Unit-scale noise field; grayscale returns (h, w, 1) for broadcast."""
    variant = params["variant"]
    if variant == "uncorrelated":
        return rng.normal((h, w, 3), dtype=np.float32) * np.float32(
            params["sigma255"] / 255.0
        )
    if variant == "grayscale":
        return rng.normal((h, w, 1), dtype=np.float32) * np.float32(
            params["sigma255"] / 255.0
        )
    cov = np.asarray(params["cov255"], dtype=np.float64)
    return (rng.mvnormal(cov, (h, w)) / 255.0).astype(np.float32)


def gaussian_noise(
    image: ImageBuffer,
    rng: RngStream,
    l1: float,
    l2: float,
    s: float,
    squared_rescale: bool = False,
) -> ImageBuffer:
    """Additive Gaussian noise: uncorrelated / grayscale / channel-correlated
    with weights 0.4 / 0.4 / 0.2; sigma ~ Uniform(l1*s, l2*s) on the 0..255
    scale for the first two variants."""
    if l1 > l2:
        raise ValidationError(f"levels must satisfy l1 <= l2, got ({l1}, {l2})")
    arr = image.to_float().data
    params = _sample_gaussian_noise_params(rng, l1, l2, s, squared_rescale)
    field = _draw_noise_field(rng, params, arr.shape[0], arr.shape[1])
    return image_from_array(arr + field)


def non_gaussian_noise(
    image: ImageBuffer,
    rng: RngStream,
    s: float,
    speckle_levels: tuple[float, float] = (2.0, 25.0),
    squared_rescale: bool = False,
) -> ImageBuffer:
    """Speckle (multiplicative Gaussian machinery at levels (2, 25)) or
    Poisson shot noise value -> Poisson(value * lam) / lam with
    lam = 10^Uniform(2, 3), each chosen with probability 1/2."""
    arr = image.to_float().data
    params = _sample_non_gaussian_params(rng, s, speckle_levels, squared_rescale)
    return image_from_array(_apply_non_gaussian(arr, rng, params))


def _sample_non_gaussian_params(
    rng: RngStream, s: float, speckle_levels, squared_rescale: bool
) -> dict:
    if rng.bernoulli(0.5):
        l1, l2 = speckle_levels
        return {
            "mode": "speckle",
            "field": _sample_gaussian_noise_params(rng, l1, l2, s, squared_rescale),
        }
    return {"mode": "poisson", "lam_exponent": rng.uniform(2.0, 3.0)}


def _apply_non_gaussian(arr: np.ndarray, rng: RngStream, params: dict) -> np.ndarray:
    if params["mode"] == "speckle":
        field = _draw_noise_field(rng, params["field"], arr.shape[0], arr.shape[1])
        return np.clip(arr + arr * field, 0.0, 1.0)
    lam = 10.0 ** params["lam_exponent"]
    shot = rng.poisson(np.clip(arr, 0.0, 1.0).astype(np.float64) * lam) / lam
    return np.clip(shot, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# JPEG and enhance


def _apply_jpeg(arr: np.ndarray, quality: int) -> np.ndarray:
    u8 = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    ok, buf = cv2.imencode(
        ".jpg", u8[:, :, ::-1], [int(cv2.IMWRITE_JPEG_QUALITY), int(quality)]
    )
    if not ok:
        raise DegradationError(f"JPEG encoding failed at quality {quality}")
    dec = cv2.imdecode(buf, cv2.IMREAD_COLOR)
    if dec is None or dec.shape[:2] != arr.shape[:2]:
        raise DegradationError("JPEG decoding failed or changed extent")
    return dec[:, :, ::-1].astype(np.float32) / 255.0


def jpeg_degrade(
    image: ImageBuffer,
    rng: RngStream,
    quality_range: tuple[float, float] = (10.0, 95.0),
) -> ImageBuffer:
    """Baseline JPEG round trip (4:2:0) at quality ~ Uniform(10, 95)."""
    q = int(round(rng.uniform(*quality_range)))
    return image_from_array(_apply_jpeg(image.to_float().data, q))


def _luma_mean(arr: np.ndarray) -> float:
    return float(
        0.299 * arr[:, :, 0].mean()
        + 0.587 * arr[:, :, 1].mean()
        + 0.114 * arr[:, :, 2].mean()
    )


def _apply_enhance(arr: np.ndarray, mode: str, factor: float) -> np.ndarray:
    if mode == "brightness":
        return np.clip(arr * np.float32(factor), 0.0, 1.0)
    mu = np.float32(_luma_mean(arr))
    return np.clip(mu + np.float32(factor) * (arr - mu), 0.0, 1.0)


def enhance(
    image: ImageBuffer,
    rng: RngStream,
    enhance_range: tuple[float, float] = (0.5, 1.5),
) -> ImageBuffer:
    """Brightness or contrast change (even odds) with factor ~
    Uniform(0.5, 1.5); contrast pivots on the per-image luma mean."""
    mode = "brightness" if rng.bernoulli(0.5) else "contrast"
    factor = rng.uniform(*enhance_range)
    return image_from_array(_apply_enhance(image.to_float().data, mode, factor))


# ---------------------------------------------------------------------------
# Distractors

_PRINTABLE = string.printable  # 100 characters


def _sample_text_params(rng: RngStream, w: int, h: int) -> dict:
    n = rng.randint(0, 10)
    text = "".join(_PRINTABLE[rng.randint(0, len(_PRINTABLE) - 1)] for _ in range(n))
    return {
        "kind": "text",
        "text": text,
        "org": [int(round(rng.uniform(-100.0, w))), int(round(rng.uniform(0.0, h + 100.0)))],
        "font": rng.randint(0, 7),
        "scale": rng.uniform(0.0, 8.0),
        "color": [rng.randint(0, 255) for _ in range(3)],
        "thickness": rng.randint(1, 8),
        "line_type": rng.randint(0, 2),
    }


def _apply_text(arr: np.ndarray, params: dict) -> np.ndarray:
    if not params["text"]:
        return arr
    base = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    canvas = base.copy()
    cv2.putText(
        canvas,
        params["text"],
        tuple(params["org"]),
        params["font"],
        params["scale"],
        tuple(params["color"]),
        params["thickness"],
        _LINE_TYPES[params["line_type"]],
    )
    changed = (canvas != base).any(axis=2)
    if not changed.any():
        return arr
    out = arr.copy()
    out[changed] = canvas[changed].astype(np.float32) / 255.0
    return out


def overlay_text(image: ImageBuffer, rng: RngStream) -> ImageBuffer:
    """Rasterize n ~ Uniform{0..10} random printable characters with fully
    randomized OpenCV text parameters (8 Hershey faces, scale ~ Uniform(0,8),
    uniform color, thickness in {1..8}); off-frame anchors just clip."""
    arr = image.to_float().data
    params = _sample_text_params(rng, image.width, image.height)
    return image_from_array(_apply_text(arr, params))


def _sample_patch_geometry(rng: RngStream, w: int, h: int) -> dict:
    x = rng.uniform(20.0, 100.0)
    y = rng.uniform(0.8 * x, 1.2 * x)
    pw = min(w, max(1, int(round(x))))
    ph = min(h, max(1, int(round(y))))
    return {
        "kind": "patch",
        "width": pw,
        "height": ph,
        "x": rng.randint(0, w - pw),
        "y": rng.randint(0, h - ph),
    }


def _load_patch(path: str) -> np.ndarray | None:
    data = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if data is None:
        return None
    return data[:, :, ::-1].astype(np.float32) / 255.0


def _sample_patch_params(rng: RngStream, w: int, h: int, gallery) -> dict:
    if not gallery:
        raise DistractorError("distractor gallery is empty")
    path = str(gallery[rng.randint(0, len(gallery) - 1)])
    if _load_patch(path) is None:
        # One redraw for a corrupt file, then give up.
        path = str(gallery[rng.randint(0, len(gallery) - 1)])
        if _load_patch(path) is None:
            raise DistractorError(f"unreadable distractor gallery file: {path}")
    params = _sample_patch_geometry(rng, w, h)
    params["path"] = path
    return params


def _apply_patch(arr: np.ndarray, params: dict) -> np.ndarray:
    patch = _load_patch(params["path"])
    if patch is None:
        raise DistractorError(f"unreadable distractor gallery file: {params['path']}")
    pw, ph = params["width"], params["height"]
    patch = cv2.resize(patch, (pw, ph), interpolation=cv2.INTER_LINEAR)
    out = arr.copy()
    out[params["y"] : params["y"] + ph, params["x"] : params["x"] + pw] = np.clip(
        patch, 0.0, 1.0
    )
    return out


def overlay_image_patch(
    image: ImageBuffer, gallery: list, rng: RngStream
) -> ImageBuffer:
    """Paste a random gallery image, resized to x ~ Uniform(20, 100) by
    y ~ Uniform(0.8x, 1.2x) pixels, opaquely at a position fully inside
    the frame."""
    arr = image.to_float().data
    params = _sample_patch_params(rng, image.width, image.height, gallery)
    return image_from_array(_apply_patch(arr, params))


def _apply_distractors(
    arr: np.ndarray, gallery, rng: RngStream, p_d: float, max_count: int
) -> tuple[np.ndarray, dict]:
    items = []
    while len(items) < max_count and rng.bernoulli(p_d):
        if rng.bernoulli(0.5):
            params = _sample_text_params(rng, arr.shape[1], arr.shape[0])
            arr = _apply_text(arr, params)
        else:
            params = _sample_patch_params(rng, arr.shape[1], arr.shape[0], gallery)
            arr = _apply_patch(arr, params)
        items.append(params)
    return arr, {"count": len(items), "items": items}


def add_distractors(
    image: ImageBuffer,
    gallery: list,
    rng: RngStream,
    p_d: float,
    max_count: int = 10,
) -> tuple[ImageBuffer, int]:
    """Add distractors while a Bernoulli(p_d) keeps succeeding, capped at
    max_count; each one is text or an image patch with even odds."""
    if not 0.0 <= p_d <= 1.0:
        raise ValidationError(f"p_d={p_d} must lie in [0, 1]")
    arr, params = _apply_distractors(
        image.to_float().data, gallery, rng, p_d, max_count
    )
    return image_from_array(arr), params["count"]


# ---------------------------------------------------------------------------
# Scheduler


BASE_OPS = (
    "smooth",
    "resize",
    "gaussian_noise_broad",
    "gaussian_noise_strong",
    "non_gaussian_noise",
    "jpeg",
    "enhance",
    "distractors",
)


@dataclass
class DegradationOpRecord:
    name: str
    applied: bool
    stream_key: str = ""
    params: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "name": self.name,
            "applied": self.applied,
            "stream_key": self.stream_key,
            "params": self.params,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DegradationOpRecord":
        return cls(obj["name"], obj["applied"], obj["stream_key"], obj["params"])


@dataclass
class DegradationLog:
    """Ordered record of one scheduler pass, sufficient for bit-exact replay."""

    records: list[DegradationOpRecord] = field(default_factory=list)
    restored_extent: tuple[int, int] | None = None  # (width, height)

    def applied_names(self) -> list[str]:
        return [r.name for r in self.records if r.applied]

    def to_json_obj(self) -> dict:
        return {
            "ops": [r.to_json_obj() for r in self.records],
            "restored_extent": list(self.restored_extent)
            if self.restored_extent
            else None,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "DegradationLog":
        restored = obj.get("restored_extent")
        return cls(
            [DegradationOpRecord.from_json_obj(o) for o in obj["ops"]],
            tuple(restored) if restored else None,
        )


def _run_op(
    name: str, arr: np.ndarray, gallery, op_rng: RngStream, config: PmmConfig
) -> tuple[np.ndarray, dict]:
    sq = config.correlated_cov_squared_rescale
    if name == "smooth":
        params = sample_blur_kernel_params(op_rng, config.s)
        return _convolve_replicate(arr, build_blur_kernel(params).taps), params
    if name == "resize":
        params = _sample_resize_params(op_rng, config.s)
        return _apply_resize(arr, params), params
    if name in ("gaussian_noise_broad", "gaussian_noise_strong"):
        l1, l2 = (
            config.gaussian_levels_broad
            if name == "gaussian_noise_broad"
            else config.gaussian_levels_strong
        )
        params = _sample_gaussian_noise_params(op_rng, l1, l2, config.s, sq)
        field_ = _draw_noise_field(op_rng, params, arr.shape[0], arr.shape[1])
        return np.clip(arr + field_, 0.0, 1.0), params
    if name == "non_gaussian_noise":
        params = _sample_non_gaussian_params(op_rng, config.s, config.speckle_levels, sq)
        return _apply_non_gaussian(arr, op_rng, params), params
    if name == "jpeg":
        q = int(round(op_rng.uniform(*config.jpeg_quality_range)))
        return _apply_jpeg(arr, q), {"quality": q}
    if name == "enhance":
        mode = "brightness" if op_rng.bernoulli(0.5) else "contrast"
        factor = op_rng.uniform(*config.enhance_range)
        return _apply_enhance(arr, mode, factor), {"mode": mode, "factor": factor}
    if name == "distractors":
        return _apply_distractors(
            arr, gallery, op_rng, config.p_d, config.max_distractors
        )
    raise DegradationError(f"unknown degradation op {name!r}")


def apply_degradations(
    image: ImageBuffer,
    gallery: list,
    rng: RngStream,
    config: PmmConfig,
) -> tuple[ImageBuffer, DegradationLog]:
    """Permute the eight candidates uniformly and apply each independently:
    probability p for the ordinary ops, p/2 for each Gaussian-noise band,
    and the p_d chain for distractors. Any resize is undone at the end so
    the output extent always equals the input extent."""
    arr = image.to_float().data
    orig_h, orig_w = arr.shape[:2]
    order = rng.permutation(len(BASE_OPS))
    log = DegradationLog()
    for pos, idx in enumerate(order):
        name = BASE_OPS[int(idx)]
        if name == "distractors":
            op_rng = rng.fork(f"op{pos}:{name}")
            try:
                arr, params = _run_op(name, arr, gallery, op_rng, config)
            except Exception as exc:
                raise _with_log(exc, log)
            applied = params["count"] > 0
            log.records.append(
                DegradationOpRecord(name, applied, op_rng.key_hex, params)
            )
            continue
        gate_p = config.p / 2.0 if name.startswith("gaussian_noise") else config.p
        if rng.bernoulli(gate_p):
            op_rng = rng.fork(f"op{pos}:{name}")
            try:
                arr, params = _run_op(name, arr, gallery, op_rng, config)
            except Exception as exc:
                raise _with_log(exc, log)
            log.records.append(DegradationOpRecord(name, True, op_rng.key_hex, params))
        else:
            log.records.append(DegradationOpRecord(name, False))
    if arr.shape[:2] != (orig_h, orig_w):
        arr = np.clip(
            cv2.resize(arr, (orig_w, orig_h), interpolation=cv2.INTER_LINEAR), 0.0, 1.0
        )
        log.restored_extent = (orig_w, orig_h)
    return image_from_array(arr), log


def _with_log(exc: Exception, log: DegradationLog) -> DegradationError:
    err = DegradationError(f"degradation failed after {log.applied_names()}: {exc}")
    err.partial_log = log
    err.__cause__ = exc
    return err


def replay_degradations(
    image: ImageBuffer,
    gallery: list,
    log: DegradationLog,
    config: PmmConfig,
) -> ImageBuffer:
    """Re-run a DegradationLog bit-exactly from its recorded stream keys.

    Re-sampled parameters are checked against the recorded ones; a mismatch
    means the log does not belong to this config and raises."""
    arr = image.to_float().data
    for rec in log.records:
        if not rec.applied:
            continue
        op_rng = RngStream.from_key(rec.stream_key)
        arr, params = _run_op(rec.name, arr, gallery, op_rng, config)
        if params != rec.params:
            raise DegradationError(
                f"log replay diverged on {rec.name}: {params} != {rec.params}"
            )
    if log.restored_extent is not None:
        w, h = log.restored_extent
        arr = np.clip(cv2.resize(arr, (w, h), interpolation=cv2.INTER_LINEAR), 0.0, 1.0)
    return image_from_array(arr)
