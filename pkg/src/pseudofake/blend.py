"""Source/target compositing: alpha blending and gradient-domain Poisson
blending with Dirichlet boundary conditions (seamless cloning, plain
source-gradient guidance)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _poisson
from .core import BlendError, BlendMask, ImageBuffer, RngStream, image_from_array

# Hard-region threshold applied to the (soft, deformed) mask before the
# Poisson solve; recorded in the manifest via the method tag.
OMEGA_THRESHOLD = 0.5

POISSON_RTOL = 1e-6
POISSON_MAXITER = 10000


def _check_extents(source: ImageBuffer, target: ImageBuffer, mask: BlendMask) -> None:
    if (
        source.width != target.width
        or source.height != target.height
        or mask.width != source.width
        or mask.height != source.height
    ):
        raise BlendError(
            f"extent mismatch: source {source.width}x{source.height}, "
            f"target {target.width}x{target.height}, mask {mask.width}x{mask.height}"
        )


def alpha_blend(
    source: ImageBuffer, target: ImageBuffer, mask: BlendMask
) -> ImageBuffer:
    """Per-pixel convex combination mask*source + (1-mask)*target."""
    _check_extents(source, target, mask)
    s = source.to_float().data
    t = target.to_float().data
    m = mask.values[:, :, None]
    return ImageBuffer(m * s + (np.float32(1.0) - m) * t)


@dataclass
class PoissonBlendInfo:
    """Solver diagnostics for one Poisson blend (all three channels)."""

    omega_pixels: int = 0
    iterations: list[int] = field(default_factory=list)
    relative_residuals: list[float] = field(default_factory=list)
    max_laplacian_error: float = 0.0  # pre-clamp, over Omega, all channels
    note: str = ""


def poisson_blend_detailed(
    source: ImageBuffer,
    target: ImageBuffer,
    mask: BlendMask,
    rtol: float = POISSON_RTOL,
    maxiter: int = POISSON_MAXITER,
) -> tuple[ImageBuffer, PoissonBlendInfo]:
    """Poisson blend returning solver diagnostics alongside the image.

    The region Omega is mask > 0.5 shrunk off the one-pixel image border.
    Inside Omega the output's 4-neighbor Laplacian equals the source's;
    outside, the output is exactly the target. Solutions may overshoot the
    unit range and are clamped after the diagnostics are taken.
    """
    _check_extents(source, target, mask)
    s = source.to_float().data.astype(np.float64)
    t = target.to_float().data.astype(np.float64)
    omega_full = mask.values > OMEGA_THRESHOLD
    omega_full[0, :] = omega_full[-1, :] = False
    omega_full[:, 0] = omega_full[:, -1] = False

    info = PoissonBlendInfo(omega_pixels=int(omega_full.sum()))
    if info.omega_pixels == 0:
        info.note = "empty-omega: returned target unchanged"
        return target.to_float(), info

    ys, xs = np.nonzero(omega_full)
    y0, y1 = int(ys.min()) - 1, int(ys.max()) + 2
    x0, x1 = int(xs.min()) - 1, int(xs.max()) + 2
    omega = omega_full[y0:y1, x0:x1]
    hierarchy = _poisson._Hierarchy(omega)

    out = t.copy()
    for ch in range(3):
        b = _poisson.build_rhs(s[y0:y1, x0:x1, ch], t[y0:y1, x0:x1, ch], omega)
        x, iters, relres = _poisson.solve(b, omega, rtol, maxiter, hierarchy)
        if relres >= rtol:
            raise BlendError(
                f"Poisson solve did not converge: channel {ch}, "
                f"relative residual {relres:.3e} after {iters} iterations"
            )
        info.iterations.append(iters)
        info.relative_residuals.append(relres)
        resid = np.zeros_like(b)
        _poisson._apply_operator(x, omega, resid)
        info.max_laplacian_error = max(
            info.max_laplacian_error, float(np.abs(resid - b)[omega].max())
        )
        region = out[y0:y1, x0:x1, ch]
        region[omega] = x[omega]
    return image_from_array(out), info


def poisson_blend(
    source: ImageBuffer,
    target: ImageBuffer,
    mask: BlendMask,
    rtol: float = POISSON_RTOL,
    maxiter: int = POISSON_MAXITER,
) -> ImageBuffer:
    """Gradient-domain blend: solve the discrete Poisson equation per channel
    with the source's Laplacian as guidance and the target as Dirichlet
    boundary; falls back to the target when the mask region is empty."""
    out, _ = poisson_blend_detailed(source, target, mask, rtol, maxiter)
    return out


def blend(
    source: ImageBuffer,
    target: ImageBuffer,
    mask: BlendMask,
    rng: RngStream,
    p_p: float,
) -> tuple[ImageBuffer, str]:
    """Choose Poisson blending over alpha blending with probability p_p."""
    if rng.bernoulli(p_p):
        return poisson_blend(source, target, mask), "poisson"
    return alpha_blend(source, target, mask), "alpha"
