"""Masked 5-point Poisson solver: geometric-multigrid-preconditioned CG.

Solves A x = b where, for every pixel i in the region Omega,
(A x)_i = 4 x_i - sum of the x values at i's 4-neighbors inside Omega,
and b_i carries the source Laplacian plus the Dirichlet (target) values at
exterior neighbors. Arrays are dense (h, w) crops around Omega; values
outside Omega are held at zero throughout.

The preconditioner is one V-cycle with symmetric red-black Gauss-Seidel
smoothing, so the outer conjugate-gradient iteration keeps its convergence
guarantee on any mask shape (thin rings, disconnected blobs). Kernels are
numba-compiled with on-disk caching; typical face-sized regions solve in a
few milliseconds per channel.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _rbgs_sweep(u, f, omega, parity):
    h, w = u.shape
    for i in range(h):
        for j in range((i + parity) & 1, w, 2):
            if omega[i, j]:
                s = f[i, j]
                if i > 0:
                    s += u[i - 1, j]
                if i + 1 < h:
                    s += u[i + 1, j]
                if j > 0:
                    s += u[i, j - 1]
                if j + 1 < w:
                    s += u[i, j + 1]
                u[i, j] = 0.25 * s


@njit(cache=True)
def _apply_operator(p, omega, out):
    h, w = p.shape
    for i in range(h):
        for j in range(w):
            if omega[i, j]:
                s = 4.0 * p[i, j]
                if i > 0:
                    s -= p[i - 1, j]
                if i + 1 < h:
                    s -= p[i + 1, j]
                if j > 0:
                    s -= p[i, j - 1]
                if j + 1 < w:
                    s -= p[i, j + 1]
                out[i, j] = s
            else:
                out[i, j] = 0.0


@njit(cache=True)
def _residual(u, f, omega, out):
    h, w = u.shape
    for i in range(h):
        for j in range(w):
            if omega[i, j]:
                s = 4.0 * u[i, j]
                if i > 0:
                    s -= u[i - 1, j]
                if i + 1 < h:
                    s -= u[i + 1, j]
                if j > 0:
                    s -= u[i, j - 1]
                if j + 1 < w:
                    s -= u[i, j + 1]
                out[i, j] = f[i, j] - s
            else:
                out[i, j] = 0.0


@njit(cache=True)
def _restrict_full_weighting(r, omega_c, out):
    hc, wc = out.shape
    h, w = r.shape
    for i in range(hc):
        for j in range(wc):
            if omega_c[i, j]:
                fi, fj = 2 * i, 2 * j
                acc = 4.0 * r[fi, fj]
                if fi > 0:
                    acc += 2.0 * r[fi - 1, fj]
                if fi + 1 < h:
                    acc += 2.0 * r[fi + 1, fj]
                if fj > 0:
                    acc += 2.0 * r[fi, fj - 1]
                if fj + 1 < w:
                    acc += 2.0 * r[fi, fj + 1]
                if fi > 0 and fj > 0:
                    acc += r[fi - 1, fj - 1]
                if fi > 0 and fj + 1 < w:
                    acc += r[fi - 1, fj + 1]
                if fi + 1 < h and fj > 0:
                    acc += r[fi + 1, fj - 1]
                if fi + 1 < h and fj + 1 < w:
                    acc += r[fi + 1, fj + 1]
                out[i, j] = 0.25 * acc
            else:
                out[i, j] = 0.0


@njit(cache=True)
def _prolong_add(uc, omega_f, uf):
    h, w = uf.shape
    hc, wc = uc.shape
    for i in range(h):
        for j in range(w):
            if omega_f[i, j]:
                ci, cj = i // 2, j // 2
                fy = 0.5 * (i & 1)
                fx = 0.5 * (j & 1)
                v00 = uc[ci, cj]
                v01 = uc[ci, cj + 1] if cj + 1 < wc else 0.0
                v10 = uc[ci + 1, cj] if ci + 1 < hc else 0.0
                v11 = uc[ci + 1, cj + 1] if (ci + 1 < hc and cj + 1 < wc) else 0.0
                uf[i, j] += (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * (
                    (1.0 - fx) * v10 + fx * v11
                )


class _Hierarchy:
    """Mask pyramid (injection coarsening) with per-level work buffers."""

    def __init__(self, omega: np.ndarray):
        levels = [np.ascontiguousarray(omega)]
        while min(levels[-1].shape) >= 8:
            coarse = np.ascontiguousarray(levels[-1][::2, ::2])
            if not coarse.any():
                break
            levels.append(coarse)
        self.levels = levels
        self.u = [np.zeros(l.shape) for l in levels]
        self.r = [np.zeros(l.shape) for l in levels]
        self.f = [np.zeros(l.shape) for l in levels]

    def vcycle(self, b: np.ndarray) -> np.ndarray:
        """One V(2,2) cycle on A u = b from a zero start; symmetric
        smoothing order keeps the cycle SPD as a CG preconditioner."""
        return self._cycle(b, 0)

    def _cycle(self, b, lvl):
        omega = self.levels[lvl]
        u = self.u[lvl]
        u[:] = 0.0
        if lvl == len(self.levels) - 1:
            for _ in range(40):
                _rbgs_sweep(u, b, omega, 0)
                _rbgs_sweep(u, b, omega, 1)
            return u
        for _ in range(2):
            _rbgs_sweep(u, b, omega, 0)
            _rbgs_sweep(u, b, omega, 1)
        _residual(u, b, omega, self.r[lvl])
        _restrict_full_weighting(self.r[lvl], self.levels[lvl + 1], self.f[lvl + 1])
        coarse = self._cycle(self.f[lvl + 1], lvl + 1)
        _prolong_add(coarse, omega, u)
        for _ in range(2):
            _rbgs_sweep(u, b, omega, 1)
            _rbgs_sweep(u, b, omega, 0)
        return u


def build_rhs(source: np.ndarray, target: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Right-hand side: source 5-point Laplacian inside Omega plus target
    values at each exterior 4-neighbor (Dirichlet boundary)."""
    h, w = source.shape
    b = 4.0 * source.astype(np.float64)
    b[1:, :] -= source[:-1, :]
    b[:-1, :] -= source[1:, :]
    b[:, 1:] -= source[:, :-1]
    b[:, :-1] -= source[:, 1:]
    for sl_to, sl_from in (
        (np.s_[:-1, :], np.s_[1:, :]),
        (np.s_[1:, :], np.s_[:-1, :]),
        (np.s_[:, :-1], np.s_[:, 1:]),
        (np.s_[:, 1:], np.s_[:, :-1]),
    ):
        contrib = np.zeros((h, w))
        contrib[sl_to] = np.where(omega[sl_from], 0.0, target[sl_from])
        b += contrib
    b[~omega] = 0.0
    return b


def solve(
    b: np.ndarray,
    omega: np.ndarray,
    rtol: float = 1e-6,
    maxiter: int = 10000,
    hierarchy: _Hierarchy | None = None,
) -> tuple[np.ndarray, int, float]:
    """Multigrid-preconditioned CG on the masked 5-point system.

    Returns (x, iterations, relative residual); x is zero outside Omega.
    The hierarchy may be shared between the channels of one blend.
    """
    omega = np.ascontiguousarray(omega)
    if hierarchy is None:
        hierarchy = _Hierarchy(omega)
    x = np.zeros_like(b)
    r = np.where(omega, b, 0.0)
    bnorm = float(np.linalg.norm(r))
    if bnorm == 0.0:
        return x, 0, 0.0
    z = hierarchy.vcycle(r).copy()
    p = z.copy()
    rz = float((r * z).sum())
    Ap = np.zeros_like(b)
    relres = 1.0
    for it in range(1, maxiter + 1):
        _apply_operator(p, omega, Ap)
        pAp = float((p * Ap).sum())
        if pAp <= 0.0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        relres = float(np.linalg.norm(r)) / bnorm
        if relres < rtol:
            return x, it, relres
        z = hierarchy.vcycle(r).copy()
        rz_new = float((r * z).sum())
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, relres
