"""Discrete calculus on a horizontally periodic channel with rigid lids.

Fields are plain ``(nx, nz)`` float arrays indexed ``[i, j]`` with
``x_i = i * dx`` (periodic, no duplicated node) and ``z_j = j * dz``
(both lids are nodes).  Vector fields are ``(2, nx, nz)`` arrays holding
the x- and z-components.

x-derivatives are Fourier-spectral.  The z-derivative is the diagonal-norm
summation-by-parts operator: centred differences in the interior and
one-sided differences on the lid rows.  Its norm is the trapezoidal rule,
so that ``integrate(a * ddz(b)) + integrate(ddz(a) * b)`` equals the lid
flux ``Lx * [a b]`` to rounding.  That identity is what lets the dynamics
conserve energy exactly in space.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft
from scipy.linalg import solve_banded


class GridError(ValueError):
    """Grid mismatch or invalid grid parameters."""


class DomainError(ValueError):
    """A point lies outside the channel in z."""


class CompatibilityError(ValueError):
    """Neumann data incompatible with the Poisson right-hand side."""

    def __init__(self, defect: float, scale: float):
        self.defect = defect
        super().__init__(
            f"incompatible Neumann problem: integral defect {defect:.3e} "
            f"(relative {defect / scale if scale else float('inf'):.3e})"
        )


@dataclass(frozen=True)
class Grid2D:
    nx: int
    nz: int
    Lx: float
    H: float
    workers: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.nx < 8 or self.nx % 2:
            raise GridError(f"nx must be even and >= 8, got {self.nx}")
        if self.nz < 5:
            raise GridError(f"nz must be >= 5, got {self.nz}")
        if not (self.Lx > 0 and self.H > 0):
            raise GridError("Lx and H must be positive")

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dz(self) -> float:
        return self.H / (self.nz - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nz)

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @cached_property
    def z(self) -> np.ndarray:
        return np.arange(self.nz) * self.dz

    @cached_property
    def X(self) -> np.ndarray:
        return np.broadcast_to(self.x[:, None], self.shape)

    @cached_property
    def Z(self) -> np.ndarray:
        return np.broadcast_to(self.z[None, :], self.shape)

    @cached_property
    def kx(self) -> np.ndarray:
        """Angular wavenumbers of the real FFT along x."""
        return 2 * np.pi * np.fft.rfftfreq(self.nx, d=self.dx)

    @cached_property
    def _ikx(self) -> np.ndarray:
        ik = 1j * self.kx
        ik[-1] = 0.0  # Nyquist mode has no real derivative
        return ik

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights: rectangle rule in x, trapezoid in z."""
        wz = np.full(self.nz, self.dz)
        wz[0] = wz[-1] = 0.5 * self.dz
        return np.broadcast_to(self.dx * wz[None, :], self.shape)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        k = np.arange(self.kx.size)
        return k < (2 * (self.nx // 2)) // 3

    def check(self, *fields: np.ndarray) -> None:
        for f in fields:
            if np.shape(f)[-2:] != self.shape:
                raise GridError(f"field shape {np.shape(f)} does not match grid {self.shape}")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


def same_grid(*grids: Grid2D) -> Grid2D:
    g0 = grids[0]
    for g in grids[1:]:
        if g != g0:
            raise GridError(f"grid mismatch: {g0} vs {g}")
    return g0


# -- differential operators -------------------------------------------------

def ddx(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Spectral x-derivative; acts on the second-to-last axis."""
    fh = sfft.rfft(f, axis=-2, workers=grid.workers)
    fh *= grid._ikx[:, None]
    return sfft.irfft(fh, n=grid.nx, axis=-2, workers=grid.workers)


def ddz(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Summation-by-parts z-derivative; acts on the last axis."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    inv = 1.0 / grid.dz
    out[..., 1:-1] = 0.5 * inv * (f[..., 2:] - f[..., :-2])
    out[..., 0] = inv * (f[..., 1] - f[..., 0])
    out[..., -1] = inv * (f[..., -1] - f[..., -2])
    return out


def dealias(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Two-thirds rule filter in x."""
    fh = sfft.rfft(f, axis=-2, workers=grid.workers)
    fh *= grid.dealias_mask[:, None]
    return sfft.irfft(fh, n=grid.nx, axis=-2, workers=grid.workers)


def grad(f: np.ndarray, grid: Grid2D) -> np.ndarray:
    grid.check(f)
    return np.stack([ddx(f, grid), ddz(f, grid)])


def divergence(v: np.ndarray, grid: Grid2D) -> np.ndarray:
    grid.check(v[0], v[1])
    return ddx(v[0], grid) + ddz(v[1], grid)


def perp_div(v: np.ndarray, grid: Grid2D) -> np.ndarray:
    """``d/dx v_z - d/dz v_x``, so that d(a . dx) = perp_div(a) dx^dz."""
    grid.check(v[0], v[1])
    return ddx(v[1], grid) - ddz(v[0], grid)


def laplacian(f: np.ndarray, grid: Grid2D, dfdz_bottom=None, dfdz_top=None) -> np.ndarray:
    """Compact second-order Laplacian (spectral in x).

    Lid rows use a ghost node fixed by the given Neumann data; when the data
    are omitted they are estimated with second-order one-sided differences.
    """
    grid.check(f)
    dz = grid.dz
    if dfdz_bottom is None:
        dfdz_bottom = (-3 * f[:, 0] + 4 * f[:, 1] - f[:, 2]) / (2 * dz)
    if dfdz_top is None:
        dfdz_top = (3 * f[:, -1] - 4 * f[:, -2] + f[:, -3]) / (2 * dz)
    fzz = np.empty_like(f)
    fzz[:, 1:-1] = (f[:, 2:] - 2 * f[:, 1:-1] + f[:, :-2]) / dz**2
    fzz[:, 0] = 2 * (f[:, 1] - f[:, 0]) / dz**2 - 2 * np.asarray(dfdz_bottom) / dz
    fzz[:, -1] = 2 * (f[:, -2] - f[:, -1]) / dz**2 + 2 * np.asarray(dfdz_top) / dz
    fh = sfft.rfft(f, axis=0, workers=grid.workers)
    fh *= -(grid.kx**2)[:, None]
    return fzz + sfft.irfft(fh, n=grid.nx, axis=0, workers=grid.workers)


# -- quadrature -------------------------------------------------------------

def integrate(f: np.ndarray, grid: Grid2D) -> float:
    """Rectangle rule in x, trapezoid in z.

    Summation order is fixed (z first, then x, both with ``np.sum`` over a
    contiguous axis) so results are reproducible bit for bit.
    """
    grid.check(f)
    return float(np.sum(np.sum(f * grid.weights, axis=1)))


def inner(a: np.ndarray, b: np.ndarray, grid: Grid2D) -> float:
    return integrate(a * b, grid)


def mean(f: np.ndarray, grid: Grid2D) -> float:
    return integrate(f, grid) / (grid.Lx * grid.H)


# -- Poisson solver ---------------------------------------------------------

def poisson_solve(rhs, neumann_top, neumann_bottom, grid: Grid2D, rtol: float = 1e-10) -> np.ndarray:
    """Solve ``laplacian(p) = rhs`` with dp/dz given on both lids.

    FFT in x leaves one tridiagonal system in z per wavenumber.  The zero
    wavenumber carries the compatibility condition and the gauge, which is
    fixed by a zero domain mean.
    """
    grid.check(rhs)
    nx, nz, dz = grid.nx, grid.nz, grid.dz
    gb = np.broadcast_to(np.asarray(neumann_bottom, dtype=float), (nx,))
    gt = np.broadcast_to(np.asarray(neumann_top, dtype=float), (nx,))

    # discrete Gauss theorem for the ghost-node Laplacian
    defect = integrate(rhs, grid) - grid.dx * (np.sum(gt) - np.sum(gb))
    scale = integrate(np.abs(rhs), grid) + grid.dx * (np.sum(np.abs(gt)) + np.sum(np.abs(gb)))
    if abs(defect) > rtol * max(scale, np.finfo(float).tiny):
        raise CompatibilityError(defect, scale)

    b = np.array(rhs, dtype=float)
    b[:, 0] += 2 * gb / dz
    b[:, -1] -= 2 * gt / dz
    bh = sfft.rfft(b, axis=0, workers=grid.workers)
    nk = bh.shape[0]
    ph = np.zeros_like(bh)

    inv2 = 1.0 / dz**2
    for k in range(nk):
        ab = np.zeros((3, nz))
        ab[0, 1:] = inv2
        ab[1, :] = -2 * inv2 - grid.kx[k] ** 2
        ab[2, :-1] = inv2
        ab[0, 1] = 2 * inv2  # bottom ghost row
        ab[2, -2] = 2 * inv2  # top ghost row
        if k == 0:
            ph[0] = _solve_k0(bh[0].real, nz, dz)
            continue
        ph[k] = solve_banded((1, 1), ab, bh[k])
    p = sfft.irfft(ph, n=nx, axis=0, workers=grid.workers)
    p -= mean(p, grid)
    return p


def _solve_k0(r: np.ndarray, nz: int, dz: float) -> np.ndarray:
    """Zero-wavenumber Neumann problem: d2p/dz2 = r with ghost rows.

    The system is singular with a constant null space; the compatible
    solution is obtained by pinning p[0] and sweeping upward.
    """
    p = np.zeros(nz)
    # row 0: 2(p1 - p0)/dz^2 = r0
    p[1] = p[0] + 0.5 * dz**2 * r[0]
    for j in range(1, nz - 1):
        p[j + 1] = dz**2 * r[j] + 2 * p[j] - p[j - 1]
    return p


# -- interpolation ----------------------------------------------------------

def _cubic_weights(t: np.ndarray) -> np.ndarray:
    """Lagrange weights for nodes -1, 0, 1, 2 at offset t in [0, 1]."""
    tm1, t1, t2 = t + 1.0, t - 1.0, t - 2.0
    return np.stack([
        -t * t1 * t2 / 6.0,
        tm1 * t1 * t2 / 2.0,
        -tm1 * t * t2 / 2.0,
        tm1 * t * t1 / 6.0,
    ])


def _snap(s: np.ndarray) -> np.ndarray:
    # node coordinates that round to i +/- 1 ulp must hit the node exactly
    r = np.round(s)
    return np.where(np.abs(s - r) < 1e-12 * np.maximum(1.0, np.abs(r)), r, s)


class Interpolator:
    """Bicubic (tensor Lagrange) interpolation at a fixed set of points.

    Stencil weights are computed once, so several fields can be sampled at
    the same points cheaply.  Periodic in x; near the lids the z-stencil is
    shifted to stay inside the domain (one-sided cubic).
    """

    def __init__(self, grid: Grid2D, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, z = pts[:, 0], pts[:, 1]
        tol = 1e-12 * grid.H
        bad = (z < -tol) | (z > grid.H + tol)
        if np.any(bad):
            k = int(np.argmax(bad))
            raise DomainError(f"point {k} at z={z[k]!r} outside [0, {grid.H}]")
        z = np.clip(z, 0.0, grid.H)
        nwrap = np.floor(x / grid.Lx)
        sx = _snap((x - nwrap * grid.Lx) / grid.dx)
        ix = np.floor(sx).astype(int)
        tx = sx - ix
        raw = ix[:, None] + np.arange(-1, 3)[None, :]
        # periods crossed by each stencil column, for unwrapped map coordinates
        self.xwrap = np.floor_divide(raw, grid.nx) + nwrap[:, None]
        sz = _snap(z / grid.dz)
        jz = np.minimum(np.floor(sz).astype(int), grid.nz - 2)
        tz = sz - jz
        # shift stencil (nodes jz-1..jz+2) inside [0, nz-1]
        lo = np.clip(jz - 1, 0, grid.nz - 4)
        tz = tz + (jz - 1 - lo)  # offset relative to node lo+1
        self.ix = raw % grid.nx
        self.jz = lo[:, None] + np.arange(4)[None, :]
        self.wx = _cubic_weights(tx).T
        self.wz = _cubic_weights(tz).T
        self.grid = grid
        self.n = pts.shape[0]

    def __call__(self, f: np.ndarray, period: float | None = None) -> np.ndarray:
        """Sample ``f``; with ``period`` set, ``f`` is treated as a field that
        gains ``period`` per channel length in x (an unwrapped coordinate)."""
        vals = f[self.ix[:, :, None], self.jz[:, None, :]]
        if period is not None:
            vals = vals + (period * self.xwrap)[:, :, None]
        return np.einsum("pa,pab,pb->p", self.wx, vals, self.wz)


def interpolate(f: np.ndarray, points, grid: Grid2D) -> np.ndarray:
    grid.check(f)
    return Interpolator(grid, points)(f)
