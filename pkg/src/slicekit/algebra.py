"""Semidirect-product group Diff(Omega) (s) F(Omega) and its Lie algebra.

Group elements are sampled maps ``(phi, f)``: target coordinates of every
reference node plus the transverse displacement there.  Algebra elements
are slice velocities ``(u_S, u_T)``.  All operations are pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid2D, Interpolator, divergence, grad, same_grid


@dataclass(frozen=True)
class SliceMapSample:
    """Sampled slice map.  ``phi_x`` is stored unwrapped: it increases by
    ``Lx`` when the reference point moves by one channel length."""

    phi_x: np.ndarray
    phi_z: np.ndarray
    f: np.ndarray
    grid: Grid2D


@dataclass(frozen=True)
class SliceVelocity:
    """In-slice vector field ``u_s`` (shape ``(2, nx, nz)``) with transverse
    component ``u_t``.  Also used for relabelling generators."""

    u_s: np.ndarray
    u_t: np.ndarray
    grid: Grid2D

    def __add__(self, other: "SliceVelocity") -> "SliceVelocity":
        g = same_grid(self.grid, other.grid)
        return SliceVelocity(self.u_s + other.u_s, self.u_t + other.u_t, g)

    def __sub__(self, other: "SliceVelocity") -> "SliceVelocity":
        g = same_grid(self.grid, other.grid)
        return SliceVelocity(self.u_s - other.u_s, self.u_t - other.u_t, g)

    def __mul__(self, c: float) -> "SliceVelocity":
        return SliceVelocity(c * self.u_s, c * self.u_t, self.grid)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(max(np.max(np.abs(self.u_s)), np.max(np.abs(self.u_t))))


@dataclass(frozen=True)
class TracerPair:
    theta_s: np.ndarray
    s: float


@dataclass(frozen=True)
class DensityField:
    D: np.ndarray
    grid: Grid2D

    def __post_init__(self):
        if np.any(self.D <= 0):
            raise ValueError("density must be positive")


def sd_identity(grid: Grid2D) -> SliceMapSample:
    return SliceMapSample(
        np.array(grid.X, dtype=float), np.array(grid.Z, dtype=float), grid.zeros(), grid
    )


def sd_compose(a: SliceMapSample, b: SliceMapSample) -> SliceMapSample:
    """``(phi_a o phi_b, f_a o phi_b + f_b)``.

    ``a`` is sampled at the targets of ``b`` with bicubic interpolation;
    targets beyond the lids raise :class:`~slicekit.grid.DomainError`.
    """
    g = same_grid(a.grid, b.grid)
    pts = np.column_stack([b.phi_x.ravel(), b.phi_z.ravel()])
    interp = Interpolator(g, pts)
    phi_x = interp(a.phi_x, period=g.Lx).reshape(g.shape)
    phi_z = interp(a.phi_z).reshape(g.shape)
    f = interp(a.f).reshape(g.shape) + b.f
    return SliceMapSample(phi_x, phi_z, f, g)


def _advective(u_s: np.ndarray, field_grad: np.ndarray) -> np.ndarray:
    return u_s[0] * field_grad[0] + u_s[1] * field_grad[1]


def lie_bracket(a: SliceVelocity, b: SliceVelocity) -> SliceVelocity:
    """``([u_S, w_S], u_S . grad w_T - w_S . grad u_T)`` with
    ``[u, w] = u . grad w - w . grad u``."""
    g = same_grid(a.grid, b.grid)
    ga = np.stack([grad(a.u_s[0], g), grad(a.u_s[1], g)])  # ga[c, d] = d_d a_c
    gb = np.stack([grad(b.u_s[0], g), grad(b.u_s[1], g)])
    s_part = np.stack([
        _advective(a.u_s, gb[c]) - _advective(b.u_s, ga[c]) for c in range(2)
    ])
    t_part = _advective(a.u_s, grad(b.u_t, g)) - _advective(b.u_s, grad(a.u_t, g))
    return SliceVelocity(s_part, t_part, g)


def lie_derivative_density(u_s: np.ndarray, rho: DensityField) -> DensityField:
    """Lie derivative of ``D dS``, i.e. ``div(u D)``; returned as a plain
    array since it need not be positive."""
    rho.grid.check(u_s[0])
    return divergence(u_s * rho.D, rho.grid)


def lie_derivative_tracer(v: SliceVelocity, t: TracerPair) -> TracerPair:
    """``(u_S . grad theta_S + s u_T, 0)``."""
    v.grid.check(t.theta_s)
    return TracerPair(_advective(v.u_s, grad(t.theta_s, v.grid)) + t.s * v.u_t, 0.0)
