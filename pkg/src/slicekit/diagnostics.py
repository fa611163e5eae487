"""Conserved quantities of the slice equations and the Euler-Poincare residual.

Material loops and PV tracers are Lagrangian marker sets.  Their x
coordinates are kept unwrapped (they are never reduced modulo ``Lx``), so a
loop stays a continuous polyline and the non-periodic ``f x`` term of the
circulation integrand can be evaluated along it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dynamics import (
    Passenger,
    SliceState,
    eb_var_derivs,
    height_factor,
)
from .grid import DomainError, Interpolator, ddx, ddz, grad, integrate, perp_div


class LoopTopologyError(ValueError):
    """Loop wraps around the periodic direction."""


class MarkerExitError(DomainError):
    """A marker left the channel through a lid."""


def energy(state: SliceState) -> float:
    """``integral D (|u_S|^2/2 + u_T^2/2 - (g/theta0)(z - H/2) theta_S)``."""
    u = state.u
    e = 0.5 * (u[0] ** 2 + u[1] ** 2 + state.u_t**2)
    e -= height_factor(state.grid, state.params) * state.theta
    return integrate(state.D * e, state.grid)


def kinetic_energy(state: SliceState) -> float:
    u = state.u
    return integrate(0.5 * state.D * (u[0] ** 2 + u[1] ** 2 + state.u_t**2), state.grid)


def pv_field(state: SliceState) -> np.ndarray:
    """Potential vorticity ``q``.

    ``q D = s curl(u_S) - curl((u_T + f x) grad theta_S)`` with
    ``curl(a) = d_x a_z - d_z a_x``; the ``f x`` part is taken analytically,
    ``curl(f x grad theta_S) = f d_z theta_S``, so ``q`` is periodic.
    """
    g = state.grid
    flux = state.u_t * grad(state.theta, g)
    qd = state.s * perp_div(state.u, g) - perp_div(flux, g) - state.params.f * ddz(state.theta, g)
    return qd / state.D


# -- material loops ----------------------------------------------------------

@dataclass(frozen=True)
class MaterialLoop:
    """Closed polyline of markers in a channel of length ``Lx``.

    ``markers`` is ``(n, 2)`` with unwrapped x; the closing segment joins
    the last marker back to the first.
    """

    markers: np.ndarray
    Lx: float

    def __post_init__(self):
        m = np.asarray(self.markers, dtype=float)
        if m.ndim != 2 or m.shape[1] != 2 or m.shape[0] < 3:
            raise ValueError("a loop needs an (n >= 3, 2) marker array")
        object.__setattr__(self, "markers", m)

    @property
    def winding(self) -> int:
        """Net number of channel lengths crossed going once round the loop,
        judged by minimal-image steps between consecutive markers."""
        x = self.markers[:, 0]
        dx = np.diff(np.append(x, x[0]))
        steps = dx - self.Lx * np.round(dx / self.Lx)
        return int(round(float(np.sum(steps)) / self.Lx))

    def moved(self, markers: np.ndarray) -> "MaterialLoop":
        return MaterialLoop(markers, self.Lx)


def ellipse_loop(centre, radii, n: int, Lx: float, angle: float = 0.0) -> MaterialLoop:
    """Counter-clockwise ellipse of ``n`` markers, rotated by ``angle``."""
    t = 2 * np.pi * np.arange(n) / n
    ex, ez = radii[0] * np.cos(t), radii[1] * np.sin(t)
    c, s = np.cos(angle), np.sin(angle)
    pts = np.column_stack([centre[0] + c * ex - s * ez, centre[1] + s * ex + c * ez])
    return MaterialLoop(pts, Lx)


def circulation(state: SliceState, loop: MaterialLoop) -> float:
    """Kelvin circulation ``loop integral (s u_S - (u_T + f x) grad theta_S) . dx``.

    Gradients are taken on the grid and then interpolated to the markers;
    segments use the trapezoidal rule.  Loops must not wrap around the
    channel, since ``f x`` is not single-valued on such loops.
    """
    g = state.grid
    pts = loop.markers
    if loop.winding != 0 or _closing_jump(pts, g.Lx):
        raise LoopTopologyError("loop winds around the periodic direction")
    interp = Interpolator(g, pts)
    gth = grad(state.theta, g)
    m_t = interp(state.u_t) + state.params.f * pts[:, 0]
    fx = state.s * interp(state.u[0]) - m_t * interp(gth[0])
    fz = state.s * interp(state.u[1]) - m_t * interp(gth[1])
    d = np.roll(pts, -1, axis=0) - pts
    return float(0.5 * np.sum((fx + np.roll(fx, -1)) * d[:, 0] + (fz + np.roll(fz, -1)) * d[:, 1]))


def _closing_jump(pts: np.ndarray, Lx: float) -> bool:
    # stored x is unwrapped, so every step (including the closing one) must
    # be shorter than half a channel
    dx = np.diff(np.append(pts[:, 0], pts[0, 0]))
    return bool(np.any(np.abs(dx) >= 0.5 * Lx))


# -- marker advection --------------------------------------------------------

def _check_markers(state: SliceState, pts: np.ndarray) -> None:
    tol = 1e-9 * state.grid.H
    z = pts[:, 1]
    if np.any((z < -tol) | (z > state.grid.H + tol)):
        k = int(np.argmax((z < -tol) | (z > state.grid.H + tol)))
        raise MarkerExitError(f"marker {k} left the channel at z={z[k]!r}, t={state.time:.6g}")


def marker_velocity(state: SliceState, pts: np.ndarray) -> np.ndarray:
    """In-slice velocity at marker positions, ``(n, 2)``."""
    _check_markers(state, pts)
    pts = np.column_stack([pts[:, 0], np.clip(pts[:, 1], 0.0, state.grid.H)])
    interp = Interpolator(state.grid, pts)
    return np.column_stack([interp(state.u[0]), interp(state.u[1])])


def marker_passenger(points) -> Passenger:
    """Markers as an RK4 passenger of :func:`~slicekit.dynamics.rk4_step`."""
    return np.array(points, dtype=float), marker_velocity


def advect_markers(points, stages: Sequence[SliceState], dt: float) -> np.ndarray:
    """One RK4 step of ``dX/dt = u_S(X, t)`` using the four stage states of
    a field step (as filled in by ``rk4_step(..., stages_out=...)``).

    Gives the same result as carrying the markers as a passenger.
    """
    if len(stages) != 4:
        raise ValueError("need the four RK4 stage states")
    x0 = np.array(points, dtype=float)
    k1 = marker_velocity(stages[0], x0)
    k2 = marker_velocity(stages[1], x0 + 0.5 * dt * k1)
    k3 = marker_velocity(stages[2], x0 + 0.5 * dt * k2)
    k4 = marker_velocity(stages[3], x0 + dt * k3)
    out = x0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    _check_markers(stages[0], out)
    return out


# -- PV tracers --------------------------------------------------------------

@dataclass(frozen=True)
class TracerSet:
    positions: np.ndarray  # (n, 2), x unwrapped
    carried_pv: np.ndarray

    @classmethod
    def release(cls, state: SliceState, positions) -> "TracerSet":
        pts = np.array(positions, dtype=float)
        _check_markers(state, pts)
        return cls(pts, Interpolator(state.grid, pts)(pv_field(state)))

    def moved(self, positions: np.ndarray) -> "TracerSet":
        return TracerSet(np.asarray(positions, dtype=float), self.carried_pv)


def tracer_lattice(grid, nx: int = 16, nz: int = 16, margin: float = 0.1) -> np.ndarray:
    """``nx * nz`` release points on a regular lattice kept ``margin * H``
    away from the lids."""
    xs = (np.arange(nx) + 0.5) * grid.Lx / nx
    zs = np.linspace(margin, 1.0 - margin, nz) * grid.H
    X, Z = np.meshgrid(xs, zs, indexing="ij")
    return np.column_stack([X.ravel(), Z.ravel()])


def pv_tracers(state: SliceState, tracers: TracerSet) -> dict:
    """Max and RMS of ``|q(X(t), t) - q(X(0), 0)|`` over the tracers."""
    _check_markers(state, tracers.positions)
    q = Interpolator(state.grid, tracers.positions)(pv_field(state))
    err = np.abs(q - tracers.carried_pv)
    return {"max": float(np.max(err)), "rms": float(np.sqrt(np.mean(err**2)))}


def pv_range(state: SliceState) -> float:
    q = pv_field(state)
    return float(np.max(q) - np.min(q))


# -- Euler-Poincare residual -------------------------------------------------

def ep_residual(trajectory: Sequence[SliceState], lid_rows: int = 2) -> tuple[float, float]:
    """Max-norm residuals of the two vector-calculus Euler-Poincare equations

        (d_t + u.grad + (grad u)^T) m_S + m_T grad u_T + b grad theta_S - grad dl/dD = 0
        (d_t + u.grad) m_T + b s = 0

    at the middle snapshot of every consecutive triple, with centred time
    differences.  Snapshots must be equally spaced in time.

    The ``lid_rows`` rows next to each lid are excluded: the one-sided lid
    closure is first order, and product-rule defects on stencils that read
    lid values inherit that error.
    """
    if len(trajectory) < 3:
        raise ValueError("need at least three snapshots")
    times = np.array([s.time for s in trajectory])
    steps = np.diff(times)
    if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise ValueError("snapshots must be equally spaced in time")
    dt = steps[0]
    rs = rt = 0.0
    for prev, st, nxt in zip(trajectory, trajectory[1:], trajectory[2:]):
        r_s, r_t = _ep_terms(prev, st, nxt, dt)
        band = slice(lid_rows, st.grid.nz - lid_rows)
        rs = max(rs, float(np.max(np.abs(r_s[:, :, band]))))
        rt = max(rt, float(np.max(np.abs(r_t[:, band]))))
    return rs, rt


def _ep_terms(prev: SliceState, st: SliceState, nxt: SliceState, dt: float):
    g, p = st.grid, st.params
    f, u, ut = p.f, st.u, st.u_t
    vd = eb_var_derivs(st)
    gux, guz = grad(u[0], g), grad(u[1], g)
    gut = grad(ut, g)
    gth = grad(st.theta, g)
    # grad m_T = grad u_T + f x^; grad(f u_T x) = f x grad u_T + f u_T x^
    gmt = gut.copy()
    gmt[0] += f
    periodic = vd.dldD - f * ut * g.X
    gl = grad(periodic, g) + f * g.X * gut
    gl[0] += f * ut
    dmdt = (nxt.u - prev.u) / (2 * dt)
    adv = np.stack([u[0] * gux[0] + u[1] * gux[1], u[0] * guz[0] + u[1] * guz[1]])
    transpose = np.stack([gux[0] * u[0] + guz[0] * u[1], gux[1] * u[0] + guz[1] * u[1]])
    r_s = dmdt + adv + transpose + vd.m_t * gut + vd.b * gth - gl
    dmtdt = (nxt.u_t - prev.u_t) / (2 * dt)
    r_t = dmtdt + u[0] * gmt[0] + u[1] * gmt[1] + vd.b * st.s
    return r_s, r_t


def divergence_norm(state: SliceState) -> float:
    return float(np.max(np.abs(ddx(state.u[0], state.grid) + ddz(state.u[1], state.grid))))
