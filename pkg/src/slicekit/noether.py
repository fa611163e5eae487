"""Particle-relabelling symmetries of the slice equations and their charges.

A relabelling generator ``(w_S, w_T)`` must leave ``D`` and
``(theta_S, s)`` invariant:

    div(D w_S) = 0,        w_S . grad theta_S + s w_T = 0.

The first is solved by a stream function ``psi`` (``D w_S = (d_z psi,
-d_x psi)``), the second by the closure ``w_T = -(w_S . grad theta_S)/s``.
Carried with the flow, either by transporting ``psi`` or by evolving
``(w_S, w_T)`` directly, the generator stays a symmetry, and the charge
``integral D (u_S . w_S + (u_T + f x) w_T)`` is conserved.  With
``m_T = u_T + f x`` that charge equals ``integral psi curl(u_S - m_T grad
theta_S / s)``, which is ``(1/s) integral psi q D``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .algebra import DensityField, SliceVelocity, TracerPair, lie_bracket
from .diagnostics import pv_field
from .dynamics import Passenger, SliceState, advect, rk4_step
from .grid import Grid2D, ddx, ddz, grad, integrate, perp_div

MODES = ("psi_generated", "free")
LID_TOL = 1e-14


class SymmetryError(ValueError):
    pass


class DegenerateClosureError(SymmetryError):
    """``s = 0``: the closure cannot be solved for ``w_T``."""


class BumpConfigError(SymmetryError):
    """A bump does not vanish at the lids."""


@dataclass(frozen=True)
class SymmetryField:
    psi: np.ndarray
    w_s: np.ndarray
    w_t: np.ndarray
    mode: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise SymmetryError(f"unknown mode {self.mode!r}; expected one of {MODES}")

    def replace(self, **kw) -> "SymmetryField":
        return dataclasses.replace(self, **kw)


# -- construction ------------------------------------------------------------

def _bump_profile(kind: str, r: np.ndarray) -> np.ndarray:
    if kind == "gaussian_bump":
        return np.exp(-0.5 * r**2)
    if kind == "cosine_bump":
        return np.where(r < 1.0, np.cos(0.5 * np.pi * np.minimum(r, 1.0)) ** 4, 0.0)
    raise SymmetryError(f"unknown bump kind {kind!r}")


def init_psi(kind: str, grid: Grid2D, amplitude: float = 1.0, centre=None,
             radii=None) -> np.ndarray:
    """Compactly supported stream function.

    ``gaussian_bump`` is ``amplitude * exp(-r^2/2)``, where ``radii`` are
    the standard deviations; ``cosine_bump`` is ``amplitude * cos^4(pi r/2)``
    for ``r < 1``, where ``radii`` are the support half-widths.  Here
    ``r^2 = (dx/rx)^2 + (dz/rz)^2`` with the minimal-image x distance.
    Several bumps are built by summing calls.

    Raises :class:`BumpConfigError` if ``|psi|`` on a lid exceeds
    ``1e-14`` of its peak.
    """
    if centre is None:
        centre = (0.5 * grid.Lx, 0.5 * grid.H)
    if radii is None:
        radii = (0.125 * grid.Lx, 0.25 * grid.H)
    dx = grid.X - centre[0]
    dx = dx - grid.Lx * np.round(dx / grid.Lx)
    r = np.hypot(dx / radii[0], (grid.Z - centre[1]) / radii[1])
    shape = _bump_profile(kind, r)
    peak = np.max(np.abs(shape))
    lids = max(np.max(np.abs(shape[:, 0])), np.max(np.abs(shape[:, -1])))
    if peak == 0 or lids > LID_TOL * peak:
        raise BumpConfigError(
            f"{kind} reaches the lids: boundary/peak = {lids / peak if peak else np.inf:.3e}"
        )
    return amplitude * shape


def w_from_psi(psi: np.ndarray, rho: DensityField) -> np.ndarray:
    """``w_S = (d_z psi, -d_x psi) / D``, i.e. ``w_S _| (D dx^dz) = d psi``."""
    g = rho.grid
    g.check(psi)
    return np.stack([ddz(psi, g), -ddx(psi, g)]) / rho.D


def w_T_closure(w_s: np.ndarray, theta: TracerPair, grid: Grid2D) -> np.ndarray:
    """``w_T = -(w_S . grad theta_S) / s``."""
    if theta.s == 0:
        raise DegenerateClosureError(
            "s = 0: the closure forces w_S tangent to theta contours and leaves w_T free"
        )
    gth = grad(theta.theta_s, grid)
    return -(w_s[0] * gth[0] + w_s[1] * gth[1]) / theta.s


def symmetry_from_psi(psi: np.ndarray, state: SliceState, mode: str = "psi_generated") -> SymmetryField:
    w_s = w_from_psi(psi, state.density)
    w_t = w_T_closure(w_s, state.tracer, state.grid)
    return SymmetryField(np.array(psi, dtype=float), w_s, w_t, mode)


# -- evolution ----------------------------------------------------------------

def _psi_rhs(st: SliceState, psi: np.ndarray) -> np.ndarray:
    # same transport operator as theta_S
    return -advect(st.u, psi[None], st.grid)[0]


def _free_rhs(st: SliceState, w: np.ndarray) -> np.ndarray:
    """``d_t w_S = -[u_S, w_S]``, ``d_t w_T = -u_S.grad w_T + w_S.grad u_T``;
    ``w`` packs ``(w_x, w_z, w_T)``."""
    br = lie_bracket(st.velocity, SliceVelocity(w[:2], w[2], st.grid))
    return -np.concatenate([br.u_s, br.u_t[None]])


def symmetry_passenger(sym: SymmetryField) -> Passenger:
    """The symmetry as an RK4 passenger of the flow step."""
    if sym.mode == "psi_generated":
        return sym.psi, _psi_rhs
    return np.concatenate([sym.w_s, sym.w_t[None]]), _free_rhs


def symmetry_from_passenger(sym: SymmetryField, value: np.ndarray, state: SliceState) -> SymmetryField:
    """Rebuild the symmetry from an advanced passenger value at ``state``."""
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite symmetry field at t={state.time:.6g}")
    if sym.mode == "psi_generated":
        return symmetry_from_psi(value, state)
    return sym.replace(w_s=value[:2], w_t=value[2])


def evolve_symmetry(sym: SymmetryField, state: SliceState, dt: float,
                    others=()) -> tuple[SliceState, SymmetryField]:
    """Advance flow and symmetry together by one RK4 step.

    ``psi_generated``: ``psi`` is transported and ``(w_S, w_T)`` rebuilt.
    ``free``: ``(w_S, w_T)`` are stepped directly.  Extra passengers in
    ``others`` ride along; use :func:`~slicekit.dynamics.rk4_step` directly
    for access to their values.
    """
    new_state, vals = rk4_step(state, dt, (symmetry_passenger(sym), *others))
    return new_state, symmetry_from_passenger(sym, vals[0], new_state)


# -- diagnostics ---------------------------------------------------------------

def closure_defect(sym: SymmetryField, state: SliceState) -> np.ndarray:
    """``w_T + (w_S . grad theta_S) / s`` pointwise."""
    if state.s == 0:
        raise DegenerateClosureError("closure undefined for s = 0")
    gth = grad(state.theta, state.grid)
    return sym.w_t + (sym.w_s[0] * gth[0] + sym.w_s[1] * gth[1]) / state.s


def proposition_residual(sym: SymmetryField, state: SliceState) -> float:
    """``|w_T + w_S.grad theta_S / s|_inf / (|w_T|_inf + |w_S.grad theta_S / s|_inf)``."""
    d = closure_defect(sym, state)
    scale = np.max(np.abs(sym.w_t)) + np.max(np.abs(d - sym.w_t))
    return float(np.max(np.abs(d)) / scale) if scale > 0 else 0.0


def noether_charge(sym: SymmetryField, state: SliceState) -> float:
    """``integral D (u_S . w_S + (u_T + f x) w_T)``."""
    g = state.grid
    m_t = state.u_t + state.params.f * g.X
    dens = state.u[0] * sym.w_s[0] + state.u[1] * sym.w_s[1] + m_t * sym.w_t
    return integrate(state.D * dens, g)


def charge_scale(sym, state) -> float:
    """Integral of the absolute charge density."""
    m_t = state.u_t + state.params.f * state.grid.X
    dens = np.abs(state.u[0] * sym.w_s[0] + state.u[1] * sym.w_s[1]) + np.abs(m_t * sym.w_t)
    return integrate(state.D * dens, state.grid)


def psi_dual(sym: SymmetryField, state: SliceState) -> float:
    """``integral psi curl(u_S - (u_T + f x) grad theta_S / s)``, the charge
    after integrating by parts onto ``psi``; ``curl(f x grad theta_S)`` is
    ``f d_z theta_S``."""
    if state.s == 0:
        raise DegenerateClosureError("dual form undefined for s = 0")
    g = state.grid
    flux = state.u_t * grad(state.theta, g)
    c = perp_div(state.u, g) - (perp_div(flux, g) + state.params.f * ddz(state.theta, g)) / state.s
    return integrate(sym.psi * c, g)


def noether_pv_check(sym: SymmetryField, state: SliceState) -> float:
    """``integral psi q D``; equals ``s`` times :func:`noether_charge`."""
    if sym.mode != "psi_generated":
        raise SymmetryError("the PV form needs a psi-generated symmetry")
    return integrate(sym.psi * pv_field(state) * state.D, state.grid)


def dual_mismatch(a: SymmetryField, b: SymmetryField) -> float:
    """``max(|a.w - b.w|_inf / |b.w|_inf)`` over the slice and transverse parts."""
    ds = np.max(np.abs(a.w_s - b.w_s)) / np.max(np.abs(b.w_s))
    dt = np.max(np.abs(a.w_t - b.w_t)) / np.max(np.abs(b.w_t))
    return float(max(ds, dt))
