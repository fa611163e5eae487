"""Incompressible Euler-Boussinesq vertical slice dynamics.

Prognostic variables are the in-slice velocity ``u = (u_x, u_z)``, the
transverse velocity ``u_t`` and ``theta_s``; the density ``D`` stays 1 and
``s`` is a constant.  The momentum equations are

    du/dt   = -u.grad u + f u_t x^ + (g/theta0) theta_s z^ - grad p
    du_t/dt = -u.grad u_t - f u_x - (g/theta0)(z - H/2) s
    dtheta/dt = -u.grad theta_s - u_t s,   div u = 0.

Advection uses the skew-symmetric form ``(u.grad a + div(u a)) / 2`` and
pressure is an exact discrete projection (see :func:`project`), so the
semi-discrete energy is conserved to rounding; RK4 then gives fourth-order
drift in time.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import fft as sfft

from .algebra import DensityField, SliceVelocity, TracerPair
from .grid import Grid2D, ddx, ddz, dealias, mean

log = logging.getLogger(__name__)


class ParameterError(ValueError):
    pass


class BlowUpError(FloatingPointError):
    def __init__(self, field: str, time: float):
        self.field = field
        self.time = time
        super().__init__(f"non-finite values in {field} at t={time:.6g}")


@dataclass(frozen=True)
class ModelParams:
    f: float = 1e-4
    gravity: float = 9.81
    theta0: float = 300.0
    s: float = -3e-6
    H: float = 1.0e4
    Lx: float = 1.0e6

    def __post_init__(self):
        if not (self.gravity > 0 and self.theta0 > 0 and self.H > 0 and self.Lx > 0):
            raise ParameterError("gravity, theta0, H and Lx must be positive")

    @property
    def buoyancy_factor(self) -> float:
        return self.gravity / self.theta0


@dataclass(frozen=True)
class SliceState:
    u: np.ndarray  # (2, nx, nz)
    u_t: np.ndarray
    theta: np.ndarray
    D: np.ndarray
    s: float
    params: ModelParams
    grid: Grid2D
    time: float = 0.0

    @property
    def velocity(self) -> SliceVelocity:
        return SliceVelocity(self.u, self.u_t, self.grid)

    @property
    def tracer(self) -> TracerPair:
        return TracerPair(self.theta, self.s)

    @property
    def density(self) -> DensityField:
        return DensityField(self.D, self.grid)

    def replace(self, **kw) -> "SliceState":
        return dataclasses.replace(self, **kw)


@dataclass
class VarDerivs:
    """Variational derivatives of the EB Lagrangian divided by D.

    ``m_t`` holds ``u_t + f x`` with x in ``[0, Lx)``; derivatives of its
    ``f x`` part are taken analytically by consumers.
    """

    m_s: np.ndarray
    m_t: np.ndarray
    b: np.ndarray
    dldD: np.ndarray
    pressure: np.ndarray


@dataclass
class SimConfig:
    grid: Grid2D
    dt: float
    t_end: float
    init: dict = field(default_factory=lambda: {"kind": "eady_perturbed"})
    output_every: int = 1
    loops: list = field(default_factory=list)
    tracers: dict | None = None
    psi: dict | None = None
    dealias: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        if self.t_end < 0:
            raise ParameterError("t_end must be non-negative")


def height_factor(state_or_grid, params: ModelParams) -> np.ndarray:
    """``(g/theta0)(z - H/2)``, the buoyancy weight 1/D dl/dtheta_s."""
    grid = state_or_grid.grid if isinstance(state_or_grid, SliceState) else state_or_grid
    return params.buoyancy_factor * (grid.Z - 0.5 * grid.H)


def thermal_wind(grid: Grid2D, params: ModelParams, s: float) -> np.ndarray:
    """In-slice velocity ``-(g/theta0)(z - H/2) s / f`` whose Coriolis force
    balances the transverse buoyancy force."""
    return -height_factor(grid, params) * s / params.f


# -- projection -------------------------------------------------------------

def _dz_matrix(grid: Grid2D) -> np.ndarray:
    nz, inv = grid.nz, 1.0 / grid.dz
    Dz = np.zeros((nz, nz))
    for j in range(1, nz - 1):
        Dz[j, j - 1], Dz[j, j + 1] = -0.5 * inv, 0.5 * inv
    Dz[0, :2] = [-inv, inv]
    Dz[-1, -2:] = [-inv, inv]
    return Dz


@lru_cache(maxsize=16)
def _projector(grid: Grid2D):
    """Per-wavenumber inverses of ``Dz P0 Dz - k^2`` (P0 zeroes lid rows).

    Singular blocks (k = 0 and the Nyquist mode) have the constant and the
    z-checkerboard in their null space; their pseudo-inverse is used.
    """
    Dz = _dz_matrix(grid)
    P0 = np.eye(grid.nz)
    P0[0, 0] = P0[-1, -1] = 0.0
    DPD = Dz @ P0 @ Dz
    k2 = -(grid._ikx**2).real
    inv = np.empty((k2.size, grid.nz, grid.nz))
    for k, kk in enumerate(k2):
        M = DPD - kk * np.eye(grid.nz)
        inv[k] = np.linalg.pinv(M) if kk == 0.0 else np.linalg.inv(M)
    return inv


def project(u_star: np.ndarray, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """Orthogonal (trapezoid-weighted) projection onto discretely
    divergence-free fields with zero normal velocity at the lids.

    Returns the projected field and the zero-mean pressure ``p`` with
    ``u = u_star - grad p`` away from the lid rows.  The discrete divergence
    ``ddx(u_x) + ddz(u_z)`` of the result vanishes at every node.
    """
    grid.check(u_star[0], u_star[1])
    ux = u_star[0]
    wz = np.array(u_star[1], dtype=float)
    wz[:, 0] = 0.0
    wz[:, -1] = 0.0
    div_hat = sfft.rfft(ddx(ux, grid) + ddz(wz, grid), axis=0, workers=grid.workers)
    p_hat = np.einsum("kij,kj->ki", _projector(grid), div_hat)
    p = sfft.irfft(p_hat, n=grid.nx, axis=0, workers=grid.workers)
    p -= mean(p, grid)
    u_new = np.empty_like(u_star, dtype=float)
    u_new[0] = ux - ddx(p, grid)
    u_new[1] = wz - ddz(p, grid)
    # admissible fields have zero x-mean vertical velocity on every level;
    # imposing it exactly keeps rounding from working against the
    # hydrostatic pressure gradient
    u_new[1] -= np.mean(u_new[1], axis=0)
    u_new[1][:, 0] = 0.0
    u_new[1][:, -1] = 0.0
    return u_new, p


# -- tendencies -------------------------------------------------------------

def advect(u: np.ndarray, fields: np.ndarray, grid: Grid2D) -> np.ndarray:
    """Skew-symmetric advection ``(u.grad a + div(u a)) / 2`` of stacked fields."""
    fields = np.asarray(fields)
    m = fields.shape[0]
    both = np.concatenate([fields, fields * u[0]])
    dx_both = ddx(both, grid)
    dz_f = ddz(fields, grid)
    dz_wf = ddz(fields * u[1], grid)
    return 0.5 * (u[0] * dx_both[:m] + u[1] * dz_f + dx_both[m:] + dz_wf)


def raw_tendency(state: SliceState, dealiased: bool = False):
    """Unprojected tendencies ``(du*, du_t, dtheta)``."""
    p, g = state.params, state.grid
    bf = p.buoyancy_factor
    fields = np.stack([state.u[0], state.u[1], state.u_t, state.theta])
    adv = advect(state.u, fields, g)
    if dealiased:
        adv = dealias(adv, g)
    hf = height_factor(g, p)
    # buoyancy written as (g/theta0) theta z^ - grad(hf theta)/2, the form
    # whose work cancels the potential-energy flux of the theta advection
    # exactly; the gradient part is absorbed by the projection
    du = np.empty((2,) + g.shape)
    du[0] = -adv[0] + p.f * state.u_t - 0.5 * ddx(hf * state.theta, g)
    du[1] = -adv[1] + 0.5 * (bf * state.theta - hf * ddz(state.theta, g))
    # Coriolis and the transverse buoyancy force combined as a departure
    # from thermal wind, so the basic state cancels bit-exactly
    if p.f != 0:
        dut = -adv[2] - p.f * (state.u[0] - thermal_wind(g, p, state.s))
    else:
        dut = -adv[2] - hf * state.s
    dth = -adv[3] - state.u_t * state.s
    return du, dut, dth


def eb_rhs(state: SliceState, dealiased: bool = False):
    """Projected tendencies ``(du, du_t, dtheta, p)``.

    ``p`` is the physical (zero-mean) pressure, so the u-tendency equals
    ``-u.grad u + f u_t x^ + (g/theta0) theta z^ - grad p`` up to
    discretisation error.
    """
    du, dut, dth = raw_tendency(state, dealiased)
    du, p = project(du, state.grid)
    p += 0.5 * height_factor(state.grid, state.params) * state.theta
    p -= mean(p, state.grid)
    return du, dut, dth, p


def momenta(state: SliceState) -> tuple[np.ndarray, np.ndarray]:
    """``(1/D dl/du_S, 1/D dl/du_T) = (u_S, u_T + f x)``."""
    return state.u, state.u_t + state.params.f * state.grid.X


def eb_var_derivs(state: SliceState, pressure: np.ndarray | None = None) -> VarDerivs:
    if pressure is None:
        pressure = eb_rhs(state)[3]
    p = state.params
    m_s, m_t = momenta(state)
    b = np.array(height_factor(state.grid, p))
    dldD = (
        0.5 * (state.u[0] ** 2 + state.u[1] ** 2 + state.u_t**2)
        + p.f * state.u_t * state.grid.X
        - pressure
        + b * state.theta
    )
    return VarDerivs(m_s, m_t, b, dldD, pressure)


# -- time stepping ----------------------------------------------------------

# A passenger is co-evolved with the flow through the same RK4 stages:
# ``(value, rhs)`` where ``rhs(stage_state, value) -> d value / dt``.
Passenger = tuple[np.ndarray, Callable[[SliceState, np.ndarray], np.ndarray]]


def _check_finite(state: SliceState) -> None:
    for name, arr in (("u_S", state.u), ("u_T", state.u_t), ("theta_S", state.theta)):
        if not np.all(np.isfinite(arr)):
            raise BlowUpError(name, state.time)


def rk4_step(
    state: SliceState,
    dt: float,
    passengers: Sequence[Passenger] = (),
    dealiased: bool = False,
    stages_out: list | None = None,
):
    """One classical RK4 step; returns ``(new_state, new_passenger_values)``.

    Every stage tendency is projected, so all stage velocities are
    divergence-free.  ``stages_out``, when given, receives the four stage
    states in order.
    """
    if dt == 0:
        return state, [v for v, _ in passengers]
    if dt < 0:
        raise ParameterError("dt must be non-negative")

    def evaluate(st, vals):
        du, dut, dth, _ = eb_rhs(st, dealiased)
        dv = [rhs(st, v) for (_, rhs), v in zip(passengers, vals)]
        return (du, dut, dth), dv

    def shifted(k, dv, h):
        st = state.replace(
            u=state.u + h * k[0],
            u_t=state.u_t + h * k[1],
            theta=state.theta + h * k[2],
            time=state.time + h,
        )
        vals = [v + h * d for (v, _), d in zip(passengers, dv)]
        return st, vals

    v0 = [v for v, _ in passengers]
    stages = [state]
    k1, p1 = evaluate(state, v0)
    s2, v2 = shifted(k1, p1, 0.5 * dt)
    stages.append(s2)
    k2, p2 = evaluate(s2, v2)
    s3, v3 = shifted(k2, p2, 0.5 * dt)
    stages.append(s3)
    k3, p3 = evaluate(s3, v3)
    s4, v4 = shifted(k3, p3, dt)
    stages.append(s4)
    k4, p4 = evaluate(s4, v4)
    if stages_out is not None:
        stages_out.extend(stages)

    c = dt / 6.0
    new_u = state.u + c * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    new_u, _ = project(new_u, state.grid)
    new = state.replace(
        u=new_u,
        u_t=state.u_t + c * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]),
        theta=state.theta + c * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2]),
        time=state.time + dt,
    )
    _check_finite(new)
    new_vals = [
        v + c * (a + 2 * b + 2 * d + e) for v, a, b, d, e in zip(v0, p1, p2, p3, p4)
    ]
    return new, new_vals


# -- initial conditions -----------------------------------------------------

INIT_KINDS = ("rest", "stratified_rest", "eady_basic", "eady_perturbed")


def eady_shear(params: ModelParams) -> float:
    """dU/dz of the Eady basic state, ``-g s / (f theta0)``."""
    if params.f == 0:
        raise ParameterError("the Eady basic state needs f != 0")
    return -params.gravity * params.s / (params.f * params.theta0)


def init_state(kind: str, grid: Grid2D, params: ModelParams, N2: float = 2.5e-5,
               amplitude: float = 1e-2, mode: int = 1) -> SliceState:
    """Initial conditions.

    ``amplitude`` scales the eady_perturbed velocity perturbation relative
    to the basic-state lid speed ``|dU/dz| H / 2``; ``mode`` is its x
    wavenumber index.
    """
    if (grid.Lx, grid.H) != (params.Lx, params.H):
        raise ParameterError("grid and params disagree on Lx/H")
    zeros = grid.zeros()
    D = np.ones(grid.shape)
    if kind == "rest":
        return SliceState(np.zeros((2,) + grid.shape), zeros, zeros.copy(), D, params.s, params, grid)
    theta = np.array(N2 * params.theta0 * grid.Z / params.gravity)
    if kind == "stratified_rest":
        return SliceState(np.zeros((2,) + grid.shape), zeros, theta, D, 0.0, params, grid)
    if kind not in ("eady_basic", "eady_perturbed"):
        raise ParameterError(f"unknown initial condition {kind!r}; expected one of {INIT_KINDS}")
    shear = eady_shear(params)
    u = np.zeros((2,) + grid.shape)
    u[0] = thermal_wind(grid, params, params.s)
    basic = SliceState(u, zeros, theta, D, params.s, params, grid)
    if kind == "eady_basic" or amplitude == 0:
        return basic
    # streamfunction chi = sin(k x) sin(pi z / H); (d_z chi, -d_x chi) is
    # discretely divergence-free and vanishes normal to the lids
    k = 2 * np.pi * mode / grid.Lx
    chi = np.sin(k * grid.X) * np.sin(np.pi * grid.Z / grid.H)
    pert = np.stack([ddz(chi, grid), -ddx(chi, grid)])
    pert *= amplitude * abs(shear) * 0.5 * grid.H / np.max(np.abs(pert))
    pert, _ = project(pert, grid)
    return basic.replace(u=basic.u + pert)


def default_params() -> ModelParams:
    return ModelParams()


def cfl_number(state: SliceState, dt: float) -> float:
    """Advective Courant number ``dt (max|u_x|/dx + max|u_z|/dz)``."""
    g = state.grid
    return float(dt * (np.max(np.abs(state.u[0])) / g.dx + np.max(np.abs(state.u[1])) / g.dz))
