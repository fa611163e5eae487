import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from slicekit.diagnostics import (
    LoopTopologyError,
    MarkerExitError,
    MaterialLoop,
    TracerSet,
    advect_markers,
    circulation,
    ellipse_loop,
    energy,
    ep_residual,
    kinetic_energy,
    marker_passenger,
    pv_field,
    pv_range,
    pv_tracers,
    tracer_lattice,
)
from slicekit.dynamics import ModelParams, init_state, rk4_step
from slicekit.grid import Grid2D, grad, integrate, perp_div
from slicekit.verify import random_state

from conftest import H, LX, make_grid, observed_orders

KX, KZ = 2 * np.pi / LX, np.pi / H


def rest(grid, params, **kw):
    return init_state("rest", grid, params).replace(**kw)


class TestEnergy:
    def test_rest(self, grid, params):
        assert energy(rest(grid, params)) == 0.0

    def test_uniform_flow(self, grid, params):
        c = 3.0
        u = np.stack([np.full(grid.shape, c), grid.zeros()])
        s = rest(grid, params, u=u)
        assert energy(s) == pytest.approx(0.5 * c**2 * LX * H, rel=1e-14)
        assert kinetic_energy(s) == energy(s)

    def test_potential_part(self, grid, params):
        s = init_state("stratified_rest", grid, params)
        # -(g/theta0) int (z - H/2) N2 theta0 z / g = -N2 Lx H^3 / 12 (trapezoid error O(dz^2))
        assert energy(s) == pytest.approx(-2.5e-5 * LX * H**3 / 12, rel=1e-2)


class TestPV:
    def test_uniform_state(self, grid, params):
        u = np.stack([np.full(grid.shape, 2.0), np.full(grid.shape, 0.0)])
        s = rest(grid, params, u=u, u_t=np.full(grid.shape, 1.5), theta=np.full(grid.shape, 280.0))
        assert not np.any(pv_field(s))

    def test_shear(self, grid, params):
        s = rest(grid, params, u=np.stack([np.array(grid.Z), grid.zeros()]))
        np.testing.assert_allclose(pv_field(s), -params.s, rtol=1e-12)

    def test_stratification(self, grid, params):
        s = rest(grid, params, theta=np.array(grid.Z))
        np.testing.assert_allclose(pv_field(s), -params.f, rtol=1e-12)

    def test_reduces_to_vorticity(self, grid, params, rng):
        s = random_state(grid, rng, params)
        s = s.replace(theta=np.full(grid.shape, 300.0), u_t=np.full(grid.shape, 0.4))
        np.testing.assert_array_equal(pv_field(s), params.s * perp_div(s.u, grid))

    def test_eady_basic_uniform(self, params):
        g = Grid2D(64, 33, LX, H)
        q = pv_field(init_state("eady_basic", g, params))
        assert np.ptp(q) <= 1e-12 * np.max(np.abs(q))

    def test_flux_form_boundary_identity(self, grid, params, rng):
        """``integral q D`` equals the lid line integrals of the PV flux."""
        s = random_state(grid, rng, params)
        gth = grad(s.theta, grid)
        a_x = s.s * s.u[0] - s.u_t * gth[0]

        def line(k):
            return np.sum(a_x[:, k]) * grid.dx

        def lid(f, k):
            return np.sum(f[:, k]) * grid.dx

        expected = -(line(-1) - line(0)) - params.f * (lid(s.theta, -1) - lid(s.theta, 0))
        got = integrate(pv_field(s) * s.D, grid)
        scale = integrate(np.abs(pv_field(s)), grid)
        assert abs(got - expected) < 1e-12 * scale

    def test_range(self, grid, params):
        s = rest(grid, params, u=np.stack([np.array(grid.Z), grid.zeros()]))
        assert pv_range(s) < 1e-12 * abs(params.s)


def _psi(x, z, c=(0.5 * LX, 0.5 * H), r=(0.1 * LX, 0.15 * H)):
    return np.exp(-0.5 * (((x - c[0]) / r[0]) ** 2 + ((z - c[1]) / r[1]) ** 2))


def _rot_velocity(x, z, r=(0.1 * LX, 0.15 * H)):
    """``(-d_z psi, d_x psi)`` and its curl, the Laplacian of ``psi``."""
    c = (0.5 * LX, 0.5 * H)
    p = _psi(x, z)
    px = -(x - c[0]) / r[0] ** 2 * p
    pz = -(z - c[1]) / r[1] ** 2 * p
    lap = ((((x - c[0]) / r[0] ** 2) ** 2 - 1 / r[0] ** 2) + (((z - c[1]) / r[1] ** 2) ** 2 - 1 / r[1] ** 2)) * p
    return np.stack([-pz, px]), lap


class TestCirculation:
    def test_zero_fields(self, grid, params):
        s = rest(grid, ModelParams(f=0.0))
        assert circulation(s, ellipse_loop((LX / 2, H / 2), (LX / 5, H / 5), 64, LX)) == 0.0

    def test_stokes_oracle(self, params):
        """Circulation equals ``s`` times the enclosed vorticity."""
        centre, radii = (0.45 * LX, 0.55 * H), (0.12 * LX, 0.2 * H)
        # polar area quadrature on the ellipse, Gauss-Legendre in radius
        rr, wr = np.polynomial.legendre.leggauss(200)
        rr, wr = 0.5 * (rr + 1), 0.5 * wr
        th = 2 * np.pi * np.arange(800) / 800
        R, T = np.meshgrid(rr, th, indexing="ij")
        xq = centre[0] + radii[0] * R * np.cos(T)
        zq = centre[1] + radii[1] * R * np.sin(T)
        lap = _rot_velocity(xq, zq)[1]
        oracle = params.s * np.sum(wr[:, None] * R * lap) * (2 * np.pi / 800) * radii[0] * radii[1]

        errs = []
        for n in (32, 64, 128):
            g = Grid2D(2 * n, n + 1, LX, H)
            u = _rot_velocity(g.X, g.Z)[0]
            s = rest(g, params, u=u)
            loop = ellipse_loop(centre, radii, 4 * n, LX)
            errs.append(abs(circulation(s, loop) - oracle) / abs(oracle))
        assert errs[-1] < 1e-3
        assert min(observed_orders(errs)) > 1.9

    def test_winding_loop_rejected(self, grid, params):
        x = np.arange(64) * LX / 64
        loop = MaterialLoop(np.column_stack([x, H / 2 + 0.1 * H * np.sin(KX * x)]), LX)
        assert loop.winding == 1
        with pytest.raises(LoopTopologyError):
            circulation(rest(grid, params), loop)

    def test_unwrapped_loop_across_seam(self, params):
        g = make_grid(64, 33)
        u = _rot_velocity(g.X, g.Z)[0]
        s = rest(g, params, u=u)
        # with theta_S = 0 the f x term drops out, so a loop translated by a
        # channel length sees the same integrand
        a = circulation(s, ellipse_loop((0.5 * LX, 0.5 * H), (0.1 * LX, 0.2 * H), 128, LX))
        b = circulation(s, ellipse_loop((1.5 * LX, 0.5 * H), (0.1 * LX, 0.2 * H), 128, LX))
        assert b == pytest.approx(a, rel=1e-12)

    def test_midpoint_insertion(self, params):
        g = make_grid(64, 33)
        s = random_state(g, np.random.default_rng(3), params)
        coarse = ellipse_loop((LX / 2, H / 2), (LX / 6, H / 4), 128, LX)
        fine = ellipse_loop((LX / 2, H / 2), (LX / 6, H / 4), 256, LX)
        finer = ellipse_loop((LX / 2, H / 2), (LX / 6, H / 4), 512, LX)
        c = [circulation(s, lp) for lp in (coarse, fine, finer)]
        assert abs(c[1] - c[2]) < 0.3 * abs(c[0] - c[1])


@settings(max_examples=20, deadline=None)
@given(shift=st.integers(1, 127))
def test_circulation_cyclic_rotation(shift):
    g = make_grid(32, 17)
    s = random_state(g, np.random.default_rng(5))
    loop = ellipse_loop((LX / 2, H / 2), (LX / 5, H / 4), 128, LX)
    rolled = loop.moved(np.roll(loop.markers, shift, axis=0))
    a, b = circulation(s, loop), circulation(s, rolled)
    assert b == pytest.approx(a, rel=1e-12, abs=1e-14)


class TestMarkers:
    def _uniform_flow(self, grid, c):
        p = ModelParams(f=0.0, s=0.0)
        return init_state("rest", grid, p).replace(u=np.stack([np.full(grid.shape, c), grid.zeros()]))

    def test_zero_velocity(self, grid, params):
        s = init_state("rest", grid, ModelParams(f=0.0, s=0.0))
        pts = tracer_lattice(grid, 4, 4)
        stages = []
        rk4_step(s, 100.0, stages_out=stages)
        assert np.array_equal(advect_markers(pts, stages, 100.0), pts)

    def test_uniform_translation(self, grid):
        s = self._uniform_flow(grid, 7.0)
        pts = tracer_lattice(grid, 4, 4)
        stages = []
        rk4_step(s, 100.0, stages_out=stages)
        out = advect_markers(pts, stages, 100.0)
        np.testing.assert_allclose(out[:, 0], pts[:, 0] + 700.0, rtol=1e-14)
        np.testing.assert_array_equal(out[:, 1], pts[:, 1])

    def test_passenger_matches_stage_advection(self, params):
        g = make_grid(32, 17)
        s = init_state("eady_perturbed", g, params, amplitude=0.1)
        pts = tracer_lattice(g, 5, 5)
        stages = []
        _, vals = rk4_step(s, 300.0, [marker_passenger(pts)], stages_out=stages)
        np.testing.assert_allclose(vals[0], advect_markers(pts, stages, 300.0), rtol=1e-14)

    def test_fourth_order_cellular_flow(self, params):
        m, k = KZ, KX
        amp = 20.0 / m

        def vel(x, z):
            return amp * np.array([m * np.sin(k * x) * np.cos(m * z), -k * np.cos(k * x) * np.sin(m * z)])

        start = np.array([[0.3 * LX, 0.4 * H], [0.6 * LX, 0.7 * H], [0.1 * LX, 0.2 * H]])
        t_end = 5e4
        exact = np.array([
            solve_ivp(lambda t, y: vel(*y), (0, t_end), p0, method="DOP853", rtol=1e-12, atol=1e-6).y[:, -1]
            for p0 in start
        ])
        errs = []
        for n, nsteps in ((16, 25), (32, 50), (64, 100)):
            g = Grid2D(2 * n, n + 1, LX, H)
            st_ = init_state("rest", g, ModelParams(f=0.0, s=0.0)).replace(u=vel(g.X, g.Z))
            pts = start.copy()
            dt = t_end / nsteps
            for _ in range(nsteps):
                pts = advect_markers(pts, [st_] * 4, dt)
            errs.append(np.max(np.abs(pts - exact) / np.array([LX, H])))
        assert min(observed_orders(errs)) > 3.5

    def test_exit_through_lid(self, grid):
        s = init_state("rest", grid, ModelParams(f=0.0, s=0.0))
        s = s.replace(u=np.stack([grid.zeros(), np.full(grid.shape, 1.0)]))
        with pytest.raises(MarkerExitError):
            advect_markers([[0.5 * LX, 0.999 * H]], [s] * 4, 100.0)

    def test_lattice(self, grid):
        pts = tracer_lattice(grid)
        assert pts.shape == (256, 2)
        assert pts[:, 1].min() == pytest.approx(0.1 * H)
        assert pts[:, 1].max() == pytest.approx(0.9 * H)


class TestPVTracers:
    def test_frozen_state(self, grid, params):
        s = random_state(grid, np.random.default_rng(2), params)
        tr = TracerSet.release(s, tracer_lattice(grid))
        assert pv_tracers(s, tr) == {"max": 0.0, "rms": 0.0}

    def test_steady_eady(self, params):
        g = make_grid(64, 33)
        s = init_state("eady_basic", g, params)
        tr = TracerSet.release(s, tracer_lattice(g))
        val = [tr.positions]
        for _ in range(20):
            s, val = rk4_step(s, 200.0, [marker_passenger(val[0])])
        drift = pv_tracers(s, tr.moved(val[0]))
        assert drift["max"] <= 1e-12 * np.max(np.abs(tr.carried_pv))


class TestEPResidual:
    def test_zero_trajectory(self, grid):
        p = ModelParams(f=0.0, s=0.0, gravity=9.81)
        s = init_state("rest", grid, p)
        traj = [s.replace(time=t) for t in (0.0, 1.0, 2.0)]
        assert ep_residual(traj) == (0.0, 0.0)

    def test_steady_eady(self, params):
        g = make_grid(64, 33)
        s = init_state("eady_basic", g, params)
        traj = [s]
        for _ in range(2):
            traj.append(rk4_step(traj[-1], 200.0)[0])
        rs, rt = ep_residual(traj)
        scale = params.f * np.max(np.abs(s.u))
        assert rs < 1e-10 * scale and rt < 1e-10 * scale

    def test_needs_three(self, grid, params):
        s = init_state("rest", grid, params)
        with pytest.raises(ValueError, match="three"):
            ep_residual([s, s])

    def test_uneven_spacing(self, grid, params):
        s = init_state("rest", grid, params)
        with pytest.raises(ValueError, match="equally"):
            ep_residual([s.replace(time=t) for t in (0.0, 1.0, 3.0)])
