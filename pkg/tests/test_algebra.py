import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from slicekit import algebra as alg
from slicekit.grid import DomainError, ddx, ddz, interpolate
from slicekit.verify import random_smooth, trig_map, trig_velocity

from conftest import H, LX, make_grid, observed_orders

KX, KZ = 2 * np.pi / LX, np.pi / H


def shift_map(g, alpha, f=None):
    return alg.SliceMapSample(g.X + alpha, np.array(g.Z), g.zeros() if f is None else f, g)


class TestIdentity:
    def test_nodes_bit_exact(self, grid):
        e = alg.sd_identity(grid)
        assert np.array_equal(e.phi_x, grid.X)
        assert np.array_equal(e.phi_z, grid.Z)
        assert not np.any(e.f)

    def test_right_identity_node_exact(self, grid):
        a = trig_map(grid, 1, 2, 1.0)
        m = alg.sd_compose(a, alg.sd_identity(grid))
        for name in ("phi_x", "phi_z", "f"):
            assert np.array_equal(getattr(m, name), getattr(a, name))

    def test_left_identity(self, grid):
        a = trig_map(grid, 2, 1, 1.0)
        m = alg.sd_compose(alg.sd_identity(grid), a)
        np.testing.assert_allclose(m.phi_x, a.phi_x, rtol=1e-14)
        np.testing.assert_allclose(m.phi_z, a.phi_z, rtol=1e-14, atol=1e-14 * H)
        assert not np.any(m.f - a.f)


class TestCompose:
    def test_shifts_add(self, grid):
        # node-aligned shifts: interpolation is evaluated at nodes
        alpha, beta = 3 * grid.dx, -5 * grid.dx
        f = np.sin(KX * grid.X)
        m = alg.sd_compose(shift_map(grid, alpha, f), shift_map(grid, beta))
        np.testing.assert_allclose(m.phi_x, grid.X + alpha + beta, rtol=1e-14, atol=1e-9)
        np.testing.assert_allclose(m.f, np.sin(KX * (grid.X + beta)), atol=1e-14)

    def test_transverse_parts_add(self, grid):
        fa, fb = np.cos(KX * grid.X), 0.5 * np.sin(KZ * grid.Z)
        m = alg.sd_compose(shift_map(grid, 0.0, fa), shift_map(grid, 0.0, fb))
        np.testing.assert_allclose(m.f, fa + fb, atol=1e-15)

    def test_wraps_across_channel(self, grid):
        # a shift by a full channel length is the identity up to the unwrapped offset
        m = alg.sd_compose(shift_map(grid, 0.25 * LX), shift_map(grid, LX))
        np.testing.assert_allclose(m.phi_x, grid.X + 1.25 * LX, rtol=1e-14)

    def test_domain_violation(self, grid):
        b = alg.SliceMapSample(np.array(grid.X), grid.Z + 0.1 * H, grid.zeros(), grid)
        with pytest.raises(DomainError):
            alg.sd_compose(alg.sd_identity(grid), b)

    def test_grid_mismatch(self, grid):
        other = make_grid(16, 9)
        with pytest.raises(ValueError):
            alg.sd_compose(alg.sd_identity(grid), alg.sd_identity(other))

    def test_associativity_converges(self):
        def residual(g):
            A, B, C = trig_map(g, 1, 2, 1.0), trig_map(g, 2, 1, 1.0), trig_map(g, 1, 1, -1.0)
            left = alg.sd_compose(alg.sd_compose(A, B), C)
            right = alg.sd_compose(A, alg.sd_compose(B, C))
            return np.max(np.abs(left.phi_z - right.phi_z)) / H

        errs = [residual(make_grid(n, n // 2 + 1)) for n in (32, 64, 128)]
        assert min(observed_orders(errs)) > 1.9


class TestBracket:
    def test_diagonal(self, grid):
        a = trig_velocity(grid, 1, 2, 3)
        assert alg.lie_bracket(a, a).norm() == 0.0

    def test_linear_field(self, grid):
        a = alg.SliceVelocity(np.stack([np.ones(grid.shape), grid.zeros()]), grid.zeros(), grid)
        b = alg.SliceVelocity(np.zeros((2,) + grid.shape), np.sin(KX * grid.X) / KX, grid)
        br = alg.lie_bracket(a, b)
        assert not np.any(br.u_s)
        np.testing.assert_allclose(br.u_t, np.cos(KX * grid.X), atol=1e-12)

    def test_vector_part(self, grid):
        # [d_x, z d_x] = 0 and [z d_x, d_z] = -d_x
        one, zero = np.ones(grid.shape), grid.zeros()
        dz = alg.SliceVelocity(np.stack([zero, one]), zero, grid)
        zdx = alg.SliceVelocity(np.stack([np.array(grid.Z), zero]), zero, grid)
        br = alg.lie_bracket(zdx, dz)
        np.testing.assert_allclose(br.u_s[0], -1.0, rtol=1e-12)
        assert not np.any(br.u_s[1])

    def test_jacobi_converges(self):
        def jacobi(g):
            a, b, c = trig_velocity(g, 1, 2, 1), trig_velocity(g, 2, 1, 3), trig_velocity(g, 3, 2, 2)
            br = alg.lie_bracket
            return (br(a, br(b, c)) + br(b, br(c, a)) + br(c, br(a, b))).norm()

        errs = [jacobi(make_grid(n, n // 2 + 1)) for n in (32, 64, 128)]
        assert min(observed_orders(errs)) > 1.9

    def test_jacobi_spectral_for_x_only_fields(self):
        g = make_grid(32, 9)

        def vel(a, ph):
            ux = np.sin(a * KX * g.X + ph)
            return alg.SliceVelocity(np.stack([ux, g.zeros()]), np.cos(a * KX * g.X), g)

        a, b, c = vel(1, 0.1), vel(2, 0.7), vel(3, 1.3)
        br = alg.lie_bracket
        J = br(a, br(b, c)) + br(b, br(c, a)) + br(c, br(a, b))
        assert J.norm() <= 1e-12 * br(a, br(b, c)).norm()


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20), alpha=st.floats(-10, 10), beta=st.floats(-10, 10))
def test_bracket_bilinear_antisymmetric(seed, alpha, beta):
    g = make_grid(16, 9)
    r = np.random.default_rng(seed)

    def vel():
        return alg.SliceVelocity(np.stack([random_smooth(g, r), random_smooth(g, r)]),
                                 random_smooth(g, r), g)

    a, b, c = vel(), vel(), vel()
    ab, ba = alg.lie_bracket(a, b), alg.lie_bracket(b, a)
    scale = ab.norm() + 1e-300
    assert (ab + ba).norm() <= 1e-13 * scale
    lhs = alg.lie_bracket(alpha * a + beta * b, c)
    rhs = alpha * alg.lie_bracket(a, c) + beta * alg.lie_bracket(b, c)
    tol = 1e-13 * (abs(alpha) * alg.lie_bracket(a, c).norm() + abs(beta) * alg.lie_bracket(b, c).norm())
    assert (lhs - rhs).norm() <= tol + 1e-300


# analytic fields for the flow oracles
def _u(x, z):
    return np.array([np.sin(KX * x) * np.cos(KZ * z) + 0.3, 0.2 * np.cos(KX * x) * np.sin(KZ * z)]) * 10.0


def _grad_u(x, z):
    return 10.0 * np.array([
        [KX * np.cos(KX * x) * np.cos(KZ * z), -KZ * np.sin(KX * x) * np.sin(KZ * z)],
        [-0.2 * KX * np.sin(KX * x) * np.sin(KZ * z), 0.2 * KZ * np.cos(KX * x) * np.cos(KZ * z)],
    ])


def _density(x, z):
    return 1.0 + 0.3 * np.cos(KX * x + 0.4) * np.cos(KZ * z)


def _flow(x, z, eps, steps=8):
    """Flow map and Jacobian of ``u`` at time ``eps`` (RK4 on the variational system)."""
    def rhs(y):
        X, Z, J = y[0], y[1], y[2:].reshape(2, 2, *x.shape)
        gu = _grad_u(X, Z)
        dJ = np.einsum("ab...,bc...->ac...", gu, J)
        return np.concatenate([_u(X, Z), dJ.reshape(4, *x.shape)])

    y = np.concatenate([np.stack([x, z]), np.eye(2).reshape(4, 1, 1) * np.ones((1,) + x.shape)])
    h = eps / steps
    for _ in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y[0], y[1], y[2:].reshape(2, 2, *x.shape)


class TestLieDerivativeDensity:
    def test_constant(self, grid):
        u = np.stack([np.full(grid.shape, 2.0), np.full(grid.shape, -1.0)])
        out = alg.lie_derivative_density(u, alg.DensityField(np.full(grid.shape, 3.0), grid))
        assert np.max(np.abs(out)) < 1e-12

    def test_divergence_free(self, grid):
        psi = np.sin(KX * grid.X) * np.sin(KZ * grid.Z)
        u = np.stack([ddz(psi, grid), -ddx(psi, grid)])
        out = alg.lie_derivative_density(u, alg.DensityField(np.ones(grid.shape), grid))
        assert np.max(np.abs(out)) < 1e-12 * np.max(np.abs(u)) / grid.dz

    def test_rejects_nonpositive(self, grid):
        with pytest.raises(ValueError):
            alg.DensityField(grid.zeros(), grid)

    def test_flow_pullback_oracle(self):
        """``div(u D)`` against ``(phi_eps^* (D dS) - D dS) / eps``, Richardson
        extrapolated in ``eps``."""
        errs = []
        for nz in (17, 33, 65):
            g = make_grid(64, nz)
            eps = 0.05 * g.dz / 10.0

            def quotient(e):
                x, z, J = _flow(g.X, g.Z, e)
                det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
                return (_density(x, z) * det - _density(g.X, g.Z)) / e

            oracle = 2 * quotient(eps / 2) - quotient(eps)
            rho = alg.DensityField(_density(g.X, g.Z), g)
            got = alg.lie_derivative_density(_u(g.X, g.Z), rho)
            errs.append(np.max(np.abs(got - oracle)[:, 1:-1]) / np.max(np.abs(oracle)))
        assert min(observed_orders(errs)) > 1.8


class TestLieDerivativeTracer:
    def test_transverse_only(self, grid, rng):
        v = alg.SliceVelocity(np.zeros((2,) + grid.shape), np.full(grid.shape, 0.7), grid)
        out = alg.lie_derivative_tracer(v, alg.TracerPair(rng.normal(size=grid.shape), -3e-6))
        np.testing.assert_allclose(out.theta_s, 0.7 * -3e-6, rtol=1e-15)
        assert out.s == 0.0

    def test_constant_tracer(self, grid):
        v = trig_velocity(grid, 1, 2, 3)
        v = alg.SliceVelocity(v.u_s, grid.zeros(), grid)
        out = alg.lie_derivative_tracer(v, alg.TracerPair(np.full(grid.shape, 290.0), 1.0))
        assert np.max(np.abs(out.theta_s)) < 1e-10
        assert out.s == 0.0

    def test_characteristics_oracle(self):
        """Material derivative along characteristics from a tight ODE solve."""
        def theta(x, z):
            return np.cos(KX * x) * np.exp(z / H)

        pts = np.column_stack([np.linspace(0.05, 0.95, 7) * LX, np.linspace(0.2, 0.8, 7) * H])
        h = 1.0
        oracle = []
        for x0, z0 in pts:
            ends = [
                solve_ivp(lambda t, y, sgn=sgn: sgn * _u(y[0], y[1]), (0, h), [x0, z0],
                          method="DOP853", rtol=1e-13, atol=1e-9).y[:, -1]
                for sgn in (1.0, -1.0)
            ]
            oracle.append((theta(*ends[0]) - theta(*ends[1])) / (2 * h))
        s, ut = 2e-3, 0.5
        oracle = np.array(oracle) + s * ut

        errs = []
        for n in (16, 32, 64):
            g = make_grid(2 * n, n + 1)
            v = alg.SliceVelocity(_u(g.X, g.Z), np.full(g.shape, ut), g)
            out = alg.lie_derivative_tracer(v, alg.TracerPair(theta(g.X, g.Z), s))
            errs.append(np.max(np.abs(interpolate(out.theta_s, pts, g) - oracle)))
        assert min(observed_orders(errs)) > 1.8
