"""Verification suites: algebraic identities, conservation laws and the
relabelling-symmetry results, each reported as a list of :class:`Check`.

Runs are cached per parameter set, so checks sharing a trajectory only pay
for it once per process.  ``level="full"`` uses the acceptance
configuration; ``level="quick"`` uses coarser grids and shorter horizons.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import algebra as alg
from .diagnostics import (
    TracerSet,
    circulation,
    ellipse_loop,
    energy,
    ep_residual,
    kinetic_energy,
    marker_passenger,
    pv_range,
    pv_tracers,
    tracer_lattice,
)
from .dynamics import ModelParams, init_state, project, rk4_step
from .grid import Grid2D
from .noether import (
    DegenerateClosureError,
    charge_scale,
    dual_mismatch,
    init_psi,
    noether_charge,
    noether_pv_check,
    proposition_residual,
    psi_dual,
    symmetry_from_passenger,
    symmetry_from_psi,
    symmetry_passenger,
    w_T_closure,
)

SUITES = ("algebra", "conservation", "noether")
LEVELS = ("quick", "full")

DEFAULT_DT = 200.0
INERTIAL_PERIOD = 1e4  # 1/f for the default f

# (centre, radii) of the default material loops
DEFAULT_LOOPS = (
    ((5.0e5, 5.0e3), (1.5e5, 2.0e3)),
    ((2.5e5, 3.5e3), (1.0e5, 1.5e3)),
    ((7.5e5, 6.0e3), (3.0e4, 2.5e3)),
)
DEFAULT_PSI = {"kind": "cosine_bump", "centre": (5.0e5, 5.0e3), "radii": (2.0e5, 2.5e3)}


@dataclass
class Check:
    name: str
    measured: float
    threshold: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        tail = f"  [{self.detail}]" if self.detail else ""
        return f"{mark}  {self.name}: {self.measured:.3e} (need {self.threshold}){tail}"


def orders(values, factor: float = 2.0) -> list[float]:
    """Observed convergence orders between successive refinements."""
    v = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return list(np.log(v[:-1] / v[1:]) / np.log(factor))


def _fmt(xs) -> str:
    return ", ".join(f"{x:.2f}" for x in xs)


def table(checks) -> str:
    return "\n".join(c.line() for c in checks)


# -- smooth test fields --------------------------------------------------------

def trig_velocity(grid: Grid2D, a: int, b: int, c: int) -> alg.SliceVelocity:
    kx, kz = 2 * np.pi / grid.Lx, np.pi / grid.H
    X, Z = grid.X, grid.Z
    ux = np.sin(a * kx * X + 0.3) * np.cos(b * kz * Z) + 0.2 * np.cos(c * kz * Z)
    uz = np.cos(b * kx * X) * np.sin(a * kz * Z)
    ut = np.sin(c * kx * X + a * kz * Z)
    return alg.SliceVelocity(np.stack([ux, uz]), ut, grid)


def trig_map(grid: Grid2D, a: int, b: int, eps: float) -> alg.SliceMapSample:
    """Smooth map of the channel onto itself (lids fixed)."""
    kx, kz = 2 * np.pi / grid.Lx, np.pi / grid.H
    X, Z = grid.X, grid.Z
    px = X + 0.1 * eps * grid.Lx * np.sin(a * kx * X) * np.sin(kz * Z) ** 2
    pz = Z + 0.1 * eps * grid.H * np.sin(kz * Z) * np.cos(b * kx * X)
    f = np.cos(a * kx * X) * np.sin(kz * Z)
    return alg.SliceMapSample(px, pz, f, grid)


def random_smooth(grid: Grid2D, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    kx, kz = 2 * np.pi / grid.Lx, np.pi / grid.H
    out = grid.zeros()
    for m in range(modes):
        for n in range(modes):
            a, b = rng.normal(size=2) / (1 + m + n)
            ph = rng.uniform(0, 2 * np.pi)
            out += a * np.cos(m * kx * grid.X + ph) * np.cos(n * kz * grid.Z)
            out += b * np.sin(m * kx * grid.X + ph) * np.sin(n * kz * grid.Z)
    return out


# -- algebra -------------------------------------------------------------------

def _rel(a: alg.SliceVelocity, b: alg.SliceVelocity) -> float:
    return (a - b).norm() / max(a.norm(), b.norm())


def check_bracket_identities(grid: Grid2D | None = None) -> list[Check]:
    g = grid or Grid2D(64, 17, 1e6, 1e4)
    a, b, c = trig_velocity(g, 1, 2, 1), trig_velocity(g, 2, 1, 3), trig_velocity(g, 3, 2, 2)
    ab, ba = alg.lie_bracket(a, b), alg.lie_bracket(b, a)
    anti = (ab + ba).norm() / ab.norm()
    alpha, beta = 0.7, -1.3
    lhs = alg.lie_bracket(alpha * a + beta * b, c)
    rhs = alpha * alg.lie_bracket(a, c) + beta * alg.lie_bracket(b, c)
    lin = _rel(lhs, rhs)
    return [
        Check("bracket antisymmetry", anti, "<= 1e-13", anti <= 1e-13),
        Check("bracket bilinearity", lin, "<= 1e-13", lin <= 1e-13),
    ]


GRIDS = ((64, 17), (128, 33), (256, 65))


def jacobi_residual(grid: Grid2D) -> float:
    a, b, c = trig_velocity(grid, 1, 2, 1), trig_velocity(grid, 2, 1, 3), trig_velocity(grid, 3, 2, 2)
    br = alg.lie_bracket
    J = br(a, br(b, c)) + br(b, br(c, a)) + br(c, br(a, b))
    return J.norm() / br(a, br(b, c)).norm()


def associativity_residual(grid: Grid2D) -> float:
    A, B, C = trig_map(grid, 1, 2, 1.0), trig_map(grid, 2, 1, 1.0), trig_map(grid, 1, 1, -1.0)
    left = alg.sd_compose(alg.sd_compose(A, B), C)
    right = alg.sd_compose(A, alg.sd_compose(B, C))
    return float(max(
        np.max(np.abs(left.phi_x - right.phi_x)) / grid.Lx,
        np.max(np.abs(left.phi_z - right.phi_z)) / grid.H,
        np.max(np.abs(left.f - right.f)),
    ))


def check_refinement(name: str, fn, grids, min_order: float = 1.9) -> Check:
    vals = [fn(Grid2D(nx, nz, 1e6, 1e4)) for nx, nz in grids]
    obs = orders(vals)
    return Check(f"{name} order", min(obs), f">= {min_order}", min(obs) >= min_order,
                 f"residuals {', '.join(f'{v:.2e}' for v in vals)}; orders {_fmt(obs)}")


def check_identity_laws(grid: Grid2D | None = None) -> Check:
    """``a o e = a`` exactly; ``e o a = a`` up to rounding of the cubic
    weights, which reproduce linear functions exactly in exact arithmetic."""
    g = grid or Grid2D(64, 17, 1e6, 1e4)
    a = trig_map(g, 1, 2, 1.0)
    e = alg.sd_identity(g)
    err = 0.0
    for m in (alg.sd_compose(a, e), alg.sd_compose(e, a)):
        err = max(err, np.max(np.abs(m.phi_x - a.phi_x)) / g.Lx,
                  np.max(np.abs(m.phi_z - a.phi_z)) / g.H, np.max(np.abs(m.f - a.f)))
    return Check("group identity laws (relative)", float(err), "<= 1e-14", err <= 1e-14)


def action_residual(grid: Grid2D) -> float:
    """``L_[a,b] - (L_a L_b - L_b L_a)`` on a tracer pair, relative.

    The inner action returns a pair with ``s = 0``, so the outer one only
    transports it.
    """
    a, b = trig_velocity(grid, 1, 2, 1), trig_velocity(grid, 2, 1, 3)
    th = alg.TracerPair(np.sin(2 * np.pi * grid.X / grid.Lx) * np.cos(np.pi * grid.Z / grid.H), 0.4)
    act = alg.lie_derivative_tracer
    lhs = act(alg.lie_bracket(a, b), th).theta_s
    rhs = act(a, act(b, th)).theta_s - act(b, act(a, th)).theta_s
    return float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(lhs)))


def algebra_suite(level: str = "quick") -> list[Check]:
    grids = GRIDS if level == "full" else ((32, 9), (64, 17), (128, 33))
    return [
        *check_bracket_identities(),
        check_identity_laws(),
        check_refinement("Jacobi residual", jacobi_residual, grids),
        check_refinement("associativity residual", associativity_residual, grids),
        check_refinement("tracer action compatibility", action_residual, grids),
    ]


# -- trajectories ----------------------------------------------------------------

def default_params() -> ModelParams:
    return ModelParams()


@dataclass(frozen=True)
class RunSpec:
    nx: int = 128
    nz: int = 33
    dt: float = DEFAULT_DT
    t_end: float = 10 * INERTIAL_PERIOD
    amplitude: float = 1e-2
    markers: int = 256
    kind: str = "eady_perturbed"
    passengers: bool = True

    def refined(self, k: int) -> "RunSpec":
        """Joint refinement in z, dt and marker spacing by ``2**k``."""
        m = 2**k
        return RunSpec(self.nx, (self.nz - 1) * m + 1, self.dt / m, self.t_end,
                       self.amplitude, self.markers * m, self.kind, self.passengers)


@dataclass
class RunRecord:
    spec: RunSpec
    energy0: float
    energy_drift: float  # max over the run of |E - E0| / max(|E0|, KE0)
    circ_drift: list = field(default_factory=list)
    pv_drift: float = np.nan  # max tracer |q - q0| / PV range at t = 0
    closure0: float = np.nan
    closure: float = np.nan  # free-mode closure residual at t_end
    charge_drift: float = np.nan
    free_charge_drift: float = np.nan
    dual: float = np.nan


def default_symmetry(state):
    g = state.grid
    psi = init_psi(DEFAULT_PSI["kind"], g, centre=DEFAULT_PSI["centre"], radii=DEFAULT_PSI["radii"])
    return symmetry_from_psi(psi, state)


@lru_cache(maxsize=32)
def reference_run(spec: RunSpec) -> RunRecord:
    p = default_params()
    g = Grid2D(spec.nx, spec.nz, p.Lx, p.H)
    s = init_state(spec.kind, g, p, amplitude=spec.amplitude)
    e0 = energy(s)
    escale = max(abs(e0), kinetic_energy(s))
    passengers = []
    if spec.passengers:
        loops = [ellipse_loop(c, r, spec.markers, g.Lx) for c, r in DEFAULT_LOOPS]
        c0 = [circulation(s, lp) for lp in loops]
        tracers = TracerSet.release(s, tracer_lattice(g))
        rng = pv_range(s)
        sym = default_symmetry(s)
        free = sym.replace(mode="free")
        q0, fq0 = noether_charge(sym, s), noether_charge(free, s)
        qs = abs(q0) + charge_scale(sym, s)
        closure0 = proposition_residual(free, s)
        passengers = [
            marker_passenger(np.vstack([lp.markers for lp in loops])),
            marker_passenger(tracers.positions),
            symmetry_passenger(sym),
            symmetry_passenger(free),
        ]
    nsteps = int(round(spec.t_end / spec.dt))
    drift = 0.0
    qdrift = fqdrift = 0.0
    vals = [v for v, _ in passengers]
    for _ in range(nsteps):
        s, vals = rk4_step(s, spec.dt, passengers)
        passengers = [(v, rhs) for v, (_, rhs) in zip(vals, passengers)]
        drift = max(drift, abs(energy(s) - e0) / escale)
        if spec.passengers:
            sym_t = symmetry_from_passenger(sym, vals[2], s)
            free_t = symmetry_from_passenger(free, vals[3], s)
            qdrift = max(qdrift, abs(noether_charge(sym_t, s) - q0) / qs)
            fqdrift = max(fqdrift, abs(noether_charge(free_t, s) - fq0) / qs)
    rec = RunRecord(spec, e0, drift)
    if spec.passengers:
        marks = vals[0].reshape(len(loops), spec.markers, 2)
        rec.circ_drift = [
            abs(circulation(s, lp.moved(m)) - c) / abs(c) for lp, m, c in zip(loops, marks, c0)
        ]
        rec.pv_drift = pv_tracers(s, tracers.moved(vals[1]))["max"] / rng
        rec.closure0 = closure0
        rec.closure = proposition_residual(free_t, s) if nsteps else closure0
        rec.charge_drift = qdrift
        rec.free_charge_drift = fqdrift
        rec.dual = dual_mismatch(free_t, sym_t) if nsteps else 0.0
    return rec


def _ladder(level: str, base: RunSpec | None = None) -> list[RunRecord]:
    base = base or (RunSpec() if level == "full" else RunSpec(nx=64, nz=17, dt=400.0, t_end=2e4, markers=64))
    return [reference_run(base.refined(k)) for k in range(3)]


# -- conservation ------------------------------------------------------------------

def check_steady_state(nx: int = 128, nz: int = 33, steps: int = 100, dt: float = DEFAULT_DT) -> Check:
    p = default_params()
    g = Grid2D(nx, nz, p.Lx, p.H)
    s0 = init_state("eady_basic", g, p)
    s = s0
    for _ in range(steps):
        s, _ = rk4_step(s, dt)
    vscale = max(np.max(np.abs(s0.u)), np.max(np.abs(s0.u_t)))
    change = max(
        np.max(np.abs(s.u - s0.u)) / vscale,
        np.max(np.abs(s.u_t - s0.u_t)) / vscale,
        np.max(np.abs(s.theta - s0.theta)) / np.max(np.abs(s0.theta)),
    )
    return Check(f"steady basic state, {steps} steps", float(change), "<= 1e-8", change <= 1e-8)


def check_energy(level: str = "full") -> list[Check]:
    if level == "full":
        base = RunSpec(t_end=20 * INERTIAL_PERIOD, passengers=False)
    else:
        base = RunSpec(nx=64, nz=17, dt=400.0, t_end=4e4, amplitude=0.1, passengers=False)
    coarse, fine = reference_run(base), reference_run(RunSpec(**{**base.__dict__, "dt": base.dt / 2}))
    ratio = coarse.energy_drift / fine.energy_drift
    return [
        Check("energy relative drift at default dt", coarse.energy_drift, "<= 1e-6",
              coarse.energy_drift <= 1e-6),
        Check("energy drift ratio on halving dt", ratio, "in [12, 20]", 12 <= ratio <= 20,
              f"drifts {coarse.energy_drift:.3e}, {fine.energy_drift:.3e}"),
    ]


def check_circulation(level: str = "full") -> list[Check]:
    runs = _ladder(level)
    worst = [max(r.circ_drift) for r in runs]
    obs = orders(worst)
    return [
        Check("circulation relative drift (3 loops)", worst[0], "<= 1e-4", worst[0] <= 1e-4,
              "per loop " + ", ".join(f"{d:.2e}" for d in runs[0].circ_drift)),
        Check("circulation drift order", obs[-1], ">= 1.9", obs[-1] >= 1.9,
              f"drifts {', '.join(f'{v:.2e}' for v in worst)}; orders {_fmt(obs)}"),
    ]


def check_pv_tracers(level: str = "full") -> list[Check]:
    runs = _ladder(level)
    d = [r.pv_drift for r in runs]
    obs = orders(d)
    return [
        Check("PV tracer drift / PV range (256 tracers)", d[0], "<= 1e-3", d[0] <= 1e-3),
        Check("PV tracer drift order", obs[-1], "> 0 (converging)", min(obs) > 0,
              f"drifts {', '.join(f'{v:.2e}' for v in d)}; orders {_fmt(obs)}"),
    ]


def ep_ladder(level: str = "full", amplitude: float = 0.2, spin_up: float = 2e4) -> list[tuple[float, float]]:
    """EP residuals under joint dt/dz refinement on a strongly perturbed run."""
    p = default_params()
    # the coarsest 17-level grid is still pre-asymptotic, so both levels
    # share one ladder (it costs seconds)
    ladder = ((33, 200.0), (65, 100.0), (129, 50.0))
    out = []
    for nz, dt in ladder:
        g = Grid2D(64, nz, p.Lx, p.H)
        s = init_state("eady_perturbed", g, p, amplitude=amplitude)
        for _ in range(int(round(spin_up / dt))):
            s, _ = rk4_step(s, dt)
        traj = [s]
        for _ in range(2):
            s, _ = rk4_step(s, dt)
            traj.append(s)
        out.append(ep_residual(traj))
    return out


def check_ep_residual(level: str = "full") -> list[Check]:
    res = np.array(ep_ladder(level))
    checks = []
    for k, name in enumerate(("slice momentum", "transverse momentum")):
        obs = orders(res[:, k])
        checks.append(Check(f"EP residual order, {name}", min(obs), ">= 1.9", min(obs) >= 1.9,
                            f"residuals {', '.join(f'{v:.2e}' for v in res[:, k])}; orders {_fmt(obs)}"))
    return checks


def conservation_suite(level: str = "quick") -> list[Check]:
    return [
        check_steady_state(),
        *check_energy(level),
        *check_circulation(level),
        *check_pv_tracers(level),
        *check_ep_residual(level),
    ]


# -- noether ------------------------------------------------------------------------

def check_closure_persistence(level: str = "full") -> list[Check]:
    runs = _ladder(level)
    r = [x.closure for x in runs]
    obs = orders(r)
    return [
        Check("closure residual at t = 0", runs[0].closure0, "<= 1e-14", runs[0].closure0 <= 1e-14),
        Check("free-mode closure residual", r[0], "<= 1e-5", r[0] <= 1e-5),
        Check("closure residual order", obs[-1], ">= 1.9", obs[-1] >= 1.9,
              f"residuals {', '.join(f'{v:.2e}' for v in r)}; orders {_fmt(obs)}"),
    ]


def check_charge(level: str = "full") -> list[Check]:
    runs = _ladder(level)
    q = [x.charge_drift for x in runs]
    fq = [x.free_charge_drift for x in runs]
    d = [x.dual for x in runs]
    oq, od = orders(fq), orders(d)
    return [
        Check("Noether charge relative drift (psi-generated)", q[0], "<= 1e-5", q[0] <= 1e-5),
        Check("Noether charge relative drift (free mode)", runs[0].free_charge_drift, "<= 1e-5",
              runs[0].free_charge_drift <= 1e-5),
        Check("free-mode charge drift converging", oq[-1], "> 0", min(oq) > 0,
              f"drifts {', '.join(f'{v:.2e}' for v in fq)}; orders {_fmt(oq)}; "
              f"psi-generated drifts {', '.join(f'{v:.2e}' for v in q)}"),
        Check("dual evolution mismatch (psi vs free)", d[0], "<= 1e-4", d[0] <= 1e-4),
        Check("dual evolution mismatch converging", od[-1], "> 0", min(od) > 0,
              f"mismatch {', '.join(f'{v:.2e}' for v in d)}; orders {_fmt(od)}"),
    ]


def random_state(grid: Grid2D, rng: np.random.Generator, params: ModelParams | None = None):
    p = params or default_params()
    base = init_state("eady_basic", grid, p)
    vscale = abs(base.u[0]).max()
    u = np.stack([random_smooth(grid, rng), random_smooth(grid, rng)]) * 0.2 * vscale
    u, _ = project(u, grid)
    u_t = 0.2 * vscale * random_smooth(grid, rng)
    theta = base.theta + 0.5 * random_smooth(grid, rng)
    return base.replace(u=base.u + u, u_t=u_t, theta=theta)


def consistency_triangle(nstates: int = 10, seed: int = 0, grid: Grid2D | None = None):
    """Charge, its psi-weighted dual and ``integral psi q D`` on random states.

    Returns the three arrays ``(Q, dual, pv_form)``.
    """
    p = default_params()
    g = grid or Grid2D(128, 33, p.Lx, p.H)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(nstates):
        s = random_state(g, rng, p)
        sym = default_symmetry(s)
        out.append((noether_charge(sym, s), psi_dual(sym, s), noether_pv_check(sym, s)))
    return tuple(np.array(c) for c in zip(*out))


def check_consistency_triangle(nstates: int = 10) -> list[Check]:
    q, dual, pv = consistency_triangle(nstates)
    checks = []
    for name, other in (("dual", dual), ("PV form", pv)):
        ratio = other / q
        const = np.median(ratio)
        spread = float(np.max(np.abs(ratio / const - 1)))
        checks.append(Check(f"charge vs {name}: spread about constant {const:.6g}", spread, "<= 1e-4",
                            spread <= 1e-4))
    ratio = pv / dual
    const = np.median(ratio)
    spread = float(np.max(np.abs(ratio / const - 1)))
    checks.append(Check(f"dual vs PV form: spread about constant {const:.6g}", spread, "<= 1e-4", spread <= 1e-4))
    return checks


def check_degenerate_closure() -> Check:
    p = ModelParams(s=0.0)
    g = Grid2D(32, 9, p.Lx, p.H)
    s = init_state("stratified_rest", g, p)
    try:
        w_T_closure(np.ones((2,) + g.shape), s.tracer, g)
    except DegenerateClosureError:
        return Check("s = 0 rejected by the closure (expected failure)", 0.0, "raises", True)
    return Check("s = 0 rejected by the closure (expected failure)", 1.0, "raises", False)


def noether_suite(level: str = "quick") -> list[Check]:
    return [
        *check_closure_persistence(level),
        *check_charge(level),
        *check_consistency_triangle(),
        check_degenerate_closure(),
    ]


def run_suite(name: str, level: str = "quick") -> list[Check]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; expected one of {SUITES}")
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}; expected one of {LEVELS}")
    return {"algebra": algebra_suite, "conservation": conservation_suite, "noether": noether_suite}[name](level)
