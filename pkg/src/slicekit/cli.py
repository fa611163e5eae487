"""Batch front end: ``slicekit run | verify | diagnose``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
failure (blow-up, markers leaving the channel), 3 verification failure.
The FFT thread count is read from ``SLICEKIT_THREADS`` (default 1, which
makes runs bit-reproducible).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import logging
import math
import os
import shutil
import struct
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    MarkerExitError,
    MaterialLoop,
    TracerSet,
    circulation,
    divergence_norm,
    ellipse_loop,
    energy,
    kinetic_energy,
    marker_passenger,
    pv_field,
    pv_range,
    pv_tracers,
    tracer_lattice,
)
from .dynamics import (
    INIT_KINDS,
    BlowUpError,
    ModelParams,
    ParameterError,
    SliceState,
    cfl_number,
    init_state,
    rk4_step,
)
from .grid import Grid2D
from .noether import (
    SymmetryError,
    charge_scale,
    init_psi,
    noether_charge,
    proposition_residual,
    symmetry_from_passenger,
    symmetry_from_psi,
    symmetry_passenger,
)

log = logging.getLogger("slicekit")

THREADS_ENV = "SLICEKIT_THREADS"
EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_VERIFY = 0, 1, 2, 3

DEFAULT_CONFIG = """\
# Perturbed Eady channel at desk scale.
[grid]
nx = 128
nz = 33
Lx = 1.0e6
H = 1.0e4

[params]
f = 1.0e-4
gravity = 9.81
theta0 = 300.0
s = -3.0e-6
N2 = 2.5e-5

[time]
dt = 200.0
t_end = 1.0e5

[init]
kind = eady_perturbed
amplitude = 0.01
mode = 1

[loops.0]
centre = 5.0e5, 5.0e3
radii = 1.5e5, 2.0e3
markers = 256

[loops.1]
centre = 2.5e5, 3.5e3
radii = 1.0e5, 1.5e3
markers = 256

[loops.2]
centre = 7.5e5, 6.0e3
radii = 3.0e4, 2.5e3
markers = 256

[tracers]
nx = 16
nz = 16
margin = 0.1

[psi]
kind = cosine_bump
centre = 5.0e5, 5.0e3
radii = 2.0e5, 2.5e3
amplitude = 1.0

[output]
every = 10
snapshot_every = 250

[tolerances]
projection = 1e-10
energy = 1e-6
circulation = 1e-4
pv = 1e-3
closure = 1e-5
charge = 1e-5
"""

DEFAULT_TOLERANCES = {
    "projection": 1e-10,
    "energy": 1e-6,
    "circulation": 1e-4,
    "pv": 1e-3,
    "closure": 1e-5,
    "charge": 1e-5,
}


class ConfigError(ValueError):
    pass


class SnapshotFormatError(ValueError):
    pass


# -- configuration ----------------------------------------------------------------

@dataclass
class LoopSpec:
    centre: tuple
    radii: tuple
    markers: int = 256
    angle: float = 0.0


@dataclass
class RunConfig:
    grid: Grid2D
    params: ModelParams
    N2: float
    dt: float
    t_end: float
    init: dict
    loops: list = field(default_factory=list)
    tracers: dict | None = None
    psi: dict | None = None
    every: int = 1
    snapshot_every: int = 0
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    digest: str = ""


def _get(cp: configparser.ConfigParser, section: str, key: str, kind=float, default=None):
    if not cp.has_option(section, key):
        if default is None:
            raise ConfigError(f"[{section}] missing required key {key!r}")
        return default
    raw = cp.get(section, key)
    try:
        if kind is tuple:
            vals = tuple(float(v) for v in raw.split(","))
            if len(vals) != 2:
                raise ValueError
            return vals
        return kind(raw)
    except ValueError:
        name = "pair of numbers" if kind is tuple else kind.__name__
        raise ConfigError(f"[{section}] {key} = {raw!r}: expected {name}") from None


def config_digest(cp: configparser.ConfigParser) -> str:
    canon = {s: dict(sorted(cp.items(s))) for s in sorted(cp.sections())}
    return hashlib.sha256(json.dumps(canon, sort_keys=True).encode()).hexdigest()


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for sec in ("grid", "params", "time", "init"):
        if not cp.has_section(sec):
            raise ConfigError(f"missing section [{sec}]")
    try:
        params = ModelParams(
            f=_get(cp, "params", "f"),
            gravity=_get(cp, "params", "gravity"),
            theta0=_get(cp, "params", "theta0"),
            s=_get(cp, "params", "s"),
            H=_get(cp, "grid", "H"),
            Lx=_get(cp, "grid", "Lx"),
        )
        grid = Grid2D(_get(cp, "grid", "nx", int), _get(cp, "grid", "nz", int), params.Lx, params.H,
                      workers=thread_count())
    except (ParameterError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    kind = cp.get("init", "kind", fallback="eady_perturbed")
    if kind not in INIT_KINDS:
        raise ConfigError(f"[init] kind = {kind!r}: expected one of {', '.join(INIT_KINDS)}")
    init = {
        "kind": kind,
        "amplitude": _get(cp, "init", "amplitude", float, 1e-2),
        "mode": _get(cp, "init", "mode", int, 1),
    }
    dt, t_end = _get(cp, "time", "dt"), _get(cp, "time", "t_end")
    if not dt > 0:
        raise ConfigError(f"[time] dt = {dt!r}: must be positive")
    if t_end < 0:
        raise ConfigError(f"[time] t_end = {t_end!r}: must be non-negative")
    loops = []
    for sec in sorted((s for s in cp.sections() if s.startswith("loops.")), key=lambda s: int(s.split(".")[1])):
        loops.append(LoopSpec(_get(cp, sec, "centre", tuple), _get(cp, sec, "radii", tuple),
                              _get(cp, sec, "markers", int, 256), _get(cp, sec, "angle", float, 0.0)))
    tracers = None
    if cp.has_section("tracers"):
        tracers = {
            "nx": _get(cp, "tracers", "nx", int, 16),
            "nz": _get(cp, "tracers", "nz", int, 16),
            "margin": _get(cp, "tracers", "margin", float, 0.1),
        }
    psi = None
    if cp.has_section("psi"):
        if params.s == 0:
            raise ConfigError("[psi] needs s != 0: the relabelling closure is degenerate for s = 0")
        psi = {
            "kind": cp.get("psi", "kind", fallback="cosine_bump"),
            "centre": _get(cp, "psi", "centre", tuple, (0.5 * params.Lx, 0.5 * params.H)),
            "radii": _get(cp, "psi", "radii", tuple, (0.2 * params.Lx, 0.25 * params.H)),
            "amplitude": _get(cp, "psi", "amplitude", float, 1.0),
        }
    tol = dict(DEFAULT_TOLERANCES)
    if cp.has_section("tolerances"):
        for key in cp.options("tolerances"):
            if key not in tol:
                raise ConfigError(f"[tolerances] unknown key {key!r}")
            tol[key] = _get(cp, "tolerances", key)
    return RunConfig(
        grid=grid, params=params, N2=_get(cp, "params", "N2", float, 2.5e-5), dt=dt, t_end=t_end,
        init=init, loops=loops, tracers=tracers, psi=psi,
        every=max(1, _get(cp, "output", "every", int, 1) if cp.has_section("output") else 1),
        snapshot_every=_get(cp, "output", "snapshot_every", int, 0) if cp.has_section("output") else 0,
        tolerances=tol, digest=config_digest(cp),
    )


def load_config(path: str | Path) -> tuple[RunConfig, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path)), text


def config_s(path: str | Path) -> float:
    """The ``[params] s`` entry of a config file, without full validation."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if not cp.read(path):
            raise ConfigError(f"cannot read config {path}")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return _get(cp, "params", "s")


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV}={raw!r}: expected a positive integer") from None
    if n < 1:
        raise ConfigError(f"{THREADS_ENV}={raw!r}: expected a positive integer")
    return n


# -- snapshots ----------------------------------------------------------------------

MAGIC = b"SLCE"
VERSION = 1
_HEADER = struct.Struct("<4sIII3d")
FIELDS = ("u_Sx", "u_Sz", "u_T", "theta_S", "D")


def snapshot_bytes(state: SliceState) -> bytes:
    g = state.grid
    head = _HEADER.pack(MAGIC, VERSION, g.nx, g.nz, g.Lx, g.H, state.time)
    arrays = (state.u[0], state.u[1], state.u_t, state.theta, state.D)
    return head + b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)


def write_snapshot(path: Path, state: SliceState) -> None:
    _atomic_write(path, snapshot_bytes(state))


def read_snapshot(path: str | Path) -> dict:
    """Decode a snapshot into ``{nx, nz, Lx, H, t, u_Sx, ...}``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotFormatError(f"{path}: expected at least {_HEADER.size} header bytes, got {len(data)}")
    magic, version, nx, nz, Lx, H, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise SnapshotFormatError(f"{path}: format version {version}, expected {VERSION}")
    expected = _HEADER.size + len(FIELDS) * nx * nz * 8
    if len(data) != expected:
        raise SnapshotFormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    out = {"nx": nx, "nz": nz, "Lx": Lx, "H": H, "t": t}
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(len(FIELDS), nx, nz)
    for name, arr in zip(FIELDS, flat):
        out[name] = arr.astype(float)
    return out


def state_from_snapshot(snap: dict, cfg: RunConfig) -> SliceState:
    g, p = cfg.grid, cfg.params
    if (snap["nx"], snap["nz"], snap["Lx"], snap["H"]) != (g.nx, g.nz, g.Lx, g.H):
        raise SnapshotFormatError(
            f"snapshot grid {snap['nx']}x{snap['nz']} (Lx={snap['Lx']}, H={snap['H']}) does not match "
            f"config grid {g.nx}x{g.nz} (Lx={g.Lx}, H={g.H})"
        )
    s = p.s if cfg.init["kind"] != "stratified_rest" else 0.0
    u = np.stack([snap["u_Sx"], snap["u_Sz"]])
    return SliceState(u, snap["u_T"], snap["theta_S"], snap["D"], s, p, g, snap["t"])


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


# -- diagnostics rows -----------------------------------------------------------------

def csv_header(nloops: int) -> list[str]:
    return (["t", "energy", "energy_rel_drift"] + [f"circ_{k}" for k in range(nloops)]
            + ["pv_tracer_max_drift", "noether_charge", "charge_rel_drift", "closure_residual",
               "div_norm", "cfl"])


def _fmt(v: float) -> str:
    return repr(float(v))


class Run:
    """Flow plus everything carried alongside it for diagnostics."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        g, p = cfg.grid, cfg.params
        self.state = init_state(cfg.init["kind"], g, p, N2=cfg.N2,
                                amplitude=cfg.init["amplitude"], mode=cfg.init["mode"])
        self.loops = [ellipse_loop(lp.centre, lp.radii, lp.markers, g.Lx, lp.angle) for lp in cfg.loops]
        self.tracers = None
        if cfg.tracers:
            pts = tracer_lattice(g, cfg.tracers["nx"], cfg.tracers["nz"], cfg.tracers["margin"])
            self.tracers = TracerSet.release(self.state, pts)
        self.sym = None
        if cfg.psi:
            psi = cfg.psi["amplitude"] * init_psi(cfg.psi["kind"], g, centre=cfg.psi["centre"],
                                                  radii=cfg.psi["radii"])
            self.sym = symmetry_from_psi(psi, self.state, mode="free")
        s0 = self.state
        self.c0 = [circulation(s0, lp) for lp in self.loops]
        self.pv_range0 = pv_range(s0)
        self.e0 = energy(s0)
        self.escale = max(abs(self.e0), kinetic_energy(s0))
        if self.sym is not None:
            self.q0 = noether_charge(self.sym, s0)
            self.qscale = abs(self.q0) + charge_scale(self.sym, s0)
        self.passengers = []
        if self.loops:
            self.passengers.append(marker_passenger(np.vstack([lp.markers for lp in self.loops])))
        if self.tracers is not None:
            self.passengers.append(marker_passenger(self.tracers.positions))
        if self.sym is not None:
            self.passengers.append(symmetry_passenger(self.sym))

    def step(self) -> None:
        self.state, vals = rk4_step(self.state, self.cfg.dt, self.passengers)
        self.passengers = [(v, rhs) for v, (_, rhs) in zip(vals, self.passengers)]
        k = 0
        if self.loops:
            marks, start = vals[k], 0
            moved = []
            for lp in self.loops:
                n = lp.markers.shape[0]
                moved.append(lp.moved(marks[start:start + n]))
                start += n
            self.loops = moved
            k += 1
        if self.tracers is not None:
            self.tracers = self.tracers.moved(vals[k])
            k += 1
        if self.sym is not None:
            self.sym = symmetry_from_passenger(self.sym, vals[k], self.state)

    def row(self) -> dict:
        """One diagnostics row, keyed by the CSV column names."""
        s = self.state
        e = energy(s)
        row = {"t": s.time, "energy": e, "energy_rel_drift": abs(e - self.e0) / self.escale}
        for k, lp in enumerate(self.loops):
            row[f"circ_{k}"] = circulation(s, lp)
        row["pv_tracer_max_drift"] = (
            pv_tracers(s, self.tracers)["max"] if self.tracers is not None else math.nan
        )
        if self.sym is not None:
            q = noether_charge(self.sym, s)
            row["noether_charge"] = q
            row["charge_rel_drift"] = abs(q - self.q0) / self.qscale
            row["closure_residual"] = proposition_residual(self.sym, s)
        else:
            row["noether_charge"] = row["charge_rel_drift"] = row["closure_residual"] = math.nan
        row["div_norm"] = divergence_norm(s)
        row["cfl"] = cfl_number(s, self.cfg.dt)
        return row


def _write_manifest(out: Path, manifest: dict) -> None:
    _atomic_write(out / "manifest.json", (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())


def cmd_run(config_path: str | Path, out_dir: str | Path) -> int:
    """Run a configured simulation; see the module docstring for exit codes."""
    try:
        cfg, text = load_config(config_path)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_USAGE
    out = Path(out_dir)
    try:
        (out / "snapshots").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory %s: %s", out, exc.strerror)
        return EXIT_USAGE
    shutil.copyfile(config_path, out / "config.ini")
    manifest = {
        "config_digest": cfg.digest,
        "code_version": __version__,
        "threads": cfg.grid.workers,
        "start_time": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "files": {"config.ini": "complete"},
    }
    try:
        run = Run(cfg)
    except (ParameterError, SymmetryError, MarkerExitError, ValueError) as exc:
        log.error("config error: %s", exc)
        manifest.update(status="config-error", message=str(exc), end_time=time.strftime("%Y-%m-%dT%H:%M:%S%z"))
        _write_manifest(out, manifest)
        return EXIT_USAGE
    cfl = cfl_number(run.state, cfg.dt)
    if cfl > 0.5:
        log.warning("CFL estimate %.3f exceeds 0.5", cfl)
    nsteps = int(round(cfg.t_end / cfg.dt))
    status, code, message = "complete", EXIT_OK, ""
    csv_path = out / "diagnostics.csv"
    snaps = []

    def snapshot(step: int) -> None:
        name = f"snapshots/snap_{step:07d}.slce"
        write_snapshot(out / name, run.state)
        if run.loops:
            np.save(out / (name + ".markers.npy"), np.vstack([lp.markers for lp in run.loops]))
        snaps.append(name)

    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(len(run.loops)))
        writer.writerow([_fmt(v) for v in run.row().values()])
        snapshot(0)
        try:
            for step in range(1, nsteps + 1):
                run.step()
                if step % cfg.every == 0 or step == nsteps:
                    writer.writerow([_fmt(v) for v in run.row().values()])
                    fh.flush()
                if (cfg.snapshot_every and step % cfg.snapshot_every == 0) or step == nsteps:
                    if snaps[-1] != f"snapshots/snap_{step:07d}.slce":
                        snapshot(step)
        except (BlowUpError, MarkerExitError, FloatingPointError) as exc:
            status, code, message = "blow-up", EXIT_NUMERICAL, str(exc)
            log.error("numerical failure: %s", exc)
    checks = _tolerance_checks(cfg, run)
    manifest.update(
        status=status,
        message=message,
        steps=nsteps,
        end_time=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        checks=checks,
    )
    manifest["files"]["diagnostics.csv"] = "complete" if status == "complete" else "partial"
    for name in snaps:
        manifest["files"][name] = "complete"
    _write_manifest(out, manifest)
    return code


def _tolerance_checks(cfg: RunConfig, run: Run) -> dict:
    """Final-state conservation figures against the configured tolerances."""
    tol, g = cfg.tolerances, cfg.grid
    row = run.row()
    vscale = max(float(np.max(np.abs(run.state.u))), np.finfo(float).tiny)
    checks = {
        "energy": row["energy_rel_drift"],
        "projection": row["div_norm"] / (vscale / min(g.dx, g.dz)),
    }
    if run.loops:
        checks["circulation"] = max(
            abs(row[f"circ_{k}"] - c0) / abs(c0) for k, c0 in enumerate(run.c0)
        )
    if run.tracers is not None and run.pv_range0 > 0:
        checks["pv"] = row["pv_tracer_max_drift"] / run.pv_range0
    if run.sym is not None:
        checks["charge"] = row["charge_rel_drift"]
        checks["closure"] = row["closure_residual"]
    return {k: {"value": v, "tolerance": tol[k], "pass": bool(v <= tol[k])} for k, v in checks.items()}


# -- verify ------------------------------------------------------------------------

def cmd_verify(suite: str, level: str = "quick", out_dir: str | Path | None = None,
               config_path: str | Path | None = None) -> int:
    from . import verify

    if suite not in verify.SUITES:
        log.error("unknown suite %r; expected one of %s", suite, ", ".join(verify.SUITES))
        return EXIT_USAGE
    if level not in verify.LEVELS:
        log.error("unknown level %r; expected one of %s", level, ", ".join(verify.LEVELS))
        return EXIT_USAGE
    if config_path is not None and suite == "noether":
        try:
            s_value = config_s(config_path)
        except ConfigError as exc:
            log.error("config error: %s", exc)
            return EXIT_USAGE
        if s_value == 0:
            # the degenerate closure is reported as an expected failure
            return _report([verify.check_degenerate_closure()], out_dir, suite, level)
    checks = verify.run_suite(suite, level)
    return _report(checks, out_dir, suite, level)


def _report(checks, out_dir, suite: str, level: str) -> int:
    from .verify import table

    text = table(checks)
    print(f"suite {suite} ({level})")
    print(text)
    ok = all(c.passed for c in checks)
    print(f"{sum(c.passed for c in checks)}/{len(checks)} checks passed")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"verify_{suite}_{level}.txt").write_text(text + "\n")
    return EXIT_OK if ok else EXIT_VERIFY


# -- diagnose ----------------------------------------------------------------------

def parse_loops(spec: str, Lx: float) -> list[MaterialLoop]:
    """``"cx,cz,rx,rz[,n];..."`` -> elliptical loops."""
    loops = []
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        try:
            vals = [float(v) for v in part.split(",")]
        except ValueError:
            raise ConfigError(f"--loops {part!r}: expected numbers") from None
        if len(vals) not in (4, 5):
            raise ConfigError(f"--loops {part!r}: expected cx,cz,rx,rz[,markers]")
        n = int(vals[4]) if len(vals) == 5 else 256
        loops.append(ellipse_loop(vals[:2], vals[2:4], n, Lx))
    return loops


def diagnose_snapshot(snapshot_path, cfg: RunConfig, loops=None) -> dict:
    """Energy, PV statistics and loop circulations of a stored state.

    Without explicit ``loops``, the configured loops are used, at the marker
    positions stored beside the snapshot when present (so values match the
    run's own diagnostics) and at their initial shapes otherwise.
    """
    state = state_from_snapshot(read_snapshot(snapshot_path), cfg)
    if loops is None:
        g = cfg.grid
        loops = [ellipse_loop(lp.centre, lp.radii, lp.markers, g.Lx, lp.angle) for lp in cfg.loops]
        sidecar = Path(str(snapshot_path) + ".markers.npy")
        if loops and sidecar.exists():
            marks, start, moved = np.load(sidecar), 0, []
            for lp in loops:
                n = lp.markers.shape[0]
                moved.append(lp.moved(marks[start:start + n]))
                start += n
            loops = moved
    q = pv_field(state)
    out = {
        "t": state.time,
        "energy": energy(state),
        "pv_min": float(np.min(q)),
        "pv_max": float(np.max(q)),
        "pv_mean": float(np.mean(q)),
        "pv_std": float(np.std(q)),
    }
    for k, lp in enumerate(loops):
        out[f"circ_{k}"] = circulation(state, lp)
    return out


def cmd_diagnose(snapshot_path, config_path=None, loops: str | None = None, csv_path=None) -> int:
    snap = Path(snapshot_path)
    if config_path is None:
        # runs store their config one level above the snapshots directory
        for cand in (snap.parent / "config.ini", snap.parent.parent / "config.ini"):
            if cand.exists():
                config_path = cand
                break
        else:
            log.error("no config given and none found beside %s", snap)
            return EXIT_USAGE
    try:
        cfg, _ = load_config(config_path)
        loop_list = parse_loops(loops, cfg.grid.Lx) if loops else None
        result = diagnose_snapshot(snap, cfg, loop_list)
    except (ConfigError, SnapshotFormatError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except OSError as exc:
        log.error("cannot read %s: %s", snap, exc.strerror)
        return EXIT_USAGE
    for key, val in result.items():
        print(f"{key} = {val!r}")
    if csv_path is not None:
        path = Path(csv_path)
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if new:
                writer.writerow(["snapshot", *result])
            writer.writerow([str(snap), *(_fmt(v) for v in result.values())])
    return EXIT_OK


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slicekit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"slicekit {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured simulation")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)

    ver = sub.add_parser("verify", help="run a verification suite")
    ver.add_argument("suite", choices=("algebra", "conservation", "noether"))
    ver.add_argument("--level", choices=("quick", "full"), default="quick")
    ver.add_argument("--out")
    ver.add_argument("--config", help="only its s is used: s = 0 runs the degenerate-closure case")

    dia = sub.add_parser("diagnose", help="recompute diagnostics from a snapshot")
    dia.add_argument("snapshot")
    dia.add_argument("--config", help="defaults to the config.ini stored with the run")
    dia.add_argument("--loops", help='elliptical loops "cx,cz,rx,rz[,markers];..."')
    dia.add_argument("--csv", help="append the result to this CSV file")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        thread_count()
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    if args.command == "run":
        return cmd_run(args.config, args.out)
    if args.command == "verify":
        return cmd_verify(args.suite, args.level, args.out, args.config)
    return cmd_diagnose(args.snapshot, args.config, args.loops, args.csv)


if __name__ == "__main__":
    sys.exit(main())
