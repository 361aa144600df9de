"""Time stepping of the coupled system and whole-run orchestration.

Each step first advances the three scalars (transport, chemotaxis, reaction
explicit; diffusion explicit or backward Euler depending on ``scheme``) and
then the fluid, with the buoyancy force computed from the updated densities.

``scheme="explicit"`` is forward Euler throughout and is limited by the
diffusive bound ``h^2 / (2 dim)``. ``scheme="imex"`` treats diffusion and
viscosity implicitly with exact transform solves, leaving only the transport
and reaction bounds; it is the default for long runs.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Tuple

import numpy as np

from kslab.diagnostics import CSV_COLUMNS, DiagnosticsRecord, LyapunovSpec, compute_record
from kslab.errors import BlowUpError, InvalidConfigError, StepRejectedError, UnsupportedRegimeError
from kslab.grid import Grid, ScalarField, VectorField, apply_neumann, apply_noslip, read_snapshot, save_fields
from kslab.operators import advect, chemotaxis_div, grad_faces, laplacian, solve_diffusion
from kslab.params import ModelParams, RegimeReport, SearchConfig, SteadyState, check_regime, steady_state
from kslab.stokes import buoyancy, potential_gradient, project, stokes_step

log = logging.getLogger(__name__)

SCHEMES = ("imex", "explicit")


@dataclass
class State:
    """Solution at one time level.

    ``clipped_mass`` and ``div_residual`` describe the step that produced the
    state (zero for initial data).
    """

    t: float
    n1: ScalarField
    n2: ScalarField
    c: ScalarField
    u: VectorField
    P: ScalarField
    clipped_mass: float = 0.0
    div_residual: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.n1.grid


@dataclass(frozen=True)
class InitialCondition:
    """Background constants plus a seeded perturbation, or a snapshot directory.

    ``background="target"`` starts from the predicted steady state; ``n1``,
    ``n2``, ``c`` override individual constants (required when the target has
    a zero component and the amplitude is positive).
    """

    background: str = "target"
    n1: Optional[float] = None
    n2: Optional[float] = None
    c: Optional[float] = None
    amplitude: float = 0.0
    perturbation: str = "smooth"
    seed: int = 0
    snapshot: Optional[str] = None

    def __post_init__(self):
        if self.background not in ("target", "explicit"):
            raise InvalidConfigError(f"unknown background {self.background!r}", key="initial.background")
        if self.perturbation not in ("smooth", "random"):
            raise InvalidConfigError(f"unknown perturbation {self.perturbation!r}", key="initial.perturbation")
        if not (self.amplitude >= 0.0 and math.isfinite(self.amplitude)):
            raise InvalidConfigError(f"amplitude must be >= 0, got {self.amplitude}", key="initial.amplitude")


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    cells: Tuple[int, ...]
    initial: InitialCondition = field(default_factory=InitialCondition)
    t_end: float = 60.0
    dt: Optional[float] = None
    safety: float = 0.4
    dt_max: float = 0.05
    scheme: str = "imex"
    sample_dt: float = 0.5
    q: float = 4.0
    target: str = "auto"
    tol: float = 1e-3
    tol_u: float = 1e-5
    window: int = 20
    stop_on_converge: bool = True
    delta2: Optional[float] = None
    search: SearchConfig = field(default_factory=SearchConfig)
    out_dir: Optional[str] = None
    csv_name: str = "diagnostics.csv"
    write_snapshot: bool = True

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(int(n) for n in self.cells))
        if len(self.cells) != self.params.dim:
            raise InvalidConfigError(
                f"cells {self.cells} do not match the {self.params.dim}-d extents", key="domain.cells"
            )
        checks = (
            ("run.t_end", self.t_end >= 0.0 and math.isfinite(self.t_end)),
            ("run.dt", self.dt is None or self.dt > 0.0),
            ("run.safety", 0.0 < self.safety <= 1.0),
            ("run.dt_max", self.dt_max > 0.0),
            ("run.scheme", self.scheme in SCHEMES),
            ("run.sample_dt", self.sample_dt > 0.0),
            ("run.q", self.q >= 1.0),
            ("run.target", self.target in ("auto", "coexistence", "exclusion", "none")),
            ("run.tol", self.tol > 0.0 and self.tol_u > 0.0),
            ("run.window", self.window >= 1),
        )
        for key, ok in checks:
            if not ok:
                raise InvalidConfigError(f"invalid value for {key}", key=key)

    @property
    def grid(self) -> Grid:
        return Grid(self.cells, self.params.extents)


# -- initial data --------------------------------------------------------------------


def _smooth_perturbation(grid: Grid, rng: np.random.Generator, amplitude: float) -> np.ndarray:
    """Random combination of the lowest Neumann cosine modes scaled to ``max |.| = amplitude``."""
    x = grid.mesh()
    field_ = np.zeros(grid.cells)
    for k in np.ndindex(*(4,) * grid.dim):
        if not any(k):
            continue
        coef = rng.standard_normal() / (1.0 + sum(m * m for m in k))
        mode = np.ones(grid.cells)
        for axis, m in enumerate(k):
            mode = mode * np.cos(m * np.pi * x[axis] / grid.extents[axis])
        field_ += coef * mode
    peak = float(np.max(np.abs(field_)))
    return field_ * (amplitude / peak) if peak > 0.0 else field_


def _backgrounds(cfg: RunConfig) -> Tuple[float, float, float]:
    ic = cfg.initial
    base = [ic.n1, ic.n2, ic.c]
    if ic.background == "target" and any(b is None for b in base):
        try:
            s = steady_state(cfg.params)
        except UnsupportedRegimeError as exc:
            raise InvalidConfigError(
                f"background=target needs a steady state ({exc}); give initial.n1/n2/c", key="initial.background"
            ) from exc
        base = [b if b is not None else v for b, v in zip(base, (s.N1, s.N2, s.Cstar))]
    if any(b is None for b in base):
        raise InvalidConfigError("background=explicit needs initial.n1, initial.n2 and initial.c", key="initial")
    return tuple(float(b) for b in base)


def init_state(cfg: RunConfig) -> State:
    """Strictly positive initial scalars and a divergence-free, no-slip velocity."""
    grid = cfg.grid
    ic = cfg.initial
    u = VectorField.zeros(grid)
    if ic.snapshot is not None:
        values = {}
        for name in ("n1", "n2", "c"):
            header, arr = read_snapshot(Path(ic.snapshot) / f"{name}.snap")
            if arr.shape != grid.cells:
                raise InvalidConfigError(f"snapshot {name} has shape {arr.shape}, grid has {grid.cells}",
                                         key="initial.snapshot")
            values[name] = arr
        for k in range(grid.dim):
            path = Path(ic.snapshot) / f"u{k}.snap"
            if path.exists():
                _, arr = read_snapshot(path)
                u.comps[k][tuple(slice(None) if j == k else slice(1, -1) for j in range(grid.dim))] = arr
        t0 = 0.0
    else:
        backgrounds = _backgrounds(cfg)
        rng = np.random.default_rng(ic.seed)
        values = {}
        for name, b in zip(("n1", "n2", "c"), backgrounds):
            if ic.amplitude > 0.0 and not ic.amplitude < b:
                raise InvalidConfigError(
                    f"perturbation amplitude {ic.amplitude} must be below the {name} background {b}",
                    key="initial.amplitude",
                )
            if ic.perturbation == "smooth":
                delta = _smooth_perturbation(grid, rng, ic.amplitude)
            else:
                delta = rng.uniform(-ic.amplitude, ic.amplitude, size=grid.cells)
            values[name] = b + delta
        t0 = 0.0
    for name, arr in values.items():
        if not np.all(arr > 0.0):
            raise InvalidConfigError(f"initial {name} is not strictly positive", key=f"initial.{name}")
    u, P = project(apply_noslip(u))
    return State(
        t=t0,
        n1=ScalarField.from_interior(grid, values["n1"]),
        n2=ScalarField.from_interior(grid, values["n2"]),
        c=ScalarField.from_interior(grid, values["c"]),
        u=u,
        P=P,
    )


# -- step size -------------------------------------------------------------------------


def dt_bounds(state: State, p: ModelParams, scheme: str = "imex") -> dict:
    """Individual stability bounds (before the safety factor)."""
    g = state.grid
    h = g.h_min
    umax = state.u.max_abs()
    chi = max(p.chi1, p.chi2)
    gmax = grad_faces(state.c).max_abs()
    nmax = max(float(np.max(state.n1.interior)), float(np.max(state.n2.interior)), 0.0)
    bounds = {
        "advective": h / umax if umax > 0.0 else math.inf,
        "chemotactic": h / (chi * gmax) if chi * gmax > 0.0 else math.inf,
        "reaction": min(
            1.0 / (p.mu1 * (1.0 + nmax * (1.0 + p.a1))),
            1.0 / (p.mu2 * (1.0 + nmax * (1.0 + p.a2))),
        ),
        # the explicit -c term of the signal equation
        "signal": 1.0,
    }
    if scheme == "explicit":
        bounds["diffusive"] = h * h / (2.0 * g.dim)
    return bounds


def stable_dt(state: State, p: ModelParams, scheme: str = "imex", safety: float = 0.4) -> float:
    return safety * min(dt_bounds(state, p, scheme).values())


# -- one step -------------------------------------------------------------------------


def _blow_up_check(state_fields, t):
    for name, f in state_fields.items():
        if not np.all(np.isfinite(f)):
            norms = {k: float(np.nanmax(np.abs(v))) if np.any(np.isfinite(v)) else math.inf
                     for k, v in state_fields.items()}
            raise BlowUpError(f"non-finite {name} at t={t:.6g}", t=t, norms=norms)


def scalar_tendencies(n1, n2, c, u, p: ModelParams, diffusion: bool = True) -> dict:
    """Right-hand sides of the three scalar equations on interior cells.

    Diffusion is left out when ``diffusion`` is false (it is then handled
    implicitly by the caller).
    """
    v1, v2, vc = n1.interior, n2.interior, c.interior
    rhs = {
        "n1": advect(u, n1).interior + chemotaxis_div(n1, c, p.chi1).interior
        + p.mu1 * v1 * (1.0 - v1 - p.a1 * v2),
        "n2": advect(u, n2).interior + chemotaxis_div(n2, c, p.chi2).interior
        + p.mu2 * v2 * (1.0 - p.a2 * v1 - v2),
        "c": advect(u, c).interior - vc + p.alpha * v1 + p.beta * v2,
    }
    if diffusion:
        for name, f in (("n1", n1), ("n2", n2), ("c", c)):
            rhs[name] += laplacian(f).interior
    return rhs


def step(state: State, p: ModelParams, dt: float, scheme: str = "imex", grad_phi: VectorField = None) -> State:
    """Advance the coupled system by ``dt``; see the module docstring for the splitting."""
    if scheme not in SCHEMES:
        raise InvalidConfigError(f"unknown scheme {scheme!r}", key="run.scheme")
    g = state.grid
    u = state.u
    with np.errstate(invalid="ignore", over="ignore"):  # non-finite values are reported just below
        rhs = scalar_tendencies(state.n1, state.n2, state.c, u, p, diffusion=scheme == "explicit")
        new = {
            "n1": state.n1.interior + dt * rhs["n1"],
            "n2": state.n2.interior + dt * rhs["n2"],
            "c": state.c.interior + dt * rhs["c"],
        }
    _blow_up_check(new, state.t + dt)

    fields_ = {}
    clipped = 0.0
    for name, values in new.items():
        f = ScalarField.from_interior(g, values)
        if scheme == "imex":
            f = solve_diffusion(f, dt)
        neg = f.interior < 0.0
        if np.any(neg):
            lost = -float(np.sum(f.interior[neg])) * g.volume_element
            clipped += lost
            f.interior[neg] = 0.0
            apply_neumann(f)
            log.debug("clipped %.3e of %s at t=%.6g", lost, name, state.t + dt)
        fields_[name] = f
    _blow_up_check({k: f.interior for k, f in fields_.items()}, state.t + dt)

    force = buoyancy(fields_["n1"], fields_["n2"], p, grad_phi)
    fluid = stokes_step(u, force, dt, viscous="explicit" if scheme == "explicit" else "implicit")
    _blow_up_check({"u%d" % k: fluid.u_new.inner(k) for k in range(g.dim)}, state.t + dt)
    return State(
        t=state.t + dt,
        n1=fields_["n1"],
        n2=fields_["n2"],
        c=fields_["c"],
        u=fluid.u_new,
        P=fluid.P,
        clipped_mass=clipped,
        div_residual=fluid.div_residual,
    )


# -- whole runs -------------------------------------------------------------------------


@dataclass
class RunResult:
    state: State
    records: List[DiagnosticsRecord]
    converged: bool
    converged_at: Optional[float]
    steps: int
    max_div_ratio: float
    max_clip_fraction: float
    report: Optional[RegimeReport]
    target: Optional[SteadyState]
    lyapunov: Optional[LyapunovSpec]
    wall_time: float
    csv_path: Optional[Path] = None
    snapshot_dir: Optional[Path] = None

    def final_distances(self):
        r = self.records[-1]
        return r.dist_n1, r.dist_n2, r.dist_c, r.linf_u


def resolve_target(cfg: RunConfig):
    """Regime report, target state and Lyapunov multipliers selected by ``cfg.target``."""
    if cfg.target == "none":
        return None, None, None
    report = check_regime(cfg.params, cfg.search)
    target = report.target
    if target is None:
        try:
            target = steady_state(cfg.params)
        except UnsupportedRegimeError:
            target = None
    if cfg.target in ("coexistence", "exclusion"):
        expected = "Coexistence" if cfg.target == "coexistence" else "Exclusion"
        if target is None or (target.N1 == 0.0) != (expected == "Exclusion"):
            raise InvalidConfigError(f"target={cfg.target} does not match a1={cfg.params.a1}, a2={cfg.params.a2}",
                                     key="run.target")
    lyap = LyapunovSpec.from_report(report, cfg.delta2)
    return report, target, lyap


def _converged(rec: DiagnosticsRecord, cfg: RunConfig) -> bool:
    return (
        rec.dist_n1 <= cfg.tol
        and rec.dist_n2 <= cfg.tol
        and rec.dist_c <= cfg.tol
        and rec.linf_u <= cfg.tol_u
    )


def run(cfg: RunConfig, on_record: Callable[[DiagnosticsRecord], None] = None) -> RunResult:
    """Integrate from the initial data until ``t_end`` or convergence.

    A run counts as converged once every distance stays below tolerance for
    ``cfg.window`` consecutive samples.
    """
    wall0 = time.perf_counter()
    p = cfg.params
    report, target, lyap = resolve_target(cfg)
    state = init_state(cfg)
    grid = state.grid
    grad_phi = potential_gradient(grid, p)

    csv_path = None
    fh = writer = None
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / cfg.csv_name
        fh = open(csv_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)

    records: List[DiagnosticsRecord] = []
    streak = 0
    converged_at = None
    converged = False
    steps = 0
    max_div_ratio = 0.0
    max_clip_fraction = 0.0
    clipped_since_sample = 0.0

    def emit(rec):
        records.append(rec)
        if writer is not None:
            writer.writerow(rec.csv_row())
        if on_record is not None:
            on_record(rec)

    try:
        emit(compute_record(state, p, target, lyap, cfg.q))
        sample = 1
        while state.t < cfg.t_end and not (converged and cfg.stop_on_converge):
            t_sample = min(sample * cfg.sample_dt, cfg.t_end)
            bound = min(stable_dt(state, p, cfg.scheme, cfg.safety), cfg.dt_max)
            if cfg.dt is not None:
                if cfg.dt > stable_dt(state, p, cfg.scheme, 1.0):
                    raise StepRejectedError(f"fixed dt={cfg.dt} exceeds the stability bound at t={state.t:.6g}",
                                            stable_dt(state, p, cfg.scheme, 1.0))
                bound = cfg.dt
            dt = bound
            land = state.t + dt >= t_sample * (1.0 - 1e-12)
            if land:
                dt = t_sample - state.t
            mass_before = integrate_mass(state)
            state = step(state, p, dt, cfg.scheme, grad_phi)
            steps += 1
            if land:
                state.t = t_sample
            max_div_ratio = max(max_div_ratio, state.div_residual / max(1.0, state.u.max_abs()))
            if state.clipped_mass > 0.0:
                max_clip_fraction = max(max_clip_fraction, state.clipped_mass / max(mass_before, 1e-300))
            clipped_since_sample += state.clipped_mass
            if land:
                rec = compute_record(state, p, target, lyap, cfg.q, clipped_since_sample)
                clipped_since_sample = 0.0
                sample += 1
                emit(rec)
                if target is not None and _converged(rec, cfg):
                    streak += 1
                    if streak == 1:
                        converged_at = rec.t
                    if streak >= cfg.window and not converged:
                        converged = True
                        log.info("converged at t=%.6g (window opened at t=%.6g)", rec.t, converged_at)
                else:
                    streak = 0
                    converged_at = None
                    converged = False
    finally:
        if fh is not None:
            fh.close()

    snapshot_dir = None
    if cfg.out_dir is not None and cfg.write_snapshot:
        snapshot_dir = Path(cfg.out_dir) / "final"
        save_fields(snapshot_dir, grid, state.t, {"n1": state.n1, "n2": state.n2, "c": state.c, "P": state.P},
                    state.u)
    return RunResult(
        state=state,
        records=records,
        converged=converged,
        converged_at=converged_at if converged else None,
        steps=steps,
        max_div_ratio=max_div_ratio,
        max_clip_fraction=max_clip_fraction,
        report=report,
        target=target,
        lyapunov=lyap,
        wall_time=time.perf_counter() - wall0,
        csv_path=csv_path,
        snapshot_dir=snapshot_dir,
    )


def integrate_mass(state: State) -> float:
    dv = state.grid.volume_element
    return float(np.sum(state.n1.interior) + np.sum(state.n2.interior) + np.sum(state.c.interior)) * dv
