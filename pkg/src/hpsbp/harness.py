"""Experiment configuration, orchestration, error norms and CSV reporting."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import InvalidArgument
from .mesh import (Mesh, assign_random_degrees, build_box_mesh, perturb_interfaces, refine_random,
                   refine_uniform)
from .metrics import compute_metrics
from .physics import BurgersModel, EulerModel, GasModel, conserved_from_primitives
from .problems import (BurgersParams, ShockParams, TgvParams, VortexParams, burgers_initial, shock_exact,
                       tgv_initial, vortex_exact)
from .semidiscrete import Discretization, SchemeFlags
from .timeint import EntropyFunctional, TimeConfig, integrate

EXPERIMENTS = ("run", "entropy-test", "converge", "freestream", "tgv", "metrics-report")
MODES = ("euler", "navier-stokes", "burgers")


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class MeshConfig:
    cells: tuple = (4, 4, 4)
    bounds: tuple | None = None
    periodic: tuple | None = None
    max_levels: int = 2
    refine_fraction: float = 0.2
    degrees: tuple = (2, 3)
    seed: int = 1
    perturb: bool = True
    interface_degree: int | None = None


@dataclass(frozen=True)
class GasConfig:
    gamma: float | None = None
    R: float | None = None
    Pr: float | None = None
    mu: float | None = None
    Tref: float | None = None
    rhoref: float | None = None


@dataclass(frozen=True)
class SchemeConfig:
    mode: str = "euler"
    dissipation: bool = True
    viscous: bool | None = None
    ip_scale: float = 1.0
    optimize_metrics: bool = True
    compiled: bool = True

    @property
    def viscous_on(self) -> bool:
        return self.mode == "navier-stokes" if self.viscous is None else bool(self.viscous)


@dataclass(frozen=True)
class ProblemConfig:
    name: str = "vortex"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CheckConfig:
    """Thresholds asserted by the experiments; ``None`` disables a check."""

    entropy_rate_max: float | None = 1e-11
    dissipative_rate_max: float = 1e-12
    relative_entropy_max: float | None = None
    entropy_growth_max: float | None = None
    unrelaxed_drift_min: float | None = None
    conservation_max: float | None = None
    freestream_max: float = 1e-12
    raw_freestream_min: float | None = 1e-6
    rate_band: tuple | None = None


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "run"
    output_dir: str = "output"
    levels: int = 3
    mesh: MeshConfig = MeshConfig()
    gas: GasConfig = GasConfig()
    scheme: SchemeConfig = SchemeConfig()
    time: TimeConfig = TimeConfig()
    problem: ProblemConfig = ProblemConfig()
    checks: CheckConfig = CheckConfig()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise InvalidArgument(f"unknown experiment {self.experiment!r}; expected one of {EXPERIMENTS}")
        if self.scheme.mode not in MODES:
            raise InvalidArgument(f"unknown scheme mode {self.scheme.mode!r}; expected one of {MODES}")
        if self.scheme.mode == "euler" and self.scheme.viscous:
            raise InvalidArgument("viscous terms require mode 'navier-stokes'")
        if self.problem.name not in PROBLEMS:
            raise InvalidArgument(f"unknown problem {self.problem.name!r}; expected one of {tuple(PROBLEMS)}")
        if self.levels < 1:
            raise InvalidArgument("levels must be at least 1")


_SECTIONS = {"mesh": MeshConfig, "gas": GasConfig, "scheme": SchemeConfig, "time": TimeConfig,
             "problem": ProblemConfig, "checks": CheckConfig}


def _build(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise InvalidArgument(f"section {where!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InvalidArgument(f"unknown key(s) in {where!r}: {', '.join(unknown)}")
    kwargs = {k: tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
              for k, v in data.items()}
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    top = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - top)
    if unknown:
        raise InvalidArgument(f"unknown top-level key(s): {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        kwargs[key] = _build(_SECTIONS[key], value, key) if key in _SECTIONS else value
    return RunConfig(**kwargs)


def load_config(path: str | Path) -> RunConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


# ---------------------------------------------------------------- problems


@dataclass(frozen=True)
class ProblemSetup:
    name: str
    gas: GasModel
    bounds: tuple
    periodic: tuple
    initial: Callable[[np.ndarray], np.ndarray]
    exact: Callable[[np.ndarray, float], np.ndarray] | None = None


def _params(cls, values: dict, name: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise InvalidArgument(f"unknown {name} parameter(s): {', '.join(unknown)}")
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in values.items()})


def _vortex(values):
    p = _params(VortexParams, values, "vortex")
    return ProblemSetup("vortex", p.gas, ((-5.0, 5.0),) * 3, (True,) * 3,
                        lambda x: vortex_exact(p, x, 0.0), lambda x, t: vortex_exact(p, x, t))


def _shock(values):
    p = _params(ShockParams, values, "viscous-shock")
    return ProblemSetup("viscous-shock", p.gas, ((-0.5, 0.5),) * 3, (False,) * 3,
                        lambda x: shock_exact(p, x, 0.0), lambda x, t: shock_exact(p, x, t))


def _tgv(values):
    p = _params(TgvParams, values, "tgv")
    return ProblemSetup("tgv", p.gas, p.bounds, (True,) * 3, lambda x: tgv_initial(p, x))


def _burgers(values):
    p = _params(BurgersParams, values, "burgers")
    bounds = ((0.0, 1.0),) * 3
    return ProblemSetup("burgers", GasModel(), bounds, (True,) * 3, lambda x: burgers_initial(p, x, bounds))


PROBLEMS = {"vortex": _vortex, "viscous-shock": _shock, "tgv": _tgv, "burgers": _burgers}


def problem_setup(cfg: RunConfig) -> ProblemSetup:
    setup = PROBLEMS[cfg.problem.name](dict(cfg.problem.params))
    overrides = {k: v for k, v in dataclasses.asdict(cfg.gas).items() if v is not None}
    if overrides:
        setup = dataclasses.replace(setup, gas=dataclasses.replace(setup.gas, **overrides))
    return setup


# ---------------------------------------------------------------- building blocks


def build_mesh(cfg: RunConfig, setup: ProblemSetup | None = None) -> Mesh:
    """Box mesh, random h-refinement, random degrees and curved interfaces."""
    setup = setup or problem_setup(cfg)
    mc = cfg.mesh
    bounds = mc.bounds if mc.bounds is not None else setup.bounds
    periodic = setup.periodic if mc.periodic is None else mc.periodic
    if isinstance(periodic, bool):
        periodic = (periodic,) * 3
    degrees = tuple(int(p) for p in mc.degrees)
    mesh = build_box_mesh(bounds, tuple(mc.cells), tuple(periodic), degree=min(degrees))
    mesh = refine_random(mesh, mc.seed, mc.max_levels, mc.refine_fraction)
    mesh = assign_random_degrees(mesh, mc.seed, degrees)
    if mc.perturb:
        mesh = perturb_interfaces(mesh, mc.interface_degree or min(degrees))
    return mesh


def make_model(cfg: RunConfig, setup: ProblemSetup):
    if cfg.scheme.mode == "burgers":
        return BurgersModel()
    return EulerModel(setup.gas, viscous=cfg.scheme.viscous_on)


def build_discretization(cfg: RunConfig, mesh: Mesh, setup: ProblemSetup | None = None,
                         optimize: bool | None = None) -> Discretization:
    setup = setup or problem_setup(cfg)
    opt = cfg.scheme.optimize_metrics if optimize is None else optimize
    metrics = compute_metrics(mesh, optimize=opt)
    flags = SchemeFlags(dissipation=cfg.scheme.dissipation, viscous=cfg.scheme.viscous_on,
                        ip_scale=cfg.scheme.ip_scale)
    boundary = None
    if mesh.boundary_faces:
        if setup.exact is None:
            raise InvalidArgument(f"problem {setup.name!r} has no exact solution for boundary data")
        boundary = setup.exact
    return Discretization(mesh, metrics, make_model(cfg, setup), flags, boundary, compiled=cfg.scheme.compiled)


def error_norms(disc: Discretization, q: np.ndarray, exact: np.ndarray, component: int = 0):
    """Volume-scaled (L1, L2, Linf) norms of the error in one solution component."""
    e = q[:, component] - exact[:, component]
    w = disc.mass_jac
    vol = float(np.sum(w))
    return (float(np.sum(w * np.abs(e)) / vol), float(math.sqrt(np.sum(w * e * e) / vol)),
            float(np.max(np.abs(e))) if e.size else 0.0)


def entropy_functional(disc: Discretization) -> EntropyFunctional:
    return EntropyFunctional(disc.total_entropy, disc.entropy_rate)


def entropy_scale(disc: Discretization, q: np.ndarray) -> float:
    """Normalization for entropy drift: ``max(|S|, sum M J rho c_v)``.

    The second term keeps the measure meaningful when the reference state
    makes the total entropy vanish (isentropic data).
    """
    cv = getattr(getattr(disc.model, "gas", None), "cv", 1.0)
    return max(abs(disc.total_entropy(q)), float(np.sum(disc.mass_jac * q[:, 0])) * cv)


def conservation_scale(disc: Discretization, q: np.ndarray) -> np.ndarray:
    """Per-equation normalization ``sum M J |q_k|`` for conservation drift.

    Equations whose data vanish (e.g. a momentum component of planar flow)
    borrow the largest scale so that roundoff is not divided by zero.
    """
    mag = np.sum(disc.mass_jac[:, None] * np.abs(q), axis=0)
    top = float(mag.max())
    return np.where(mag > 1e-12 * top, mag, top) if top > 0 else np.ones_like(mag)


def kinetic_energy(disc: Discretization, q: np.ndarray, dqdt: np.ndarray | None = None):
    """Volume-averaged kinetic energy and, given ``dq/dt``, its exact rate."""
    rho, m = q[:, 0], q[:, 1:4]
    u = m / rho[:, None]
    u2 = np.sum(u * u, axis=1)
    vol = disc.volume()
    ke = float(np.sum(disc.mass_jac * 0.5 * rho * u2)) / vol
    if dqdt is None:
        return ke, None
    rate = np.sum(u * dqdt[:, 1:4], axis=1) - 0.5 * u2 * dqdt[:, 0]
    return ke, float(np.sum(disc.mass_jac * rate)) / vol


def write_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float | tuple
    passed: bool

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.3e} (threshold {self.threshold})"


@dataclass
class Report:
    experiment: str
    summary: dict
    rows: list[dict]
    checks: list[CheckResult]
    files: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.output_dir) / name


# ---------------------------------------------------------------- experiments


def run_freestream(cfg: RunConfig) -> Report:
    """Residual of a uniform state with optimized and with raw analytic metrics."""
    setup = problem_setup(cfg)
    mesh = build_mesh(cfg, setup)
    if cfg.scheme.mode == "burgers":
        uniform = np.array([0.7])
    else:
        c = math.sqrt(setup.gas.gamma * setup.gas.R)
        u = 0.5 * c * np.array([math.cos(math.pi / 4), math.sin(math.pi / 4), 0.0])
        uniform = conserved_from_primitives(np.array(1.0), u, np.array(1.0), setup.gas)
    values = {}
    for label, opt in (("optimized", True), ("raw", False)):
        disc = build_discretization(cfg, mesh, setup, optimize=opt)
        q = np.tile(uniform, (disc.nnodes, 1))
        if mesh.boundary_faces:
            disc.boundary_data = lambda x, t: np.broadcast_to(uniform, x.shape[:-1] + uniform.shape).copy()
        values[label] = float(np.max(np.abs(disc.rhs(q))))
    checks = [CheckResult("freestream optimized", values["optimized"], cfg.checks.freestream_max,
                          values["optimized"] <= cfg.checks.freestream_max)]
    if cfg.checks.raw_freestream_min is not None:
        checks.append(CheckResult("freestream raw metrics", values["raw"], cfg.checks.raw_freestream_min,
                                  values["raw"] > cfg.checks.raw_freestream_min))
    rows = [{"metrics": k, "max_abs_rhs": v, "elements": len(mesh.elements)} for k, v in values.items()]
    path = _out(cfg, "freestream.csv")
    write_csv(path, rows)
    return Report("freestream", {"elements": len(mesh.elements), **values}, rows, checks, [str(path)])


def _time_series(disc: Discretization, q0: np.ndarray, cfg: RunConfig, t0: float = 0.0):
    rows = []
    S0 = disc.total_entropy(q0)
    totals0 = disc.integrals(q0)
    magnitude = conservation_scale(disc, q0)
    scale = entropy_scale(disc, q0)
    is_gas = disc.nvar == 5

    def record(t, q, dqdt, gamma):
        row = {"t": float(t), "dSdt": disc.entropy_rate(q, dqdt), "S": disc.total_entropy(q)}
        row["dS_rel"] = (row["S"] - S0) / scale
        totals = disc.integrals(q)
        row["conservation_rel"] = float(np.max(np.abs(totals - totals0) / magnitude))
        if is_gas:
            row["KE"], row["dKEdt"] = kinetic_energy(disc, q, dqdt)
        row["gamma"] = gamma
        if not np.all(np.isfinite(q)):
            raise FloatingPointError(f"non-finite state at t={t}")
        rows.append(row)

    entropy = entropy_functional(disc) if cfg.time.relaxation else None
    q, t, stats = integrate(disc.rhs, q0, t0, cfg.time, entropy=entropy, callback=record)
    return q, t, stats, rows


def run_simulation(cfg: RunConfig) -> Report:
    """Integrate one configuration and record the entropy/energy time series."""
    setup = problem_setup(cfg)
    mesh = build_mesh(cfg, setup)
    disc = build_discretization(cfg, mesh, setup)
    x = disc.node_coordinates()
    q0 = setup.initial(x)
    start = time.perf_counter()
    q, t, stats, rows = _time_series(disc, q0, cfg)
    wall = time.perf_counter() - start
    summary = {"elements": len(mesh.elements), "nodes": disc.nnodes, "t_end": float(t), "steps": stats.accepted,
               "rejected": stats.rejected, "rhs_evals": stats.rhs_evals, "wall_s": wall,
               "finite": bool(np.all(np.isfinite(q)))}
    if setup.exact is not None:
        summary.update(zip(("L1", "L2", "Linf"), error_norms(disc, q, setup.exact(x, t))))
    checks = _series_checks(cfg, rows)
    checks.append(CheckResult("finite state", 0.0 if summary["finite"] else 1.0, 0.0, summary["finite"]))
    path = _out(cfg, f"{cfg.experiment}_series.csv")
    write_csv(path, rows)
    return Report(cfg.experiment, summary, rows, checks, [str(path)])


def _series_checks(cfg: RunConfig, rows: list[dict]) -> list[CheckResult]:
    checks = []
    rates = np.array([r["dSdt"] for r in rows])
    if cfg.scheme.dissipation or cfg.scheme.viscous_on:
        worst = float(rates.max())
        checks.append(CheckResult("entropy rate sign", worst, cfg.checks.dissipative_rate_max,
                                  worst <= cfg.checks.dissipative_rate_max))
    elif cfg.checks.entropy_rate_max is not None:
        worst = float(np.abs(rates).max())
        checks.append(CheckResult("max |dS/dt|", worst, cfg.checks.entropy_rate_max,
                                  worst <= cfg.checks.entropy_rate_max))
    drift = float(np.max(np.abs([r["dS_rel"] for r in rows])))
    if cfg.checks.relative_entropy_max is not None:
        checks.append(CheckResult("relative entropy change", drift, cfg.checks.relative_entropy_max,
                                  drift <= cfg.checks.relative_entropy_max))
    if cfg.checks.entropy_growth_max is not None:
        growth = float(max(r["dS_rel"] for r in rows))
        checks.append(CheckResult("relative entropy growth", growth, cfg.checks.entropy_growth_max,
                                  growth <= cfg.checks.entropy_growth_max))
    if cfg.checks.unrelaxed_drift_min is not None:
        checks.append(CheckResult("relative entropy drift", drift, cfg.checks.unrelaxed_drift_min,
                                  drift >= cfg.checks.unrelaxed_drift_min))
    if cfg.checks.conservation_max is not None:
        cons = float(np.max([r["conservation_rel"] for r in rows]))
        checks.append(CheckResult("global conservation", cons, cfg.checks.conservation_max,
                                  cons <= cfg.checks.conservation_max))
    return checks


def run_entropy_conservation(cfg: RunConfig) -> Report:
    return run_simulation(dataclasses.replace(cfg, experiment="entropy-test"))


def run_tgv(cfg: RunConfig) -> Report:
    return run_simulation(dataclasses.replace(cfg, experiment="tgv"))


def convergence_rates(errors: list[float]) -> list[float | None]:
    """``log2(e_k / e_{k+1})`` for consecutive nested levels (first entry None)."""
    out = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(math.log2(a / b) if a > 0 and b > 0 else float("nan"))
    return out


def run_convergence(cfg: RunConfig, levels: int | None = None) -> Report:
    """Uniformly nested refinement of the random base mesh; density errors at the final time."""
    levels = levels or cfg.levels
    setup = problem_setup(cfg)
    if setup.exact is None:
        raise InvalidArgument("convergence study needs an exact solution")
    mesh = build_mesh(cfg, setup)
    rows = []
    for level in range(levels):
        if level:
            mesh = refine_uniform(mesh)
        start = time.perf_counter()
        disc = build_discretization(cfg, mesh, setup)
        x = disc.node_coordinates()
        q, t, stats = integrate(disc.rhs, setup.initial(x), 0.0, cfg.time)
        norms = error_norms(disc, q, setup.exact(x, t))
        rows.append({"level": level, "elements": len(mesh.elements), "nodes": disc.nnodes,
                     "L1": norms[0], "L2": norms[1], "Linf": norms[2], "steps": stats.accepted,
                     "wall_s": time.perf_counter() - start})
    for key in ("L1", "L2", "Linf"):
        for row, rate in zip(rows, convergence_rates([r[key] for r in rows])):
            row[f"rate_{key}"] = rate
    checks = []
    if cfg.checks.rate_band is not None and len(rows) > 1:
        lo, hi = cfg.checks.rate_band
        rate = rows[-1]["rate_L2"]
        checks.append(CheckResult("final L2 rate", rate, (lo, hi), lo <= rate <= hi))
    path = _out(cfg, "convergence.csv")
    write_csv(path, rows)
    return Report("converge", {"levels": levels, "final_L2_rate": rows[-1].get("rate_L2")}, rows, checks,
                  [str(path)])


def metrics_report(cfg: RunConfig) -> Report:
    """Per-element discrete metric-identity residuals before and after optimization."""
    setup = problem_setup(cfg)
    mesh = build_mesh(cfg, setup)
    opt = compute_metrics(mesh, optimize=True)
    rows = []
    for e in mesh.elements:
        rows.append({"element": e.id, "level": e.level, "degree": e.degree,
                     "gcl_raw": float(opt.target_residual[e.id]), "gcl_optimized": float(opt.residual[e.id]),
                     "target_change": float(np.max(np.abs(opt.metrics[e.id] - opt.target[e.id]))),
                     "min_jacobian": float(np.min(opt.jac[e.id])), "rhs_sum": float(opt.rhs_sum[e.id])})
    worst = max(r["gcl_optimized"] for r in rows)
    checks = [CheckResult("max optimized GCL residual", worst, cfg.checks.freestream_max,
                          worst <= cfg.checks.freestream_max)]
    path = _out(cfg, "metrics_report.csv")
    write_csv(path, rows)
    mpath = _out(cfg, "mesh_summary.csv")
    mpath.write_text(mesh.summary_csv())
    return Report("metrics-report", {"elements": len(mesh.elements), "max_gcl_optimized": worst,
                                     "max_gcl_raw": max(r["gcl_raw"] for r in rows)}, rows, checks,
                  [str(path), str(mpath)])


def run(cfg: RunConfig) -> Report:
    dispatch = {"run": run_simulation, "entropy-test": run_entropy_conservation, "converge": run_convergence,
                "freestream": run_freestream, "tgv": run_tgv, "metrics-report": metrics_report}
    return dispatch[cfg.experiment](cfg)
