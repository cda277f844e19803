"""Experiment drivers: self-convergence, the evacuation-time sweeps and the property suite.

Every driver takes a :class:`~crowdflux.config.ScenarioConfig` (the bundled
ones by default) and returns plain dataclasses; file output is the CLI's job.
Sweep points run in a process pool when ``workers > 1``; results are always
assembled in sweep-point order, so tables do not depend on the pool size.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ScenarioConfig, SweepSpec, load_bundled
from .errors import CFLError, ConfigurationError, SnapWarning
from .grid import build_grid, make_site, project_datum
from .model import EfficiencyFunction, FluxModel, InitialDatum, WeightFunction
from .observables import (
    SimOutput,
    bv_norm,
    convergence_order,
    relative_l1_error,
)
from .scheme import SchemeConfig, StepSignal, ensure_cfl, initial_state, run, step

__all__ = [
    "SweepSpec",
    "SweepPoint",
    "SweepTable",
    "ConvergenceReport",
    "simulate",
    "run_sweep",
    "run_validation",
    "run_fis",
    "run_braess",
    "run_slowzone",
    "run_property_suite",
]

LINF_TOL = 1e-12
CONSERVATION_TOL = 1e-13


def simulate(cfg: ScenarioConfig, threshold: float | None = None) -> SimOutput:
    if threshold is not None:
        cfg = replace(cfg, evac_threshold=threshold)
    sc = cfg.build()
    return run(sc.scheme, sc.grid, sc.model, sc.datum)


# ------------------------------------------------------------------ sweeps


@dataclass(frozen=True)
class SweepPoint:
    value: float
    evacuation_time: float | None
    linf_violation: float
    conservation_error: float
    bv: float


@dataclass(frozen=True)
class SweepTable:
    parameter: str
    points: tuple[SweepPoint, ...]

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    @property
    def times(self) -> np.ndarray:
        """Evacuation times, NaN where the threshold was never reached."""
        return np.array([np.nan if p.evacuation_time is None else p.evacuation_time for p in self.points])

    def argmin(self) -> tuple[float, float]:
        """(parameter value, evacuation time) at the smallest time; ties go to the first point."""
        t = self.times
        if np.all(np.isnan(t)):
            raise ValueError("no sweep point reached evacuation")
        k = int(np.nanargmin(t))
        return float(self.values[k]), float(t[k])

    def at(self, value: float) -> SweepPoint:
        k = int(np.argmin(np.abs(self.values - value)))
        if abs(self.values[k] - value) > 1e-9:
            raise KeyError(value)
        return self.points[k]


def _sweep_point(job) -> SweepPoint:
    cfg, value, threshold = job
    out = simulate(cfg, threshold)
    return SweepPoint(
        value=float(value),
        evacuation_time=out.evacuation_time,
        linf_violation=out.linf_violation(cfg.rho_max),
        conservation_error=out.max_relative_conservation_error(),
        bv=bv_norm(out.q_history[:, cfg.exit_index]),
    )


def _map(fn, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def sweep_configs(spec: SweepSpec) -> list[tuple[float, ScenarioConfig]]:
    """One config per sweep point, all CFL-checked before anything runs."""
    if spec.base is None:
        raise ConfigurationError("sweep has no base configuration")
    cfgs = []
    for v in spec.points():
        cfg = spec.base.with_param(spec.parameter, float(v))
        sc = cfg.build()
        try:
            ensure_cfl(sc.scheme, sc.grid, sc.model)
        except CFLError as exc:
            raise CFLError(f"sweep point {spec.parameter}={v:g}: {exc}") from None
        cfgs.append((float(v), cfg))
    return cfgs


def run_sweep(spec: SweepSpec, workers: int = 1, threshold: float | None = None) -> SweepTable:
    jobs = [(cfg, v, threshold) for v, cfg in sweep_configs(spec)]
    return SweepTable(spec.parameter, tuple(_map(_sweep_point, jobs, workers)))


# ------------------------------------------------------------ validation


@dataclass
class ConvergenceReport:
    cell_counts: tuple[int, ...]
    dx: tuple[float, ...]
    errors: tuple[float, ...]
    order: float
    t_eval: tuple[float, ...]
    linf_violation: float
    reference_cells: int

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))

    def to_dict(self) -> dict:
        return {
            "reference_cells": self.reference_cells,
            "errors": [
                {"cells": n, "dx": h, "t": t, "relative_l1_error": e}
                for n, h, t, e in zip(self.cell_counts, self.dx, self.t_eval, self.errors)
            ],
            "order": self.order,
            "strictly_decreasing": self.strictly_decreasing,
            "linf_violation": self.linf_violation,
        }


def _level_config(cfg: ScenarioConfig, n_cells: int) -> ScenarioConfig:
    conv = cfg.convergence
    dx = (cfg.x_right - cfg.x_left) / n_cells
    dt = conv.dt_over_dx * dx
    # one extra step so the level nearest to t_eval is always inside the run
    return replace(
        cfg, dx=dx, dt=dt, t_end=conv.t_eval + dt, snapshot_times=(conv.t_eval,), sweep=None, convergence=None
    )


def _validation_level(job):
    cfg, n = job
    out = simulate(cfg)
    t = cfg.snapshot_times[0]
    return n, out.snapshots[t], round(t / cfg.dt) * cfg.dt, out.linf_violation(cfg.rho_max)


def run_validation(cfg: ScenarioConfig | None = None, workers: int = 1) -> ConvergenceReport:
    """Errors of each level against the finest one; the finest is the reference."""
    cfg = cfg or load_bundled("validation")
    if cfg.convergence is None:
        raise ConfigurationError("scenario has no convergence section")
    counts = sorted(cfg.convergence.cell_counts)
    jobs = [(_level_config(cfg, n), n) for n in counts]
    with warnings.catch_warnings():
        # coarse meshes need not contain the exit as an interface
        warnings.simplefilter("ignore", SnapWarning)
        levels = _map(_validation_level, jobs, workers)
    by_n = {n: (rho, t, linf) for n, rho, t, linf in levels}
    ref = by_n[counts[-1]][0]
    coarse = counts[:-1]
    errors = tuple(relative_l1_error(ref, by_n[n][0]) for n in coarse)
    dxs = tuple((cfg.x_right - cfg.x_left) / n for n in coarse)
    return ConvergenceReport(
        cell_counts=tuple(coarse),
        dx=dxs,
        errors=errors,
        order=convergence_order(zip(dxs, errors)),
        t_eval=tuple(float(by_n[n][1]) for n in coarse),
        linf_violation=max(v[2] for v in by_n.values()),
        reference_cells=counts[-1],
    )


# ------------------------------------------------------------ experiments


@dataclass
class FisResult:
    table: SweepTable
    traces: dict[float, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def run_fis(
    spec: SweepSpec | None = None,
    workers: int = 1,
    threshold: float | None = None,
    trace_velocities=(1.0,),
) -> FisResult:
    """Evacuation time against ``v_max``, plus exit-density traces ``(t, rho_exit)``."""
    spec = spec or load_bundled("fis").sweep_spec()
    table = run_sweep(spec, workers, threshold)
    traces = {}
    for v in trace_velocities:
        out = simulate(spec.base.with_param(spec.parameter, v), threshold)
        traces[float(v)] = (out.times, out.exit_trace)
    return FisResult(table, traces)


@dataclass
class BraessResult:
    table: SweepTable
    baseline: float | None
    snapshots: dict[str, dict[float, np.ndarray]]
    centers: np.ndarray


def run_braess(
    spec: SweepSpec | None = None,
    workers: int = 1,
    threshold: float | None = None,
    snapshot_positions=(-1.85, -1.72),
) -> BraessResult:
    """Obstacle-position sweep against the no-obstacle baseline.

    Snapshot frames use the base config's ``snapshot_times``, keyed
    ``"none"`` for the baseline and ``"d=<position>"`` otherwise.
    """
    spec = spec or load_bundled("braess").sweep_spec()
    base = spec.base
    table = run_sweep(spec, workers, threshold)
    plain = base.without_site("obstacle")
    jobs = [plain] + [base.with_param("obstacle_d", d) for d in snapshot_positions]
    outs = _map(_simulate_job, [(c, threshold) for c in jobs], workers)
    keys = ["none"] + [f"d={d:g}" for d in snapshot_positions]
    return BraessResult(
        table=table,
        baseline=outs[0].evacuation_time,
        snapshots={k: o.snapshots for k, o in zip(keys, outs)},
        centers=outs[0].centers,
    )


def _simulate_job(job) -> SimOutput:
    cfg, threshold = job
    return simulate(cfg, threshold)


@dataclass
class SlowZoneResult:
    tables: dict[str, SweepTable]
    snapshots: dict[float, np.ndarray]
    snapshot_centers: np.ndarray
    snapshot_evacuation_time: float | None


def run_slowzone(
    specs: dict[str, SweepSpec] | None = None,
    workers: int = 1,
    threshold: float | None = None,
    snapshot_d: float = -1.72,
    snapshot_lambda: float = 0.88,
    snapshot_dx: float | None = 3.5e-4,
    snapshot_dt: float | None = 7e-5,
) -> SlowZoneResult:
    """The three slow-zone sweeps (keys ``lambda``, ``slowzone_d``, ``v_max``).

    The snapshot run uses the lambda sweep's base with the zone moved to
    ``snapshot_d`` and, by default, a finer mesh.
    """
    if specs is None:
        specs = {
            "lambda": load_bundled("slowzone_lambda").sweep_spec(),
            "slowzone_d": load_bundled("slowzone_d").sweep_spec(),
            "v_max": load_bundled("slowzone_vmax").sweep_spec(),
        }
    tables = {k: run_sweep(s, workers, threshold) for k, s in specs.items()}
    base = next(iter(specs.values())).base
    snap_cfg = base.with_param("slowzone_d", snapshot_d).with_param("lambda", snapshot_lambda)
    if snapshot_dx is not None:
        snap_cfg = replace(snap_cfg, dx=snapshot_dx, dt=snapshot_dt or snap_cfg.dt)
    out = simulate(snap_cfg, threshold)
    return SlowZoneResult(tables, out.snapshots, out.centers, out.evacuation_time)


# ------------------------------------------------------------ properties


def _coarse_setup(dx: float = 0.05, dt: float = 0.02, t_end: float = 20.0):
    """FIS geometry on a coarse mesh with the exit ready for a prescribed signal."""
    grid = build_grid(-6.0, 1.0, dx)
    p = EfficiencyFunction.piecewise_linear(0.24, 0.05, 0.5, 0.9)
    site = make_site(grid, 0.0, p, WeightFunction(1.0), label="exit")
    return grid, FluxModel(v_max=1.0), site, t_end, dt


def _random_signal(rng: np.random.Generator, t_end: float, q_max: float) -> StepSignal:
    k = int(rng.integers(1, 8))
    times = np.sort(rng.uniform(0.0, t_end, size=k))
    return StepSignal((0.0, *times), tuple(rng.uniform(0.0, q_max, size=k + 1)))


def _trajectory(config: SchemeConfig, grid, model, rho0) -> list[np.ndarray]:
    state = initial_state(config, grid, model, rho0)
    frames = [state.rho]
    for _ in range(config.n_steps):
        state = step(state, config, grid, model)
        frames.append(state.rho)
    return frames


def signal_stability(q: StepSignal, q_hat: StepSignal, rho0, setup=None) -> tuple[float, float]:
    """Both sides of ``||rho - rho_hat||_L1(Q) <= 2 T ||q - q_hat||_L1(0,T)``.

    The space-time norm is over the recorded levels ``t^0 .. t^{N-1}``
    (piecewise constant in time), matching ``T = N dt``.
    """
    grid, model, site, t_end, dt = setup or _coarse_setup()
    n = int(np.floor(t_end / dt + 1e-9))
    t = n * dt
    a = _trajectory(SchemeConfig(dt, t, (site,), prescribed=(q,)), grid, model, rho0)
    b = _trajectory(SchemeConfig(dt, t, (site,), prescribed=(q_hat,)), grid, model, rho0)
    lhs = sum(float(np.abs(x - y).sum()) for x, y in zip(a[:n], b[:n])) * grid.dx * dt
    qa, qb = q.sample(dt, n), q_hat.sample(dt, n)
    rhs = 2.0 * t * float(np.abs(qa - qb).sum()) * dt
    return lhs, rhs


def _random_datum(rng: np.random.Generator, grid) -> np.ndarray:
    k = int(rng.integers(1, 4))
    edges = np.sort(rng.uniform(grid.x_left, -0.5, size=2 * k))
    blocks = tuple((edges[2 * i], edges[2 * i + 1], float(rng.uniform(0.05, 1.0))) for i in range(k))
    return project_datum(grid, InitialDatum(blocks))


def _check(name: str, passed: bool, **detail) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def run_property_suite(seed: int = 0, n_pairs: int = 10) -> dict:
    """Randomised checks of the scheme's stability properties plus run audits.

    Returns ``{"seed", "passed", "checks": [{"name", "passed", "detail"}]}``.
    """
    rng = np.random.default_rng(seed)
    setup = _coarse_setup()
    grid, model, site, t_end, dt = setup
    checks = []

    rho0 = project_datum(grid, InitialDatum.block(-5.75, -2.0))
    same = _random_signal(rng, t_end, model.peak())
    lhs, _ = signal_stability(same, same, rho0, setup)
    checks.append(_check("signal_stability_identical", lhs == 0.0, l1_difference=lhs))

    pairs = []
    for _ in range(n_pairs):
        q, qh = _random_signal(rng, t_end, model.peak()), _random_signal(rng, t_end, model.peak())
        lhs, rhs = signal_stability(q, qh, _random_datum(rng, grid), setup)
        pairs.append({"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs})
    checks.append(_check("signal_stability", all(p["holds"] for p in pairs), pairs=pairs))

    comparisons = []
    n = int(np.floor(t_end / dt + 1e-9))
    for _ in range(n_pairs):
        lo = _random_datum(rng, grid)
        hi = np.minimum(lo + rng.uniform(0.0, 0.5) * (rng.uniform(size=lo.size) < 0.5), 1.0)
        cfg = SchemeConfig(dt, n * dt, (site,), prescribed=(_random_signal(rng, t_end, model.peak()),))
        a = _trajectory(cfg, grid, model, lo)
        b = _trajectory(cfg, grid, model, hi)
        worst = max(float((x - y).max()) for x, y in zip(a, b))
        comparisons.append({"max_excess": worst, "holds": worst <= 0.0})
    checks.append(_check("monotone_comparison", all(c["holds"] for c in comparisons), pairs=comparisons))

    fis = replace(load_bundled("fis"), sweep=None, snapshot_times=())
    bv = []
    for f in (1, 2):
        out = simulate(replace(fis, dx=fis.dx / f, dt=fis.dt / f))
        bv.append(bv_norm(out.q_history[:, 0]))
    ratio = max(bv) / min(bv) if min(bv) > 0 else float("inf")
    checks.append(_check("bv_refinement", ratio <= 2.0, bv=bv, ratio=ratio))

    audits = []
    for name, cfg in (
        ("fis", fis),
        ("braess", load_bundled("braess")),
        ("slowzone", load_bundled("slowzone_lambda")),
    ):
        out = simulate(replace(cfg, sweep=None))
        audits.append(
            {
                "scenario": name,
                "linf_violation": out.linf_violation(cfg.rho_max),
                "conservation_error": out.max_relative_conservation_error(),
            }
        )
    checks.append(
        _check("linf_bounds", all(a["linf_violation"] <= LINF_TOL for a in audits), tolerance=LINF_TOL, runs=audits)
    )
    checks.append(
        _check(
            "conservation",
            all(a["conservation_error"] <= CONSERVATION_TOL for a in audits),
            tolerance=CONSERVATION_TOL,
            runs=audits,
        )
    )
    return {"seed": seed, "passed": all(c["passed"] for c in checks), "checks": checks}
