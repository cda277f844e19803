"""Constrained Godunov finite-volume scheme.

``step`` advances one time level through the public, array-level API and
is what the property tests drive.  ``run`` hands the whole loop to the
compiled kernel in :mod:`crowdflux.kernels` and records the time series.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CFLError, ConfigurationError, DomainError
from .grid import ConstraintSite, Grid, project_datum, weighted_average
from .model import FluxModel, InitialDatum, eval_flux
from .observables import SimOutput

_CFL_SLACK = 1e-12


@dataclass(frozen=True)
class StepSignal:
    """Right-continuous step function: ``values[k]`` on ``[times[k], times[k+1])``."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.times) != len(self.values) or not self.times:
            raise ConfigurationError("step signal needs matching, nonempty times and values")
        if self.times[0] != 0.0:
            raise ConfigurationError("step signal must start at t = 0")
        if any(t1 <= t0 for t0, t1 in zip(self.times, self.times[1:])):
            raise ConfigurationError("step signal times must be strictly increasing")
        if any(v < 0.0 for v in self.values):
            raise ConfigurationError("step signal values must be nonnegative")

    @classmethod
    def constant(cls, value: float) -> "StepSignal":
        return cls((0.0,), (value,))

    def __call__(self, t):
        idx = np.searchsorted(np.asarray(self.times), np.asarray(t, dtype=float), side="right") - 1
        out = np.asarray(self.values)[np.clip(idx, 0, None)]
        return float(out) if np.ndim(out) == 0 else out

    def sample(self, dt: float, n_levels: int) -> np.ndarray:
        return np.asarray(self(np.arange(n_levels) * dt), dtype=float)


@dataclass(frozen=True)
class SchemeConfig:
    """Time stepping and constraint setup.

    ``prescribed`` switches every site to a fixed signal (one per site);
    otherwise each site computes its bound from the upstream average.
    ``exit_site`` picks the site whose upstream mass defines evacuation.
    """

    dt: float
    t_end: float
    sites: tuple[ConstraintSite, ...] = ()
    prescribed: tuple[StepSignal, ...] | None = None
    exit_site: int = 0
    threshold: float = 1e-3
    stop_at_evacuation: bool = True
    snapshot_times: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        if self.prescribed is not None:
            object.__setattr__(self, "prescribed", tuple(self.prescribed))
            if len(self.prescribed) != len(self.sites):
                raise ConfigurationError("need exactly one prescribed signal per site")
        if self.dt <= 0.0 or self.t_end < 0.0:
            raise ConfigurationError("dt must be positive and t_end nonnegative")
        if self.sites and not 0 <= self.exit_site < len(self.sites):
            raise ConfigurationError(f"exit_site {self.exit_site} out of range")

    @property
    def mode(self) -> int:
        return kernels.MODE_NONLOCAL if self.prescribed is None else kernels.MODE_PRESCRIBED

    @property
    def n_steps(self) -> int:
        return int(np.floor(self.t_end / self.dt + 1e-9))


@dataclass
class SimState:
    step_index: int
    time: float
    rho: np.ndarray
    q_current: np.ndarray = field(default_factory=lambda: np.empty(0))


def cfl_check(config: SchemeConfig, grid: Grid, model: FluxModel) -> float:
    """Largest admissible time step ``dx / (2 Lip(F))``."""
    return grid.dx / (2.0 * model.lipschitz)


def ensure_cfl(config: SchemeConfig, grid: Grid, model: FluxModel) -> None:
    dt_max = cfl_check(config, grid, model)
    if config.dt > dt_max * (1.0 + _CFL_SLACK):
        raise CFLError(
            f"CFL violated: Lip(F)*dt/dx = {model.lipschitz * config.dt / grid.dx:.6g} > 0.5 "
            f"(dt={config.dt}, dt_max={dt_max:.6g})"
        )


def _check_sites(config: SchemeConfig, grid: Grid) -> None:
    for k, site in enumerate(config.sites):
        if not 1 <= site.interface_index <= grid.n_cells:
            raise ConfigurationError(f"site {k} interface {site.interface_index} outside grid")
        if not 0 <= site.weight_first_cell < site.interface_index:
            raise ConfigurationError(f"site {k} weight window does not fit the grid")


def godunov_flux(model: FluxModel, x_interface: float, a: float, b: float) -> float:
    """Exact Riemann flux for the concave LWR flux, via its vertex."""
    for v in (a, b):
        if not -1e-12 <= v <= model.rho_max + 1e-12:
            raise DomainError(f"density {v} outside [0, {model.rho_max}]")
    fa = eval_flux(model, x_interface, a)
    fb = eval_flux(model, x_interface, b)
    if a <= b:
        return min(fa, fb)
    if b <= model.sigma <= a:
        return float(model.peak(x_interface))
    return max(fa, fb)


def interface_multipliers(grid: Grid, model: FluxModel) -> np.ndarray:
    return np.asarray(model.multiplier(grid.interfaces), dtype=float)


def constraint_values(rho, time, step_index, config: SchemeConfig, grid: Grid) -> np.ndarray:
    """``q^n`` for every site, from the density (non-local) or the signal."""
    if config.prescribed is not None:
        return np.array([sig(step_index * config.dt) for sig in config.prescribed])
    return np.array([site.efficiency(weighted_average(grid, site, rho)) for site in config.sites])


def initial_state(config: SchemeConfig, grid: Grid, model: FluxModel, rho0) -> SimState:
    ensure_cfl(config, grid, model)
    _check_sites(config, grid)
    rho = np.array(rho0, dtype=float)
    if rho.shape != (grid.n_cells,):
        raise ConfigurationError(f"initial density has shape {rho.shape}, grid has {grid.n_cells} cells")
    return SimState(0, 0.0, rho, constraint_values(rho, 0.0, 0, config, grid))


def interface_fluxes(state: SimState, config: SchemeConfig, grid: Grid, model: FluxModel) -> np.ndarray:
    """Numerical flux at all ``n_cells + 1`` interfaces, clipped at the sites."""
    left, right = kernels.boundary_extended(state.rho)
    flux = kernels.godunov_vec(left, right, interface_multipliers(grid, model), model.v_max, model.rho_max)
    for site, q in zip(config.sites, state.q_current):
        i = site.interface_index
        flux[i] = min(flux[i], q)
    return flux


def step(state: SimState, config: SchemeConfig, grid: Grid, model: FluxModel) -> SimState:
    """One conservative update; ``q`` is frozen during the step and refreshed after."""
    flux = interface_fluxes(state, config, grid, model)
    rho = kernels.flush_tiny(state.rho - (config.dt / grid.dx) * np.diff(flux))
    n = state.step_index + 1
    t = n * config.dt
    return SimState(n, t, rho, constraint_values(rho, t, n, config, grid))


def pack_sites(config: SchemeConfig, grid: Grid) -> dict[str, np.ndarray]:
    """Flatten site data into the padded arrays the kernels consume."""
    ns = len(config.sites)
    width = max((s.interface_index - s.weight_first_cell for s in config.sites), default=1)
    nk = max((len(s.efficiency.levels) for s in config.sites), default=1)
    packed = {
        "iface": np.zeros(ns, dtype=np.int64),
        "jw": np.zeros(ns, dtype=np.int64),
        "wts": np.zeros((ns, width)),
        "kind": np.zeros(ns, dtype=np.int64),
        "levels": np.zeros((ns, nk)),
        "bps": np.zeros((ns, nk)),
        "nbp": np.zeros(ns, dtype=np.int64),
        "beta": np.ones(ns),
        "amp": np.ones(ns),
    }
    for k, site in enumerate(config.sites):
        eff = site.efficiency
        w = site.cell_weights(grid)
        packed["iface"][k] = site.interface_index
        packed["jw"][k] = site.weight_first_cell
        packed["wts"][k, : w.size] = w
        packed["kind"][k] = kernels.KIND_CONSTANT if eff.kind == "piecewise_constant" else kernels.KIND_LINEAR
        packed["levels"][k, : len(eff.levels)] = eff.levels
        packed["bps"][k, : len(eff.breakpoints)] = eff.breakpoints
        packed["nbp"][k] = len(eff.breakpoints)
        packed["beta"][k] = eff.beta
        packed["amp"][k] = eff.amplification
    return packed


def run(
    config: SchemeConfig,
    grid: Grid,
    model: FluxModel,
    datum: InitialDatum | np.ndarray,
    kernel=None,
) -> SimOutput:
    """Iterate to ``t_end``, or until evacuation once every snapshot is taken.

    ``datum`` is either an :class:`InitialDatum` (projected onto the grid) or
    a ready array of cell averages.  ``kernel`` overrides the default loop
    implementation.
    """
    if not config.sites:
        raise ConfigurationError("at least one constraint site (the exit) is required")
    rho0 = project_datum(grid, datum) if isinstance(datum, InitialDatum) else np.asarray(datum, dtype=float)
    state = initial_state(config, grid, model, rho0)
    nmax = config.n_steps
    packed = pack_sites(config, grid)

    # frames are taken at the level nearest each requested time
    snap_req = [t for t in config.snapshot_times if int(round(t / config.dt)) <= nmax]
    snap_steps = np.array(sorted(int(round(t / config.dt)) for t in snap_req), dtype=np.int64)
    if config.prescribed is not None:
        q_table = np.stack([sig.sample(config.dt, nmax + 1) for sig in config.prescribed], axis=1)
    else:
        q_table = np.zeros((1, len(config.sites)))

    kernel = kernel or kernels.advance
    nrec, q_hist, exit_hist, mass_hist, rmin, rmax, cons, snaps, evac_step, rho = kernel(
        state.rho, grid.dx, config.dt, model.v_max, model.rho_max, interface_multipliers(grid, model),
        packed["iface"], packed["jw"], packed["wts"], packed["kind"], packed["levels"],
        packed["bps"], packed["nbp"], packed["beta"], packed["amp"],
        config.mode, q_table, config.exit_site, nmax, config.threshold,
        config.stop_at_evacuation, snap_steps,
    )

    by_step = {int(s): snaps[k] for k, s in enumerate(snap_steps)}
    snapshots = {}
    for t in snap_req:
        s = int(round(t / config.dt))
        if s < nrec:
            snapshots[t] = by_step[s].copy()

    times = np.arange(nrec) * config.dt
    final = SimState(nrec - 1, times[-1], rho, q_hist[-1].copy())
    return SimOutput(
        times=times,
        q_history=q_hist,
        exit_trace=exit_hist,
        mass_history=mass_hist,
        snapshots=snapshots,
        evacuation_time=float(evac_step * config.dt) if evac_step >= 0 else None,
        rho_min_history=rmin,
        rho_max_history=rmax,
        conservation_error=cons,
        initial_mass=float(grid.dx * rho0.sum()),
        final_state=final,
        dx=grid.dx,
        dt=config.dt,
        threshold=config.threshold,
        centers=grid.centers,
        site_labels=tuple(s.label or f"site_{k}" for k, s in enumerate(config.sites)),
    )
