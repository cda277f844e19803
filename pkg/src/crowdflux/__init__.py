"""Finite-volume solver for scalar conservation laws with non-local flux constraints."""

from .config import ScenarioConfig, SweepSpec, load_bundled, load_config, parse_config
from .errors import CFLError, ConfigurationError, DomainError, SnapWarning
from .grid import ConstraintSite, Grid, build_grid, locate_interface, make_site, project_datum, weighted_average
from .model import (
    EfficiencyFunction,
    FluxModel,
    InitialDatum,
    SpeedProfile,
    WeightFunction,
    eval_efficiency,
    eval_flux,
    eval_weight,
    validate_hypotheses,
)
from .observables import SimOutput, bv_norm, convergence_order, evacuation_time, relative_l1_error
from .scheme import SchemeConfig, SimState, StepSignal, cfl_check, godunov_flux, interface_fluxes, run, step

__version__ = "0.1.0"
