"""Uniform mesh, datum projection and the discrete upstream average.

Indexing: interface ``i`` (``0 <= i <= n_cells``) sits at ``x_left + i*dx``
and cell ``j`` (``0 <= j < n_cells``) spans interfaces ``j`` and ``j + 1``.
A constraint at interface ``i`` therefore has cell ``i - 1`` on its left.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SnapWarning
from .model import EfficiencyFunction, InitialDatum, WeightFunction, eval_weight


@dataclass(frozen=True)
class Grid:
    x_left: float
    x_right: float
    dx: float
    n_cells: int

    @property
    def interfaces(self) -> np.ndarray:
        return self.x_left + np.arange(self.n_cells + 1) * self.dx

    @property
    def centers(self) -> np.ndarray:
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.dx

    def interface_position(self, i: int) -> float:
        return self.x_left + i * self.dx


def build_grid(x_left: float, x_right: float, dx: float) -> Grid:
    if not x_left < x_right:
        raise ConfigurationError(f"empty domain [{x_left}, {x_right}]")
    if dx <= 0.0:
        raise ConfigurationError(f"dx must be positive, got {dx}")
    ratio = (x_right - x_left) / dx
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * ratio:
        raise ConfigurationError(
            f"domain length {x_right - x_left} is not an integral multiple of dx={dx}"
        )
    return Grid(float(x_left), float(x_right), float(dx), n)


def locate_interface(grid: Grid, x: float) -> int:
    """Index of the interface nearest to ``x``; ties go to the smaller index."""
    span = grid.x_right - grid.x_left
    tol = 1e-12 * span
    if x < grid.x_left - tol or x > grid.x_right + tol:
        raise ConfigurationError(f"position {x} outside domain [{grid.x_left}, {grid.x_right}]")
    s = (x - grid.x_left) / grid.dx
    i = int(np.floor(s))
    # round half down, with a little slack so exact multiples of dx stay put
    if s - i > 0.5 + 1e-9:
        i += 1
    return min(max(i, 0), grid.n_cells)


def project_datum(grid: Grid, datum: InitialDatum) -> np.ndarray:
    """Exact cell averages of a piecewise-constant datum.

    Overlaps are divided by the floating-point cell width rather than ``dx``
    so fully covered cells get exactly the block level.
    """
    edges = grid.interfaces
    lo, hi = edges[:-1], edges[1:]
    rho = np.zeros(grid.n_cells)
    for a, b, level in datum.blocks:
        overlap = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
        rho += level * np.minimum(overlap / (hi - lo), 1.0)
    return rho


@dataclass(frozen=True)
class ConstraintSite:
    """A constrained interface with its efficiency and upstream weight.

    ``weight_first_cell`` is the leftmost cell whose centre carries nonzero
    weight; the weighted sum runs over cells ``weight_first_cell`` to
    ``interface_index - 1``.
    """

    interface_index: int
    efficiency: EfficiencyFunction
    weight: WeightFunction
    weight_first_cell: int
    requested_position: float | None = None
    snap_distance: float = 0.0
    label: str = ""

    @property
    def exit_cell(self) -> int:
        return self.interface_index - 1

    def cell_weights(self, grid: Grid) -> np.ndarray:
        """``w(x_j)`` for ``j = weight_first_cell .. interface_index - 1``."""
        j = np.arange(self.weight_first_cell, self.interface_index)
        return eval_weight(self.weight, grid.x_left + (j + 0.5) * grid.dx)


def make_site(
    grid: Grid,
    position: float,
    efficiency: EfficiencyFunction,
    weight: WeightFunction | None = None,
    label: str = "",
) -> ConstraintSite:
    """Snap ``position`` to the mesh and anchor the weight at the snapped interface.

    Warns with :class:`SnapWarning` when the snap distance exceeds ``dx/10``.
    """
    i = locate_interface(grid, position)
    if i == 0:
        raise ConfigurationError(f"constraint at {position} has no cell upstream")
    x_i = grid.interface_position(i)
    snap = abs(x_i - position)
    if snap > grid.dx / 10:
        warnings.warn(
            f"constraint at {position} snapped to interface {x_i} (distance {snap:.3g} > dx/10)",
            SnapWarning,
            stacklevel=2,
        )
    weight = (weight or WeightFunction()).moved(x_i)
    centres = grid.x_left + (np.arange(i) + 0.5) * grid.dx
    nonzero = np.nonzero(eval_weight(weight, centres) > 0.0)[0]
    jw = int(nonzero[0]) if nonzero.size else i - 1
    return ConstraintSite(i, efficiency, weight, jw, float(position), float(snap), label)


def weighted_average(grid: Grid, site: ConstraintSite, rho: np.ndarray) -> float:
    """Midpoint-rule upstream average ``dx * sum_j w(x_j) rho_j``, clipped to [0, 1]."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (grid.n_cells,):
        raise ValueError(f"density must have {grid.n_cells} entries, got {rho.shape}")
    xi = grid.dx * float(np.dot(site.cell_weights(grid), rho[site.weight_first_cell : site.interface_index]))
    return min(max(xi, 0.0), 1.0)
