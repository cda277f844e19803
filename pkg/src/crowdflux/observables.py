"""Quantities derived from completed runs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass
class SimOutput:
    """Recorded history of one run.

    ``times``, ``q_history`` (one column per site), ``exit_trace`` and
    ``mass_history`` have one entry per recorded time level.  The step
    diagnostics (``rho_min_history``, ``rho_max_history``,
    ``conservation_error``) have one entry per update performed, i.e. one
    fewer.  ``mass_history`` is the mass upstream of the exit site;
    ``conservation_error`` is the absolute residual of the total-mass
    balance over the whole domain.
    """

    times: np.ndarray
    q_history: np.ndarray
    exit_trace: np.ndarray
    mass_history: np.ndarray
    snapshots: dict[float, np.ndarray] = field(default_factory=dict)
    evacuation_time: float | None = None
    rho_min_history: np.ndarray = field(default_factory=lambda: np.empty(0))
    rho_max_history: np.ndarray = field(default_factory=lambda: np.empty(0))
    conservation_error: np.ndarray = field(default_factory=lambda: np.empty(0))
    initial_mass: float = 0.0
    final_state: object = None
    dx: float = 0.0
    dt: float = 0.0
    threshold: float = 1e-3
    centers: np.ndarray | None = None
    site_labels: tuple[str, ...] = ()

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def linf_violation(self, rho_max: float = 1.0) -> float:
        """Largest excursion below 0 or above ``rho_max`` over all steps."""
        if self.rho_min_history.size == 0:
            return 0.0
        return float(max(0.0, -self.rho_min_history.min(), self.rho_max_history.max() - rho_max))

    def max_relative_conservation_error(self) -> float:
        if self.conservation_error.size == 0:
            return 0.0
        scale = self.initial_mass if self.initial_mass > 0.0 else 1.0
        return float(np.abs(self.conservation_error).max() / scale)


def evacuation_time(output: SimOutput, threshold: float | None = None) -> float | None:
    """First recorded time at which the mass upstream of the exit is <= threshold."""
    threshold = output.threshold if threshold is None else threshold
    hits = np.nonzero(output.mass_history <= threshold)[0]
    return float(output.times[hits[0]]) if hits.size else None


def sample_reference(reference: np.ndarray, n_coarse: int) -> np.ndarray:
    """Fine-grid values at the coarse cell centres.

    For an odd refinement ratio a coarse centre is a fine centre; for an even
    one it falls on a fine interface and the two neighbouring cells are
    averaged (linear interpolation between their centres).
    """
    reference = np.asarray(reference, dtype=float)
    n_fine = reference.size
    if n_coarse < 1 or n_fine % n_coarse:
        raise ConfigurationError(f"fine grid ({n_fine}) is not an integral refinement of {n_coarse}")
    r = n_fine // n_coarse
    blocks = reference.reshape(n_coarse, r)
    if r % 2:
        return blocks[:, r // 2].copy()
    return 0.5 * (blocks[:, r // 2 - 1] + blocks[:, r // 2])


def relative_l1_error(reference: np.ndarray, coarse: np.ndarray) -> float:
    """``sum |ref(x_j) - rho_j| / sum |ref(x_j)|`` on the coarse cells."""
    coarse = np.asarray(coarse, dtype=float)
    ref = sample_reference(reference, coarse.size)
    denom = np.abs(ref).sum()
    if denom == 0.0:
        raise ValueError("reference vanishes identically")
    return float(np.abs(ref - coarse).sum() / denom)


def convergence_order(errors) -> float:
    """Least-squares slope of log(error) against log(dx); nonpositive errors are dropped."""
    pts = [(float(h), float(e)) for h, e in errors if e > 0.0 and h > 0.0]
    if len(pts) < 2:
        raise ValueError("need at least two refinement levels with positive error")
    h, e = np.log(np.array(pts)).T
    slope, _ = np.polyfit(h, e, 1)
    return float(slope)


def bv_norm(q_history) -> float:
    """Total variation ``sum_n |q^{n+1} - q^n|`` (summed over sites for 2-D input)."""
    q = np.asarray(q_history, dtype=float)
    if q.shape[0] < 2:
        return 0.0
    return float(np.abs(np.diff(q, axis=0)).sum())
