"""Continuous model ingredients: flux, speed multiplier, efficiency, weight, datum.

All types are frozen dataclasses and every evaluation is a pure function of
its arguments, so instances can be shared freely between simulation runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DomainError

_RHO_TOL = 1e-12


@dataclass(frozen=True)
class SpeedProfile:
    """Space-dependent factor multiplying the maximal speed.

    ``uniform`` is identically one.  ``slow_zone`` is
    ``lam + (1 - lam) * k(x)`` where ``k`` is a V-shaped ramp of the given
    half width centred at ``d``: it falls linearly to 0 at ``d`` and is 1
    outside ``[d - half_width, d + half_width]``.
    """

    kind: str = "uniform"
    d: float = 0.0
    lam: float = 1.0
    half_width: float = 0.5

    def __post_init__(self):
        if self.kind not in ("uniform", "slow_zone"):
            raise ConfigurationError(f"unknown speed profile kind {self.kind!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigurationError(f"slow zone factor must lie in [0, 1], got {self.lam}")
        if self.half_width <= 0.0:
            raise ConfigurationError("slow zone half width must be positive")

    @classmethod
    def slow_zone(cls, d: float, lam: float, half_width: float = 0.5) -> "SpeedProfile":
        return cls(kind="slow_zone", d=d, lam=lam, half_width=half_width)

    def k(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            return np.ones_like(x)
        # slope 1/half_width; equals the +-2(x - d) ramps for half_width 0.5
        return np.minimum(np.abs(x - self.d) / self.half_width, 1.0)

    def __call__(self, x):
        if self.kind == "uniform":
            return np.ones_like(np.asarray(x, dtype=float))
        return self.lam + (1.0 - self.lam) * self.k(x)


@dataclass(frozen=True)
class FluxModel:
    """LWR flux ``f(x, rho) = m(x) * v_max * rho * (1 - rho / rho_max)``."""

    v_max: float = 1.0
    rho_max: float = 1.0
    multiplier: SpeedProfile = field(default_factory=SpeedProfile)

    def __post_init__(self):
        if self.v_max <= 0.0:
            raise ConfigurationError(f"v_max must be positive, got {self.v_max}")
        if self.rho_max <= 0.0:
            raise ConfigurationError(f"rho_max must be positive, got {self.rho_max}")

    @property
    def sigma(self) -> float:
        """Maximiser of ``f(x, .)``, independent of ``x``."""
        return 0.5 * self.rho_max

    @property
    def lipschitz(self) -> float:
        """Global bound on ``|df/drho|``; the multiplier never exceeds one."""
        return self.v_max

    def velocity(self, x, rho):
        rho = np.asarray(rho, dtype=float)
        return self.multiplier(x) * self.v_max * (1.0 - rho / self.rho_max)

    def peak(self, x=0.0):
        """``f(x, sigma)``."""
        return eval_flux(self, x, self.sigma)

    def __call__(self, x, rho):
        return eval_flux(self, x, rho)


def eval_flux(model: FluxModel, x, rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < -_RHO_TOL) or np.any(rho > model.rho_max + _RHO_TOL):
        raise DomainError(f"density outside [0, {model.rho_max}]")
    m = model.multiplier(x)
    out = m * model.v_max * rho * (1.0 - rho / model.rho_max)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EfficiencyFunction:
    """Non-increasing map from upstream weighted density to admissible flux.

    ``piecewise_constant`` takes ``len(breakpoints) + 1`` levels, level ``k``
    holding on ``[breakpoints[k-1], breakpoints[k])``.  ``piecewise_linear``
    takes one level per breakpoint and interpolates linearly between the
    knots, constant outside them.  The evaluated value is
    ``amplification * p(beta * clip(xi, 0, 1))``.
    """

    kind: str
    levels: tuple[float, ...]
    breakpoints: tuple[float, ...]
    beta: float = 1.0
    amplification: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        object.__setattr__(self, "breakpoints", tuple(float(v) for v in self.breakpoints))
        nl, nb = len(self.levels), len(self.breakpoints)
        if self.kind == "piecewise_constant":
            if nl != nb + 1:
                raise ConfigurationError(
                    f"piecewise_constant needs len(levels) == len(breakpoints) + 1, got {nl} and {nb}"
                )
        elif self.kind == "piecewise_linear":
            if nl != nb or nb < 1:
                raise ConfigurationError(
                    f"piecewise_linear needs len(levels) == len(breakpoints) >= 1, got {nl} and {nb}"
                )
        else:
            raise ConfigurationError(f"unknown efficiency kind {self.kind!r}")
        if any(b1 <= b0 for b0, b1 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ConfigurationError("efficiency breakpoints must be strictly increasing")
        if any(l1 > l0 for l0, l1 in zip(self.levels, self.levels[1:])):
            raise ConfigurationError("efficiency levels must be non-increasing")
        if self.beta <= 0.0 or self.amplification <= 0.0:
            raise ConfigurationError("beta and amplification must be positive")

    @classmethod
    def piecewise_constant(cls, levels, breakpoints, **kw) -> "EfficiencyFunction":
        return cls("piecewise_constant", tuple(levels), tuple(breakpoints), **kw)

    @classmethod
    def piecewise_linear(cls, p0, p1, xi1, xi2, **kw) -> "EfficiencyFunction":
        """Constant ``p0``, affine ramp on ``[xi1, xi2)``, constant ``p1``."""
        return cls("piecewise_linear", (p0, p1), (xi1, xi2), **kw)

    def scaled(self, beta: float) -> "EfficiencyFunction":
        return replace(self, beta=beta)

    def amplified(self, factor: float) -> "EfficiencyFunction":
        return replace(self, amplification=factor)

    @property
    def max_value(self) -> float:
        return self.amplification * self.levels[0]

    @property
    def min_value(self) -> float:
        return self.amplification * self.levels[-1]

    def __call__(self, xi):
        return eval_efficiency(self, xi)


def eval_efficiency(p: EfficiencyFunction, xi):
    s = p.beta * np.clip(np.asarray(xi, dtype=float), 0.0, 1.0)
    if p.kind == "piecewise_constant":
        idx = np.searchsorted(np.asarray(p.breakpoints), s, side="right")
        out = np.asarray(p.levels)[idx]
    else:
        out = np.interp(s, p.breakpoints, p.levels)
    out = p.amplification * out
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class WeightFunction:
    """Affine ramp supported on ``[anchor - support_width, anchor]``.

    The default peak ``2 / support_width`` normalises the integral to one;
    ``peak`` can be overridden to build deliberately unnormalised weights.
    """

    support_width: float = 1.0
    anchor: float = 0.0
    peak: float | None = None

    def __post_init__(self):
        if self.support_width <= 0.0:
            raise ConfigurationError("weight support width must be positive")
        if self.peak is not None and self.peak < 0.0:
            raise ConfigurationError("weight peak must be non-negative")

    @property
    def height(self) -> float:
        return 2.0 / self.support_width if self.peak is None else self.peak

    @property
    def left(self) -> float:
        return self.anchor - self.support_width

    def moved(self, anchor: float) -> "WeightFunction":
        return replace(self, anchor=anchor)

    def __call__(self, x):
        return eval_weight(self, x)


def eval_weight(w: WeightFunction, x):
    x = np.asarray(x, dtype=float)
    inside = (x >= w.left) & (x <= w.anchor)
    out = np.where(inside, w.height * (x - w.left) / w.support_width, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class InitialDatum:
    """Piecewise-constant datum, a sorted tuple of disjoint ``(left, right, level)``."""

    blocks: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        blocks = tuple((float(a), float(b), float(c)) for a, b, c in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        for left, right, level in blocks:
            if right <= left:
                raise ConfigurationError(f"datum block [{left}, {right}] is empty or reversed")
            if level < 0.0:
                raise ConfigurationError(f"datum level {level} is negative")
        for (_, r0, _), (l1, _, _) in zip(blocks, blocks[1:]):
            if l1 < r0:
                raise ConfigurationError("datum blocks must be sorted and disjoint")

    @classmethod
    def block(cls, left: float, right: float, level: float = 1.0) -> "InitialDatum":
        return cls(((left, right, level),))

    @property
    def mass(self) -> float:
        return sum((b - a) * c for a, b, c in self.blocks)

    def scaled(self, factor: float) -> "InitialDatum":
        return InitialDatum(tuple((a, b, c * factor) for a, b, c in self.blocks))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, b, c in self.blocks:
            out = np.where((x >= a) & (x < b), c, out)
        return out


@dataclass
class HypothesisReport:
    """Outcome of the flux (F), weight (W) and efficiency (P) checks."""

    results: dict[str, bool]
    messages: dict[str, list[str]]

    @property
    def ok(self) -> bool:
        return all(self.results.values())

    def failures(self) -> list[str]:
        return [f"({k}) {m}" for k, ms in self.messages.items() for m in ms]


def validate_hypotheses(
    model: FluxModel,
    p: EfficiencyFunction,
    w: WeightFunction,
    x_site: float | None = None,
    n_samples: int = 2001,
) -> HypothesisReport:
    """Sample-based check of the well-posedness hypotheses.

    ``x_site`` is where ``p`` is compared against the flux peak; it defaults
    to the weight anchor.
    """
    msgs: dict[str, list[str]] = {"F": [], "W": [], "P": []}
    x_site = w.anchor if x_site is None else x_site

    # (F): f(0) = f(R) = 0 and f'(rho)(sigma - rho) > 0 away from sigma
    rho = np.linspace(0.0, model.rho_max, n_samples)
    f = eval_flux(model, x_site, rho)
    if abs(f[0]) > 1e-14 or abs(f[-1]) > 1e-14:
        msgs["F"].append("flux does not vanish at both endpoints")
    if np.any(f < -1e-14):
        msgs["F"].append("flux is negative somewhere on [0, rho_max]")
    mid = 0.5 * (rho[1:] + rho[:-1])
    slope = np.diff(f) / np.diff(rho)
    away = np.abs(mid - model.sigma) > 1.5 * model.rho_max / (n_samples - 1)
    if np.any(slope[away] * (model.sigma - mid[away]) <= 0.0):
        msgs["F"].append("flux is not bell-shaped around sigma")

    # (W): nonnegative, nondecreasing on the support, unit mass
    xs = np.linspace(w.left, w.anchor, n_samples)
    wv = eval_weight(w, xs)
    if np.any(wv < 0.0):
        msgs["W"].append("weight is negative")
    if np.any(np.diff(wv) < -1e-14):
        msgs["W"].append("weight is not nondecreasing")
    centres = 0.5 * (xs[1:] + xs[:-1])
    integral = float(np.sum(eval_weight(w, centres)) * (xs[1] - xs[0]))
    if abs(integral - 1.0) > 1e-9:
        msgs["W"].append(f"weight integrates to {integral:.12g}, not 1")

    # (P): 0 < p <= f(sigma), non-increasing
    xi = np.linspace(0.0, 1.0, n_samples)
    pv = eval_efficiency(p, xi)
    fs = model.peak(x_site)
    if np.any(pv <= 0.0):
        msgs["P"].append("efficiency is not strictly positive")
    if np.any(pv > fs + 1e-14):
        msgs["P"].append(f"efficiency reaches {pv.max():.6g}, above f(sigma) = {fs:.6g}")
    if np.any(np.diff(pv) > 1e-14):
        msgs["P"].append("efficiency is not non-increasing")

    return HypothesisReport({k: not v for k, v in msgs.items()}, msgs)
