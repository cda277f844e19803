"""Scenario files: JSON documents validated against ``scenario.schema.json``.

Bundled scenarios (one per experiment) ship in ``crowdflux/configs`` with a
``.cfg`` suffix; the content is plain JSON.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigurationError
from .grid import Grid, build_grid, make_site
from .model import (
    EfficiencyFunction,
    FluxModel,
    InitialDatum,
    SpeedProfile,
    WeightFunction,
    validate_hypotheses,
)
from .scheme import SchemeConfig, cfl_check

SWEEP_PARAMETERS = ("v_max", "obstacle_d", "lambda", "beta", "datum_variant", "slowzone_d")


@dataclass(frozen=True)
class SiteSpec:
    position: float
    efficiency: EfficiencyFunction
    support_width: float = 1.0
    peak: float | None = None
    label: str = ""


@dataclass(frozen=True)
class SweepSpec:
    """One sweep axis: a regular range plus optional finer windows and extra points.

    ``datum_variant`` values are factors applied to the base datum levels.
    """

    parameter: str
    start: float
    stop: float
    step: float
    refine: tuple[tuple[float, float, float], ...] = ()
    extra: tuple[float, ...] = ()
    base: "ScenarioConfig | None" = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMETERS:
            raise ConfigurationError(f"unknown sweep parameter {self.parameter!r}")
        for a, b, h in ((self.start, self.stop, self.step), *self.refine):
            if h <= 0.0 or a > b:
                raise ConfigurationError(f"bad sweep range start={a} stop={b} step={h}")
        object.__setattr__(self, "refine", tuple(tuple(float(v) for v in r) for r in self.refine))
        object.__setattr__(self, "extra", tuple(float(v) for v in self.extra))

    def points(self) -> np.ndarray:
        pts = []
        for a, b, h in ((self.start, self.stop, self.step), *self.refine):
            n = int(np.floor((b - a) / h + 1e-9))
            pts.extend(a + k * h for k in range(n + 1))
        pts.extend(self.extra)
        # rounding kills float noise from a + k*h; 12 decimals is far below any step used
        return np.unique(np.round(np.array(pts, dtype=float), 12))


@dataclass(frozen=True)
class ConvergenceSpec:
    cell_counts: tuple[int, ...]
    dt_over_dx: float
    t_eval: float


@dataclass(frozen=True)
class Scenario:
    """A configuration turned into solver objects."""

    grid: Grid
    model: FluxModel
    scheme: SchemeConfig
    datum: InitialDatum


@dataclass(frozen=True)
class ScenarioConfig:
    x_left: float
    x_right: float
    dx: float
    dt: float
    v_max: float
    sites: tuple[SiteSpec, ...]
    datum: InitialDatum
    t_end: float
    name: str = ""
    rho_max: float = 1.0
    slow_zone: SpeedProfile | None = None
    evac_threshold: float = 1e-3
    snapshot_times: tuple[float, ...] = ()
    output_dir: str = "out"
    sweep: SweepSpec | None = None
    convergence: ConvergenceSpec | None = None

    # ------------------------------------------------------------ building

    @property
    def exit_index(self) -> int:
        for k, s in enumerate(self.sites):
            if s.label == "exit":
                return k
        return 0

    def model(self) -> FluxModel:
        return FluxModel(self.v_max, self.rho_max, self.slow_zone or SpeedProfile())

    def build(self) -> Scenario:
        grid = build_grid(self.x_left, self.x_right, self.dx)
        sites = [
            make_site(grid, s.position, s.efficiency, WeightFunction(s.support_width, peak=s.peak), s.label)
            for s in self.sites
        ]
        scheme = SchemeConfig(
            dt=self.dt,
            t_end=self.t_end,
            sites=tuple(sites),
            exit_site=self.exit_index,
            threshold=self.evac_threshold,
            snapshot_times=self.snapshot_times,
        )
        return Scenario(grid, self.model(), scheme, self.datum)

    def with_param(self, parameter: str, value: float) -> "ScenarioConfig":
        """Copy with one sweep parameter set to ``value``."""
        value = float(value)
        if parameter == "v_max":
            return replace(self, v_max=value)
        if parameter == "obstacle_d":
            k = self._site_index("obstacle")
            return self._replace_site(k, replace(self.sites[k], position=value))
        if parameter == "beta":
            k = self.exit_index
            return self._replace_site(k, replace(self.sites[k], efficiency=self.sites[k].efficiency.scaled(value)))
        if parameter == "datum_variant":
            return replace(self, datum=self.datum.scaled(value))
        if parameter in ("lambda", "slowzone_d"):
            if self.slow_zone is None:
                raise ConfigurationError(f"sweep over {parameter} needs a slow zone")
            key = "lam" if parameter == "lambda" else "d"
            return replace(self, slow_zone=replace(self.slow_zone, **{key: value}))
        raise ConfigurationError(f"unknown sweep parameter {parameter!r}")

    def sweep_spec(self) -> SweepSpec:
        """The sweep axis with this config (minus its sweep) attached as the base."""
        if self.sweep is None:
            raise ConfigurationError(f"scenario {self.name!r} defines no sweep")
        return replace(self.sweep, base=replace(self, sweep=None))

    def without_site(self, label: str) -> "ScenarioConfig":
        k = self._site_index(label)
        return replace(self, sites=self.sites[:k] + self.sites[k + 1 :])

    def _site_index(self, label: str) -> int:
        for k, s in enumerate(self.sites):
            if s.label == label:
                return k
        raise ConfigurationError(f"no site labelled {label!r}")

    def _replace_site(self, k: int, site: SiteSpec) -> "ScenarioConfig":
        return replace(self, sites=self.sites[:k] + (site,) + self.sites[k + 1 :])

    # ------------------------------------------------------------ serialisation

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "domain": {"x_left": self.x_left, "x_right": self.x_right},
            "dx": self.dx,
            "dt": self.dt,
            "flux": {"v_max": self.v_max, "rho_max": self.rho_max, "slow_zone": None},
            "sites": [
                {
                    "label": s.label,
                    "position": s.position,
                    "efficiency": {
                        "kind": s.efficiency.kind,
                        "levels": list(s.efficiency.levels),
                        "breakpoints": list(s.efficiency.breakpoints),
                        "beta": s.efficiency.beta,
                        "amplification": s.efficiency.amplification,
                    },
                    "weight": {"support_width": s.support_width, "peak": s.peak},
                }
                for s in self.sites
            ],
            "datum": [{"left": a, "right": b, "level": c} for a, b, c in self.datum.blocks],
            "t_end": self.t_end,
            "evac_threshold": self.evac_threshold,
            "snapshot_times": list(self.snapshot_times),
            "output_dir": self.output_dir,
        }
        if self.slow_zone is not None:
            sz = self.slow_zone
            d["flux"]["slow_zone"] = {"d": sz.d, "lambda": sz.lam, "half_width": sz.half_width}
        if self.sweep is not None:
            sw = self.sweep
            d["sweep"] = {
                "parameter": sw.parameter,
                "start": sw.start,
                "stop": sw.stop,
                "step": sw.step,
                "refine": [{"start": a, "stop": b, "step": h} for a, b, h in sw.refine],
                "extra": list(sw.extra),
            }
        if self.convergence is not None:
            c = self.convergence
            d["convergence"] = {
                "cell_counts": list(c.cell_counts),
                "dt_over_dx": c.dt_over_dx,
                "t_eval": c.t_eval,
            }
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        """Build from an already schema-valid dict; semantic checks are separate."""
        flux = data["flux"]
        sz = flux.get("slow_zone")
        sites = []
        for s in data["sites"]:
            e = s["efficiency"]
            w = s.get("weight") or {}
            eff = EfficiencyFunction(
                e["kind"],
                tuple(e["levels"]),
                tuple(e["breakpoints"]),
                beta=float(e.get("beta", 1.0)),
                amplification=float(e.get("amplification", 1.0)),
            )
            sites.append(
                SiteSpec(
                    float(s["position"]),
                    eff,
                    float(w.get("support_width", 1.0)),
                    None if w.get("peak") is None else float(w["peak"]),
                    s.get("label", ""),
                )
            )
        sweep = None
        if data.get("sweep"):
            sw = data["sweep"]
            sweep = SweepSpec(
                sw["parameter"],
                float(sw["start"]),
                float(sw["stop"]),
                float(sw["step"]),
                tuple((r["start"], r["stop"], r["step"]) for r in sw.get("refine", [])),
                tuple(sw.get("extra", [])),
            )
        conv = None
        if data.get("convergence"):
            c = data["convergence"]
            conv = ConvergenceSpec(tuple(int(n) for n in c["cell_counts"]), float(c["dt_over_dx"]), float(c["t_eval"]))
        return cls(
            x_left=float(data["domain"]["x_left"]),
            x_right=float(data["domain"]["x_right"]),
            dx=float(data["dx"]),
            dt=float(data["dt"]),
            v_max=float(flux["v_max"]),
            rho_max=float(flux.get("rho_max", 1.0)),
            slow_zone=None
            if sz is None
            else SpeedProfile.slow_zone(float(sz["d"]), float(sz["lambda"]), float(sz.get("half_width", 0.5))),
            sites=tuple(sites),
            datum=InitialDatum(tuple((b["left"], b["right"], b["level"]) for b in data["datum"])),
            t_end=float(data["t_end"]),
            name=data.get("name", ""),
            evac_threshold=float(data.get("evac_threshold", 1e-3)),
            snapshot_times=tuple(float(t) for t in data.get("snapshot_times", [])),
            output_dir=data.get("output_dir", "out"),
            sweep=sweep,
            convergence=conv,
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def schema() -> dict:
    return json.loads(resources.files("crowdflux").joinpath("scenario.schema.json").read_text())


def _fmt_path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def semantic_issues(cfg: ScenarioConfig) -> list[tuple[str, str]]:
    """Checks that need more than the schema: mesh, positions, CFL, hypotheses."""
    issues: list[tuple[str, str]] = []
    try:
        grid = build_grid(cfg.x_left, cfg.x_right, cfg.dx)
    except ConfigurationError as exc:
        return [("dx", str(exc))]

    def inside(x):
        return cfg.x_left <= x <= cfg.x_right

    for k, s in enumerate(cfg.sites):
        if not inside(s.position):
            issues.append((f"sites[{k}].position", f"{s.position} outside domain [{cfg.x_left}, {cfg.x_right}]"))
        elif s.position - s.support_width < cfg.x_left - 1e-12:
            issues.append((f"sites[{k}].weight.support_width", "weight support leaves the domain"))
    for k, (a, b, level) in enumerate(cfg.datum.blocks):
        if not (inside(a) and inside(b)):
            issues.append((f"datum[{k}]", f"block [{a}, {b}] outside domain"))
        if level > cfg.rho_max:
            issues.append((f"datum[{k}].level", f"{level} exceeds rho_max={cfg.rho_max}"))
    if cfg.slow_zone is not None and not inside(cfg.slow_zone.d):
        issues.append(("flux.slow_zone.d", f"{cfg.slow_zone.d} outside domain"))

    model = cfg.model()
    v_top = cfg.v_max
    if cfg.sweep is not None and cfg.sweep.parameter == "v_max":
        v_top = max(v_top, float(cfg.sweep.points().max()))
    dt_max = cfl_check(None, grid, replace(model, v_max=v_top))
    if cfg.dt > dt_max * (1 + 1e-12):
        issues.append(
            ("dt", f"CFL violated: Lip(F)*dt/dx = {v_top * cfg.dt / cfg.dx:.6g} > 0.5 at v_max={v_top}")
        )

    for k, s in enumerate(cfg.sites):
        if not inside(s.position):
            continue
        w = WeightFunction(s.support_width, anchor=s.position, peak=s.peak)
        report = validate_hypotheses(model, s.efficiency, w, x_site=s.position)
        for hyp, msgs in report.messages.items():
            for m in msgs:
                path = {"P": "efficiency", "W": "weight", "F": "flux"}[hyp]
                issues.append((f"sites[{k}].{path}", f"hypothesis ({hyp}) fails: {m}"))

    sw = cfg.sweep
    if sw is not None:
        try:
            labels = {s.label for s in cfg.sites}
            if sw.parameter == "obstacle_d":
                if "obstacle" not in labels:
                    issues.append(("sweep.parameter", "obstacle_d sweep needs a site labelled 'obstacle'"))
                pts = sw.points()
                if pts.min() < cfg.x_left or pts.max() > cfg.x_right:
                    issues.append(("sweep", "obstacle positions leave the domain"))
            if sw.parameter in ("lambda", "slowzone_d") and cfg.slow_zone is None:
                issues.append(("sweep.parameter", f"{sw.parameter} sweep needs flux.slow_zone"))
            if sw.parameter == "lambda" and (sw.points().min() < 0 or sw.points().max() > 1):
                issues.append(("sweep", "lambda must stay within [0, 1]"))
        except ConfigurationError as exc:
            issues.append(("sweep", str(exc)))
    return issues


def load_config(data: dict) -> ScenarioConfig:
    """Validate a parsed document and return the config, or raise with every issue found."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigurationError(issues=[(_fmt_path(e.absolute_path), e.message) for e in errors])
    try:
        cfg = ScenarioConfig.from_dict(data)
    except ConfigurationError as exc:
        raise ConfigurationError(issues=[("<model>", str(exc))]) from exc
    issues = semantic_issues(cfg)
    if issues:
        raise ConfigurationError(issues=issues)
    return cfg


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(issues=[("<file>", f"{path}: invalid JSON ({exc})")]) from exc
    return load_config(data)


def bundled_names() -> list[str]:
    root = resources.files("crowdflux").joinpath("configs")
    return sorted(p.name[: -len(".cfg")] for p in root.iterdir() if p.name.endswith(".cfg"))


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("crowdflux").joinpath("configs", f"{name}.cfg")))


def load_bundled(name: str) -> ScenarioConfig:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return parse_config(bundled_path(name))
