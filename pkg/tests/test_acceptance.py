"""Acceptance criteria, one test (and one printed PASS/FAIL line) each.

Reference values and tolerances are pinned below.  Evacuation-time checks
assert the 2% target; the 5% hard bound is reported alongside.  Every sweep
is the full bundled sweep, so each criterion also feeds the invariant audit
(criterion 6) with every step of every run.

Run directly with ``python3 tests/test_acceptance.py`` or through pytest;
either way the criterion lines are printed at the end.
"""

from __future__ import annotations

import filecmp
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from crowdflux import kernels
from crowdflux.cli import main as cli_main
from crowdflux.config import bundled_path, load_bundled
from crowdflux.experiments import (
    CONSERVATION_TOL,
    LINF_TOL,
    run_property_suite,
    run_sweep,
    run_validation,
    simulate,
)

pytestmark = pytest.mark.slow

TARGET = 0.02
HARD = 0.05

FIS_BASE = 19.007
FIS_VARIANTS = {
    "fis_datum06": (12.259, 1.07),
    "fis_datum08": (15.691, 1.03),
    "fis_beta08": (18.586, None),
    "fis_beta09": (18.827, None),
}
ARGMIN_TOL = 0.05
BRAESS_BASELINE = 29.496
BRAESS_MIN, BRAESS_ARGMIN, BRAESS_ARGMIN_TOL = 24.246, -1.72, 0.02
SLOW_MIN, SLOW_ARGMIN, SLOW_ARGMIN_TOL = 20.945, 0.88, 0.02
SLOW_FLAT_BELOW, SLOW_FLAT_SPREAD = -0.8, 0.02
ORDER_RANGE = (0.8, 1.1)
BV_RATIO = 2.0
GODUNOV_TOL, GODUNOV_PAIRS = 1e-10, 10_000

RESULTS: list[str] = []
_tables: dict[str, object] = {}
_audit: dict[str, tuple[float, float]] = {}


def record(cid: str, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {cid} {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def rel(value: float, ref: float) -> float:
    return (value - ref) / ref


def within(value: float, ref: float) -> str:
    r = rel(value, ref)
    band = "target" if abs(r) <= TARGET else ("hard" if abs(r) <= HARD else "outside")
    return f"{value:.4f} vs {ref} ({100 * r:+.2f}%, {band})"


def table(name: str):
    """Full sweep of a bundled scenario, computed once per session."""
    if name not in _tables:
        t = run_sweep(load_bundled(name).sweep_spec())
        _tables[name] = t
        _audit[name] = (
            max(p.linf_violation for p in t.points),
            max(p.conservation_error for p in t.points),
        )
    return _tables[name]


def test_c1_fis_baseline():
    t = table("fis")
    v_min, t_min = t.argmin()
    t1 = t.at(1.0).evacuation_time
    ok = (
        abs(rel(t1, FIS_BASE)) <= TARGET
        and t1 == t_min
        and 0.9 <= v_min <= 1.1
        and t.values.min() == pytest.approx(0.1)
        and t.values.max() == pytest.approx(5.0)
    )
    record("C1", "FIS baseline", ok, f"t(v_max=1) = {within(t1, FIS_BASE)}; sweep argmin v_max={v_min:g} over [0.1, 5]")


def test_c2_fis_variants():
    parts, ok = [], True
    minima = {}
    for name, (ref, ref_arg) in FIS_VARIANTS.items():
        v_min, t_min = table(name).argmin()
        minima[name] = t_min
        ok &= abs(rel(t_min, ref)) <= TARGET
        if ref_arg is not None:
            ok &= abs(v_min - ref_arg) <= ARGMIN_TOL + 1e-9
        parts.append(f"{name} min {within(t_min, ref)} at {v_min:g}")
    base = table("fis").argmin()[1]
    order = minima["fis_datum06"] < minima["fis_datum08"] < base
    beta_order = minima["fis_beta08"] < minima["fis_beta09"] < base
    ok &= order and beta_order
    parts.append(f"ordering 0.6 < 0.8 < 1.0: {order}; beta 0.8 < 0.9 < 1.0: {beta_order}")
    record("C2", "FIS variants", ok, "; ".join(parts))


def test_c2b_fis_corridors():
    base = table("fis").argmin()[1]
    m12 = table("fis_corridor12").argmin()[1]
    m20 = table("fis_corridor20").argmin()[1]
    record(
        "C2b", "FIS corridors", base < m12 < m20,
        f"minima [-6,1] {base:.4f} < [-12,1] {m12:.4f} < [-20,1] {m20:.4f}",
    )


def test_c3_braess():
    cfg = load_bundled("braess")
    baseline = simulate(replace(cfg.without_site("obstacle"), sweep=None))
    _audit["braess_baseline"] = (baseline.linf_violation(), baseline.max_relative_conservation_error())
    t_base = baseline.evacuation_time
    t = table("braess")
    d_min, t_min = t.argmin()
    window = [p for p in t.points if -1.8 - 1e-9 <= p.value <= -1.72 + 1e-9]
    beats = all(p.evacuation_time < t_base for p in window)
    ok = (
        abs(rel(t_base, BRAESS_BASELINE)) <= TARGET
        and abs(rel(t_min, BRAESS_MIN)) <= TARGET
        and abs(d_min - BRAESS_ARGMIN) <= BRAESS_ARGMIN_TOL + 1e-9
        and len(window) == 9
        and beats
        and len(t.points) == 190
    )
    record(
        "C3", "Braess", ok,
        f"baseline {within(t_base, BRAESS_BASELINE)}; min {within(t_min, BRAESS_MIN)} at d={d_min:g}; "
        f"all {len(window)} points in [-1.8,-1.72] beat baseline: {beats}",
    )


def test_c4_slow_zone():
    lam = table("slowzone_lambda")
    l_min, t_min = lam.argmin()
    lam_ok = abs(rel(t_min, SLOW_MIN)) <= TARGET and abs(l_min - SLOW_ARGMIN) <= SLOW_ARGMIN_TOL + 1e-9

    d = table("slowzone_d")
    flat = d.times[d.values <= SLOW_FLAT_BELOW + 1e-9]
    near = d.times[d.values > SLOW_FLAT_BELOW + 1e-9]
    spread = (flat.max() - flat.min()) / flat.min()
    # "increasing toward the exit": nothing beyond -0.8 undercuts the plateau,
    # the evacuation time near the exit clears it by more than the flatness band,
    # and d = 0 itself sits above the plateau
    rising = near.min() >= flat.min() and near.max() > flat.max() * (1 + SLOW_FLAT_SPREAD) and d.times[-1] > flat.max()
    d_ok = spread < SLOW_FLAT_SPREAD and rising

    v = table("slowzone_vmax")
    v_min, _ = v.argmin()
    interior = v.values.min() < v_min < v.values.max()
    record(
        "C4", "slow zone", lam_ok and d_ok and interior,
        f"lambda min {within(t_min, SLOW_MIN)} at {l_min:g}; d plateau spread {100 * spread:.3f}% for d <= -0.8, "
        f"rises to {near.max():.3f} near the exit: {rising}; v_max argmin {v_min:g} interior: {interior}",
    )


def test_c5_self_convergence():
    rep = run_validation()
    _audit["validation"] = (rep.linf_violation, 0.0)
    lo, hi = ORDER_RANGE
    ok = (
        rep.cell_counts == (625, 1250, 2500, 5000, 10000)
        and rep.reference_cells == 20000
        and rep.strictly_decreasing
        and lo <= rep.order <= hi
    )
    errs = ", ".join(f"{n}: {e:.3e}" for n, e in zip(rep.cell_counts, rep.errors))
    record("C5", "self-convergence", ok, f"errors [{errs}] strictly decreasing: {rep.strictly_decreasing}; order {rep.order:.4f}")


def test_c6_invariants():
    rng = np.random.default_rng(6)
    a, b = rng.uniform(0, 1, GODUNOV_PAIRS), rng.uniform(0, 1, GODUNOV_PAIRS)
    closed = kernels.godunov_vec(a, b, np.ones(GODUNOV_PAIRS), 1.0, 1.0)
    brute = np.empty(GODUNOV_PAIRS)
    for k in range(GODUNOV_PAIRS):
        s = np.linspace(min(a[k], b[k]), max(a[k], b[k]), 2001)
        g = s * (1 - s)
        if a[k] <= b[k]:
            brute[k] = g.min()
        else:
            # the search grid can straddle the vertex, so include it explicitly
            brute[k] = 0.25 if b[k] <= 0.5 <= a[k] else g.max()
    godunov_err = float(np.abs(closed - brute).max())

    suite = run_property_suite(seed=0)
    checks = {c["name"]: c for c in suite["checks"]}
    n_sig = len(checks["signal_stability"]["detail"]["pairs"])
    n_mon = len(checks["monotone_comparison"]["detail"]["pairs"])
    bv_ratio = checks["bv_refinement"]["detail"]["ratio"]

    # every run performed by the other criteria (this runs last in file order)
    for name in ("fis", "braess", "slowzone_lambda", "slowzone_d", "slowzone_vmax", *FIS_VARIANTS,
                 "fis_corridor12", "fis_corridor20"):
        table(name)
    linf = max(v[0] for v in _audit.values())
    cons = max(v[1] for v in _audit.values())
    for c in ("linf_bounds", "conservation"):
        for r in checks[c]["detail"]["runs"]:
            linf = max(linf, r["linf_violation"])
            cons = max(cons, r["conservation_error"])

    ok = (
        linf <= LINF_TOL
        and cons <= CONSERVATION_TOL
        and godunov_err <= GODUNOV_TOL
        and checks["signal_stability"]["passed"] and n_sig == 10
        and checks["signal_stability_identical"]["passed"]
        and checks["monotone_comparison"]["passed"] and n_mon == 10
        and bv_ratio <= BV_RATIO
    )
    record(
        "C6", "invariants", ok,
        f"Linf excursion {linf:.2e} (<= {LINF_TOL:g}) over {len(_audit)} run groups; conservation {cons:.2e} "
        f"(<= {CONSERVATION_TOL:g}); Godunov vs brute force {godunov_err:.1e} on {GODUNOV_PAIRS} pairs; "
        f"signal stability {n_sig}/10; monotone comparison {n_mon}/10; BV ratio {bv_ratio:.3f}",
    )


def _cli_outputs(tmp: Path, workers: int) -> Path:
    out = tmp / f"w{workers}"
    sweep_cfg = tmp / "braess_small.cfg"
    if not sweep_cfg.exists():
        import json

        d = json.loads(bundled_path("braess").read_text())
        d["sweep"] = {"parameter": "obstacle_d", "start": -1.80, "stop": -1.65, "step": 0.01}
        sweep_cfg.write_text(json.dumps(d))
    assert cli_main(["sweep", "--config", str(sweep_cfg), "--out", str(out / "sweep"), "--workers", str(workers)]) == 0
    assert cli_main(["sweep", "--config", "slowzone_lambda", "--out", str(out / "lambda"), "--workers", str(workers)]) == 0
    assert cli_main(["run", "--config", "fis", "--out", str(out / "run")]) == 0
    return out


def test_c7_determinism(tmp_path):
    one, eight = _cli_outputs(tmp_path, 1), _cli_outputs(tmp_path, 8)
    files = sorted(p.relative_to(one) for p in one.rglob("*") if p.suffix in (".csv", ".json"))
    same = [filecmp.cmp(one / f, eight / f, shallow=False) for f in files]
    record("C7", "determinism", len(files) >= 8 and all(same), f"{sum(same)}/{len(files)} output files byte-identical (workers 1 vs 8)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
