"""Named experiments: configuration defaults, required keys and the paired quantum/kinetic runner."""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    AccuracyWarning,
    ConfigurationError,
    SpatialGrid,
    auto_points,
    merge_config,
    particle_number,
    wigner_phase_grid,
)
from .diagnostics import (
    CheckpointRecord,
    SweepReport,
    assumption9_monitor,
    duhamel_monitor,
    lemma3_check,
)
from .fdll import compute_weight, verify_rows
from .kinetic import PhaseSpaceField, density_curvature, sobolev_norm, vlasov_density, vlasov_step
from .potentials import convolve, make_potential, periodized_kernel
from .quantum import (
    MixedStateSpec,
    build_mixed_state,
    energy,
    gaussian_kernel_state,
    hartree_step,
    multiplication_commutator_trace_norm,
    remainder_operator,
    spatial_density,
    trace_norm,
)
from .transforms import weyl

SCENARIOS = ("fdll-verify", "free-1d", "smooth-1d", "hbar-sweep-1d", "bsweep-1d", "lemma3-3d", "assumption9-1d")

_DYNAMICS = [("run", "hbar_list"), ("run", "T"), ("run", "dt")]
REQUIRED = {
    "fdll-verify": [("potential", "name")],
    "free-1d": _DYNAMICS,
    "smooth-1d": _DYNAMICS + [("potential", "name")],
    "hbar-sweep-1d": _DYNAMICS + [("potential", "name")],
    "bsweep-1d": _DYNAMICS + [("potential", "name")],
    "lemma3-3d": [("run", "hbar_list"), ("grid", "L"), ("grid", "nx"), ("diagnostics", "delta")],
    "assumption9-1d": _DYNAMICS,
}

DEFAULTS = {
    "run": {"kinetic_factor": 0.5, "force_sign": -1, "with_exchange": False, "workers": 1},
    "grid": {"L": 10.0, "nx": "auto", "vmax": 5.0},
    "potential": {},
    "initial": {"profile": "fermi_dirac"},
    "diagnostics": {
        "threshold": 10.0,
        "duhamel_tol": 0.05,
        "assumption_times": 3,
        "radii": [0.5, 1.0, 2.0],
    },
    "output": {"cadence": 5},
}

FDLL_SEPARATIONS = (0.25, 0.5, 1.0, 2.0, 4.0)
POTENTIAL_KEYS = ("a", "mu", "eps", "strength", "width")
PROFILE_KEYS = {
    "fermi_dirac": ("beta", "mu", "x0", "v0"),
    "gaussian": ("sigma_x", "sigma_v", "x0", "v0"),
    "uniform_x": ("sigma_v", "v0"),
}


@dataclass
class ScenarioResult:
    scenario: str
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    figures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


def check_required(scenario: str, cfg: dict) -> None:
    if scenario not in REQUIRED:
        raise ConfigurationError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    missing = [f"[{s}] {k}" for s, k in REQUIRED[scenario] if k not in cfg.get(s, {})]
    if missing:
        raise ConfigurationError(f"scenario {scenario} requires {', '.join(missing)}")


def resolve_config(scenario: str, user_cfg: dict) -> dict:
    check_required(scenario, user_cfg)
    cfg = merge_config(DEFAULTS, user_cfg)
    run = cfg["run"]
    if "hbar_list" in run:
        if not run["hbar_list"] or any(h <= 0 for h in run["hbar_list"]):
            raise ConfigurationError("[run] hbar_list must contain positive values")
    if scenario in ("hbar-sweep-1d", "bsweep-1d", "assumption9-1d") and len(run["hbar_list"]) < 4:
        raise ConfigurationError(f"scenario {scenario} needs at least 4 hbar values")
    if "T" in run and "dt" in run:
        if run["dt"] <= 0 or run["T"] <= 0:
            raise ConfigurationError("[run] T and dt must be positive")
        if run["dt"] > run["T"]:
            raise ConfigurationError(f"[run] dt={run['dt']} exceeds T={run['T']}")
        steps = round(run["T"] / run["dt"])
        if not math.isclose(steps * run["dt"], run["T"], rel_tol=1e-9):
            raise ConfigurationError(f"[run] T={run['T']} is not a multiple of dt={run['dt']}")
    if cfg["output"]["cadence"] < 1:
        raise ConfigurationError("[output] cadence must be >= 1")
    return cfg


def potential_from(cfg: dict):
    p = dict(cfg.get("potential", {}))
    name = p.pop("name", "zero")
    return make_potential(name, **{k: v for k, v in p.items() if k in POTENTIAL_KEYS})


def state_spec_from(cfg: dict) -> MixedStateSpec:
    init = dict(cfg.get("initial", {}))
    profile = init.pop("profile", "fermi_dirac")
    if profile not in PROFILE_KEYS:
        raise ConfigurationError(f"unknown initial profile {profile!r}")
    extra = set(init) - set(PROFILE_KEYS[profile])
    if extra:
        raise ConfigurationError(f"[initial] keys {sorted(extra)} do not apply to profile {profile!r}")
    return MixedStateSpec(profile, tuple(sorted(init.items())))


def grid_for(cfg: dict, hbar: float, dim: int = 1) -> SpatialGrid:
    g = cfg["grid"]
    nx = g.get("nx", "auto")
    if str(nx).strip().lower() == "auto":
        points = auto_points(g["L"], g["vmax"], hbar)
    else:
        try:
            points = int(nx)
        except ValueError:
            raise ConfigurationError(f"[grid] nx must be an integer or 'auto', got {nx!r}") from None
    return SpatialGrid(g["L"], points, dim)


# ---------------------------------------------------------------------------
# Paired quantum / kinetic run
# ---------------------------------------------------------------------------

TRAJECTORY_COLUMNS = (
    "t",
    "distance_over_n",
    "commutator_over_n",
    "remainder_over_n",
    "trace_error",
    "energy",
    "vlasov_mass",
    "min_w",
    "sobolev_h2_4",
    "max_hess_rho",
    "assumption_ratio",
)


@dataclass
class PairedRun:
    hbar: float
    points: int
    n_particles: int
    rows: list
    records: list
    assumption: list
    clipped: float
    warnings: list


def paired_run(cfg: dict, hbar: float, with_potential: bool = True) -> PairedRun:
    """Evolve the quantum state and the kinetic field from the same profile and compare them."""
    run = cfg["run"]
    kf, sign = run["kinetic_factor"], run["force_sign"]
    grid = grid_for(cfg, hbar)
    n = particle_number(hbar, 1)
    pg = wigner_phase_grid(grid, hbar)
    if pg.vmax < cfg["grid"]["vmax"] * (1 - 1e-12):
        raise ConfigurationError(f"grid with {grid.points} nodes resolves |v| <= {pg.vmax:.4g} only; increase nx")
    spec = state_spec_from(cfg)
    V = potential_from(cfg) if with_potential else make_potential("zero")
    kernel = None if V.name == "zero" else periodized_kernel(V, grid, cfg["potential"].get("eps", 0.0) if V.singular_at_zero else 0.0)
    steps = int(round(run["T"] / run["dt"]))
    cadence = cfg["output"]["cadence"]
    checkpoints = sorted(set(range(0, steps + 1, cadence)) | {steps})
    n_assume = cfg["diagnostics"]["assumption_times"]
    assume_at = set(np.unique(np.linspace(0, len(checkpoints) - 1, max(n_assume, 0)).round().astype(int)).tolist()) if n_assume else set()

    caught = []
    with warnings.catch_warnings(record=True) as wlist:
        warnings.simplefilter("always", AccuracyWarning)
        dm = build_mixed_state(spec, grid, hbar, n)
        field0 = PhaseSpaceField(pg, spec.sample(pg))
        f = field0
        e0 = energy(dm, kernel, kf)
        m0 = f.mass
        rows, records, assumption = [], [], []

        def measure(cp_index: int):
            wt = weyl(f, hbar, n)
            U = convolve(kernel, spatial_density(dm, warn=False)) if kernel is not None else np.zeros(grid.shape)
            Ut = convolve(kernel, vlasov_density(f)) if kernel is not None else np.zeros(grid.shape)
            dist = trace_norm(dm.matrix - wt.matrix)
            comm = multiplication_commutator_trace_norm(U - Ut, wt) if kernel is not None else 0.0
            rem = trace_norm(remainder_operator(wt, Ut), "antihermitian") if kernel is not None else 0.0
            ratio = float("nan")
            if cp_index in assume_at:
                samples, _ = assumption9_monitor([wt], math.inf)
                ratio = samples[0].ratio
                assumption.append(samples[0])
            records.append(CheckpointRecord(f.t, dist, comm, rem))
            rows.append(
                {
                    "t": f.t,
                    "distance_over_n": dist / n,
                    "commutator_over_n": comm / n,
                    "remainder_over_n": rem / n,
                    "trace_error": abs(dm.trace / n - 1),
                    "energy": (energy(dm, kernel, kf) - e0) / abs(e0) if e0 else energy(dm, kernel, kf),
                    "vlasov_mass": f.mass / m0 - 1,
                    "min_w": float(np.min(f.values)) / float(np.max(field0.values)),
                    "sobolev_h2_4": sobolev_norm(f, 2, 4),
                    "max_hess_rho": density_curvature(f),
                    "assumption_ratio": ratio,
                }
            )

        cp = 0
        for k in range(steps + 1):
            if k > 0:
                dm = hartree_step(dm, run["dt"], kernel, kf, run["with_exchange"])
                f = vlasov_step(f, run["dt"], kernel, sign)
            if k == checkpoints[cp]:
                measure(cp)
                cp += 1
        caught = sorted({str(w.message) for w in wlist})
    return PairedRun(hbar, grid.points, n, rows, records, assumption, dm.clipped, caught)


def _paired_worker(args):
    cfg, hbar, with_potential = args
    return paired_run(cfg, hbar, with_potential)


def run_sweep(cfg: dict, workers: int = 1) -> tuple[list, SweepReport]:
    hbars = sorted(cfg["run"]["hbar_list"], reverse=True)
    jobs = [(cfg, h, True) for h in hbars]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_paired_worker, jobs))
    else:
        runs = [_paired_worker(j) for j in jobs]
    report = SweepReport()
    tol = cfg["diagnostics"]["duhamel_tol"]
    for r in sorted(runs, key=lambda r: -r.hbar):
        duh, ratios, ok = duhamel_monitor(r.records, r.hbar, tol)
        report.hbars.append(r.hbar)
        report.distance.append(r.rows[-1]["distance_over_n"])
        report.remainder.append(max(row["remainder_over_n"] for row in r.rows))
        report.assumption.append(max((s.ratio for s in r.assumption), default=float("nan")))
        report.prop1_sup.append(max((s.ratio for s in ratios), default=float("nan")))
        report.duhamel_ok.append(ok)
    report.fit()
    return runs, report


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


def _monitor_rows(samples):
    return [s.row() for s in samples]


def scenario_fdll_verify(cfg: dict) -> ScenarioResult:
    V = potential_from(cfg)
    n = cfg["run"].get("d", 3)
    w = compute_weight(V, n)
    rows = verify_rows(w, FDLL_SEPARATIONS)
    res = ScenarioResult("fdll-verify")
    res.tables["fdll_verify"] = (("d", "V", "reconstructed", "rel_error", "gaussian_full", "gaussian_reduced"), rows)
    res.summary = {
        "potential": V.name,
        "params": dict(V.params),
        "dimension": n,
        "calibration": w.c_star,
        "calibration_fit_error": w.validity,
        "literal_to_calibrated_ratio": w.literal_ratio,
        "closed_form_vs_quadrature": w.quadrature_check,
        "max_rel_error": max(r["rel_error"] for r in rows),
    }
    res.verdicts["reconstruction_rel_error_below_1e-6"] = res.summary["max_rel_error"] < 1e-6
    res.figures.append(("fdll_verify.png", "fdll", rows))
    return res


def _single_run(cfg: dict, scenario: str, with_potential: bool) -> ScenarioResult:
    hbar = cfg["run"]["hbar_list"][0]
    r = paired_run(cfg, hbar, with_potential)
    duh, ratios, ok = duhamel_monitor(r.records, hbar, cfg["diagnostics"]["duhamel_tol"])
    res = ScenarioResult(scenario)
    res.tables["trajectory"] = (TRAJECTORY_COLUMNS, r.rows)
    res.tables["duhamel"] = (("t", "lhs", "rhs", "ratio", "flags"), _monitor_rows(duh))
    res.tables["prop1"] = (("t", "lhs", "rhs", "ratio", "flags"), _monitor_rows(ratios))
    res.summary = {
        "hbar": hbar,
        "points": r.points,
        "n_particles": r.n_particles,
        "clipped_mass": r.clipped,
        "terminal_distance_over_n": r.rows[-1]["distance_over_n"],
        "max_distance_over_n": max(row["distance_over_n"] for row in r.rows),
        "max_trace_error": max(row["trace_error"] for row in r.rows),
        "max_vlasov_mass_error": max(abs(row["vlasov_mass"]) for row in r.rows),
        "max_energy_drift": max(abs(row["energy"]) for row in r.rows),
        "warnings": r.warnings,
    }
    if scenario == "free-1d":
        res.verdicts["distance_below_1e-6"] = res.summary["max_distance_over_n"] < 1e-6
    else:
        res.verdicts["duhamel_inequality"] = ok
    res.verdicts["trace_conserved"] = res.summary["max_trace_error"] < 1e-12
    res.verdicts["vlasov_mass_conserved"] = res.summary["max_vlasov_mass_error"] < 1e-12
    res.figures.append(("trajectory.png", "trajectory", r.rows))
    return res


def scenario_free_1d(cfg: dict) -> ScenarioResult:
    return _single_run(cfg, "free-1d", with_potential=False)


def scenario_smooth_1d(cfg: dict) -> ScenarioResult:
    return _single_run(cfg, "smooth-1d", with_potential=True)


def _sweep_result(cfg: dict, scenario: str, workers: int) -> ScenarioResult:
    runs, report = run_sweep(cfg, workers)
    res = ScenarioResult(scenario)
    sweep_rows = []
    for i, h in enumerate(report.hbars):
        sweep_rows.append(
            {
                "hbar": h,
                "points": runs[i].points,
                "distance_over_n": report.distance[i],
                "sup_remainder_over_n": report.remainder[i],
                "assumption_ratio": report.assumption[i],
                "prop1_sup_ratio": report.prop1_sup[i],
                "duhamel_holds": float(report.duhamel_ok[i]),
            }
        )
    res.tables["sweep"] = (
        ("hbar", "points", "distance_over_n", "sup_remainder_over_n", "assumption_ratio", "prop1_sup_ratio", "duhamel_holds"),
        sweep_rows,
    )
    for r in runs:
        res.tables[f"trajectory_hbar_{round(1 / r.hbar)}"] = (TRAJECTORY_COLUMNS, r.rows)
    res.summary = report.to_dict()
    res.summary["warnings"] = sorted({w for r in runs for w in r.warnings})
    res.verdicts["duhamel_inequality"] = all(report.duhamel_ok)
    if scenario == "hbar-sweep-1d":
        slope = report.distance_fit.slope if report.distance_fit else float("nan")
        res.verdicts["distance_slope_in_0.7_1.3"] = 0.7 <= slope <= 1.3
        res.verdicts["prop1_ratio_variation_below_5"] = report.prop1_variation() < 5
    slope_b = report.remainder_fit.slope if report.remainder_fit else float("nan")
    res.verdicts["remainder_slope_in_1.7_2.3"] = 1.7 <= slope_b <= 2.3
    res.figures.append(("sweep.png", "sweep", report))
    return res


def scenario_hbar_sweep(cfg: dict, workers: int = 1) -> ScenarioResult:
    return _sweep_result(cfg, "hbar-sweep-1d", workers)


def scenario_bsweep(cfg: dict, workers: int = 1) -> ScenarioResult:
    return _sweep_result(cfg, "bsweep-1d", workers)


def scenario_lemma3(cfg: dict) -> ScenarioResult:
    hbar = cfg["run"]["hbar_list"][0]
    grid = grid_for(cfg, hbar, 3)
    init = cfg.get("initial", {})
    sx, sv = init.get("sigma_x", 1.2), init.get("sigma_v", 1.2)
    n = max(1, particle_number(hbar, 3))
    dm = gaussian_kernel_state(grid, hbar, n, sx, sv)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyWarning)
        check = lemma3_check(dm, cfg["diagnostics"]["delta"], cfg["diagnostics"]["radii"], [(0.0, 0.0, 0.0), (1.0, 0.0, 0.0)])
    rows = []
    for s in check.samples:
        lab = dict(s.labels)
        rows.append({"r": lab["r"], "z_x": lab["z"][0], "z_y": lab["z"][1], "z_z": lab["z"][2], "lhs": s.lhs, "rhs": s.rhs, "ratio": s.ratio})
    res = ScenarioResult("lemma3-3d")
    res.tables["lemma3"] = (("r", "z_x", "z_y", "z_z", "lhs", "rhs", "ratio"), rows)
    ev = dm.eigenvalues()
    res.summary = {
        "hbar": hbar,
        "points": grid.points,
        "delta": check.delta,
        "fitted_constant": check.constant,
        "ratio_spread": {f"{z[0]:g},{z[1]:g},{z[2]:g}": v for z, v in check.spread.items()},
        "eig_vs_svd_agreement": check.lhs_agreement,
        "min_eigenvalue": float(ev[0]),
        "max_eigenvalue": float(ev[-1]),
    }
    res.verdicts["ratios_finite_and_spread_below_3"] = bool(check.passed)
    res.figures.append(("lemma3.png", "lemma3", rows))
    return res


def translation_invariant_field(cfg: dict, hbar: float) -> PhaseSpaceField:
    grid = grid_for(cfg, hbar)
    pg = wigner_phase_grid(grid, hbar)
    init = dict(cfg.get("initial", {}))
    init["profile"] = "uniform_x"
    spec = state_spec_from({"initial": {k: v for k, v in init.items() if k in ("profile", "sigma_v", "v0")}})
    return PhaseSpaceField(pg, spec.sample(pg))


def assumption_series(cfg: dict, hbar: float):
    """Evolve a translation-invariant kinetic state and quantize it at the output times."""
    run = cfg["run"]
    f = translation_invariant_field(cfg, hbar)
    V = potential_from(cfg)
    grid = f.grid.spatial
    kernel = None if V.name == "zero" else periodized_kernel(V, grid)
    n = particle_number(hbar, 1)
    steps = int(round(run["T"] / run["dt"]))
    times = set(np.unique(np.linspace(0, steps, max(cfg["diagnostics"]["assumption_times"], 1)).round().astype(int)).tolist())
    series = []
    for k in range(steps + 1):
        if k > 0:
            f = vlasov_step(f, run["dt"], kernel, run["force_sign"])
        if k in times:
            series.append(weyl(f, hbar, n))
    return series


def scenario_assumption9(cfg: dict) -> ScenarioResult:
    rows = []
    sups = []
    threshold = cfg["diagnostics"]["threshold"]
    all_ok = True
    for hbar in sorted(cfg["run"]["hbar_list"], reverse=True):
        samples, ok = assumption9_monitor(assumption_series(cfg, hbar), threshold)
        all_ok = all_ok and ok
        sup = max(s.ratio for s in samples)
        sups.append(sup)
        for s in samples:
            rows.append({"hbar": hbar, "t": s.t, "lhs": s.lhs, "rhs": s.rhs, "ratio": s.ratio, "flags": s.flags})
    res = ScenarioResult("assumption9-1d")
    res.tables["assumption9"] = (("hbar", "t", "lhs", "rhs", "ratio", "flags"), rows)
    variation = max(sups) / min(sups) if min(sups) > 0 else math.inf
    res.summary = {"hbar": sorted(cfg["run"]["hbar_list"], reverse=True), "sup_ratio": sups, "variation": variation, "threshold": threshold}
    res.verdicts["sup_ratio_below_threshold"] = all_ok
    res.verdicts["variation_below_2"] = variation < 2
    res.figures.append(("assumption9.png", "assumption9", rows))
    return res


def run_scenario(scenario: str, user_cfg: dict, workers: int | None = None) -> ScenarioResult:
    cfg = resolve_config(scenario, user_cfg)
    workers = cfg["run"]["workers"] if workers is None else workers
    if scenario == "fdll-verify":
        return scenario_fdll_verify(cfg)
    if scenario == "free-1d":
        return scenario_free_1d(cfg)
    if scenario == "smooth-1d":
        return scenario_smooth_1d(cfg)
    if scenario == "hbar-sweep-1d":
        return scenario_hbar_sweep(cfg, workers)
    if scenario == "bsweep-1d":
        return scenario_bsweep(cfg, workers)
    if scenario == "lemma3-3d":
        return scenario_lemma3(cfg)
    return scenario_assumption9(cfg)
