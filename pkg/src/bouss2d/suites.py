"""Packaged experiment suites behind the `suite` CLI subcommand.

Each suite assembles runs from the solver and diagnostics layers, grades the
outcome against thresholds frozen in its default configuration, and writes a
report directory: report.json with per-case pass/fail and metrics,
resolved_config.json with the exact configuration and its hash, CSV tables
for downstream tools, and timings.json.  Wall-clock timings stay out of
report.json so repeated invocations with a fixed seed reproduce it byte for
byte.
"""

import contextlib
import copy
import csv
import math
import os
import time
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import apply_overrides, config_digest, environment_fingerprint, write_json
from .diagnostics import (
    SweepConfig,
    check_apriori_bounds,
    energy_residual_theta,
    energy_residual_u,
    eta_equivalences,
    gagliardo_nirenberg_check,
    max_principle_probe,
    regularity_sweep,
    twin_run_stability,
)
from .errors import ConfigError, NumericError, UndefinedRatioError
from .initial import generate_initial, random_hs_field, taylor_green_velocity
from .laws import PrimitiveTransform, builtin_law, law_from_config
from .lp import (
    bernstein_check,
    commutator_scaling_report,
    decompose,
    filter_bank,
    lp_sobolev_norm,
    sobolev_norm,
)
from .solver import (
    LawPair,
    ParabolicProblem,
    TimeStepperConfig,
    initial_state,
    run,
    solve_parabolic,
)
from .spectral import (
    Grid,
    ScalarSpectralField,
    VectorSpectralField,
    divergence,
    embed_field,
    l2_norm,
    linf_norm,
    to_spectral,
    zero_field,
)

SUITE_NAMES = (
    "taylor_green",
    "mms_parabolic",
    "energy_audit",
    "lp_scaling",
    "regularity_sweep",
    "twin_stability",
)

_VARYING_LAWS = {
    "kappa": {"kind": "tanh_smooth", "center": 0.0, "rate": 1.0, "lower": 1.0, "upper": 3.0},
    "mu": {"kind": "tanh_smooth", "center": 0.0, "rate": 0.5, "lower": 0.5, "upper": 1.5},
}

_DEFAULTS = {
    "taylor_green": {
        "n": 64,
        "mu": 0.1,
        "amplitude": 1.0,
        "t_end": 1.0,
        "dt": 0.01,
        "scheme": "imex_cn_rk2",
        "snapshot_interval": 0.25,
        "tolerance": 1.0e-6,
        "decay_tolerance": 1.0e-6,
        "divergence_tolerance": 1.0e-12,
    },
    "mms_parabolic": {
        "sizes": [16, 24, 32],
        "t_end": 0.25,
        "dt": 1.0e-4,
        "scheme": "imex_etd_rk3",
        "spatial_tolerance": 1.0e-7,
        "temporal": {
            "n": 32,
            "dts": [4.0e-3, 2.0e-3, 1.0e-3],
            "reference_dt": 1.0e-4,
            "scheme": "imex_cn_rk2",
            "order": 2.0,
            "order_window": 0.3,
        },
    },
    "energy_audit": {
        "n": 64,
        "s_theta": 1.5,
        "s_u": 0.5,
        "norm_theta": 1.0,
        "norm_u": 1.0,
        "seed": 11,
        "beta": 1.0,
        "t_end": 1.0,
        "dt": 1.0e-3,
        "scheme": "imex_cn_rk2",
        "snapshot_interval": 0.125,
        "laws": copy.deepcopy(_VARYING_LAWS),
        "thresholds": {
            "residual_theta": 5.0e-5,
            "residual_u": 1.2e-3,
            "uniform": 1.0e-8,
            "strain_identity": 1.0e-12,
            "dissipation_slack": 1.0e-10,
            "eta": 1.0e-10,
            "overshoot": 1.0e-2,
        },
    },
    "lp_scaling": {
        "field_s": 1.0,
        "field_norm": 1.0,
        "reconstruction": {"sizes": [64, 128], "seeds": [600, 601, 602], "tolerance": 1.0e-10},
        "bernstein": {"n": 64, "count": 10000, "seed": 8000},
        "ratio": {
            "sizes": [64, 128, 256],
            "exponents": [0.5, 1.0, 1.5, 2.0],
            "seeds": [600, 601, 602, 603, 604],
            "window": 0.10,
        },
        "commutator": {
            "pairs": [[0.5, 0.25], [1.2, 0.5], [1.5, 0.75]],
            "base_n": 64,
            "doublings": 2,
            "seeds": [301, 701],
            "field_s": 1.8,
            "window": 0.25,
        },
    },
    "regularity_sweep": {
        "n": 128,
        "t_end": 1.0,
        "dt": "auto",
        "cfl_safety": 0.4,
        "scheme": "imex_cn_rk2",
        "pairs": [
            [1.0, 0.0],
            [2.0, 0.0],
            [1.0, 2.0],
            [3.0, 1.0],
            [1.5, 2.5],
            [1.5, 0.5],
            [2.0, 1.0],
            [1.0, 1.0],
        ],
        "laws": copy.deepcopy(_VARYING_LAWS),
        "norm_theta": 1.0,
        "norm_u": 1.0,
        "beta": 1.0,
        "seed": 0,
        "growth_cap": 10.0,
    },
    "twin_stability": {
        "n": 32,
        "t_end": 0.25,
        "dt": 1.0e-3,
        "scheme": "imex_cn_rk2",
        "s_theta": 1.5,
        "s_u": 0.5,
        "norm_theta": 1.0,
        "norm_u": 1.0,
        "seed": 11,
        "beta": 1.0,
        "laws": copy.deepcopy(_VARYING_LAWS),
        "target": "theta",
        "perturbation_seed": 3,
        "sizes": [1.0e-4, 1.0e-6, 1.0e-8],
        "drift_window": 0.25,
        "proxy_slack": 0.25,
    },
}


@dataclass(frozen=True)
class CaseResult:
    """Outcome of one graded case: the verdict plus the numbers behind it."""

    name: str
    passed: bool
    metrics: dict
    failure: str = ""


@dataclass(frozen=True)
class SuiteResult:
    suite: str
    passed: bool
    cases: tuple
    metrics: dict
    fingerprint: dict
    failure: str = ""


def suite_defaults(name: str) -> dict:
    if name not in _DEFAULTS:
        raise ConfigError(f"unknown suite {name!r} (choose from {SUITE_NAMES})")
    return copy.deepcopy(_DEFAULTS[name])


def resolve_workers(requested: int) -> int:
    """Clamp the requested pool size by the BOUSSINESQ_THREADS environment cap."""
    workers = max(1, int(requested))
    cap = os.environ.get("BOUSSINESQ_THREADS", "").strip()
    if cap:
        try:
            limit = int(cap)
        except ValueError:
            raise ConfigError(f"BOUSSINESQ_THREADS must be an integer, got {cap!r}") from None
        if limit < 1:
            raise ConfigError("BOUSSINESQ_THREADS must be at least 1")
        workers = min(workers, limit)
    return workers


def _pool_map(fn, items, workers: int) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


@contextlib.contextmanager
def _timed(timings: dict, name: str):
    start = time.perf_counter()
    yield
    timings[name] = round(time.perf_counter() - start, 3)


def _reject_unknown_tree(node: Mapping, ref: Mapping, where: str) -> None:
    for key, value in node.items():
        if key not in ref:
            raise ConfigError(f"unknown key '{where}{key}' for this suite")
        if isinstance(value, Mapping) and isinstance(ref[key], Mapping):
            _reject_unknown_tree(value, ref[key], f"{where}{key}.")


def _set_dotted(cfg: dict, path: str, value) -> None:
    keys = [k for k in path.split(".") if k]
    if not keys:
        raise ConfigError(f"override path {path!r} is empty")
    node = cfg
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override '{path}' descends into a non-table value")
    node[keys[-1]] = value


def _law_pair(section: Mapping) -> LawPair:
    a = law_from_config(section["kappa"])
    b = law_from_config(section["mu"])
    return LawPair(a=a, b=b, a_primitive=PrimitiveTransform.build(a))


def _diff_scalar(a: ScalarSpectralField, b: ScalarSpectralField) -> ScalarSpectralField:
    return ScalarSpectralField(a.grid, a.coeffs - b.coeffs)


def _diff_vector(a: VectorSpectralField, b: VectorSpectralField) -> VectorSpectralField:
    return VectorSpectralField(
        tuple(_diff_scalar(x, y) for x, y in zip(a.components, b.components))
    )


def _jsonable(value):
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    return value


# --- taylor_green -----------------------------------------------------------------


def _suite_taylor_green(cfg, workers, out, timings):
    grid = Grid(int(cfg["n"]))
    mu = float(cfg["mu"])
    amp = float(cfg["amplitude"])
    laws = LawPair(
        a=builtin_law("tanh_smooth", {"lower": 1.0, "upper": 1.0}),
        b=builtin_law("tanh_smooth", {"lower": mu, "upper": mu}),
    )
    state = initial_state(zero_field(grid), taylor_green_velocity(grid, amp), laws)
    stepper = TimeStepperConfig(
        t_end=float(cfg["t_end"]),
        dt=float(cfg["dt"]),
        scheme=cfg["scheme"],
        snapshot_interval=float(cfg["snapshot_interval"]),
    )
    with _timed(timings, "run"):
        traj = run(state, stepper)
    if out is not None:
        rundir = out / "run"
        rundir.mkdir(parents=True, exist_ok=True)
        traj.ledger.write_csv(rundir / "ledger.csv")

    rows = []
    err_max, err_at = 0.0, 0.0
    div_max = 0.0
    for t, snap in traj.snapshots:
        exact = taylor_green_velocity(grid, amp * math.exp(-2.0 * mu * t))
        err = linf_norm(_diff_vector(snap.u, exact))
        div = l2_norm(divergence(snap.u))
        rows.append((t, err, div))
        if err >= err_max:
            err_max, err_at = err, t
        div_max = max(div_max, div)

    # the decay check reads every accepted step, not just snapshots
    times = traj.ledger.times
    l2u = traj.ledger.column("l2_u")
    exact_l2 = l2u[0] * np.exp(-2.0 * mu * times)
    decay_dev = float(np.max(np.abs(l2u - exact_l2) / np.maximum(exact_l2, 1e-300)))
    dev_at = float(times[int(np.argmax(np.abs(l2u - exact_l2) / np.maximum(exact_l2, 1e-300)))])

    tol = float(cfg["tolerance"])
    dtol = float(cfg["decay_tolerance"])
    vtol = float(cfg["divergence_tolerance"])
    cases = [
        CaseResult(
            name="velocity_error",
            passed=err_max <= tol,
            metrics={
                "max_error": err_max,
                "final_error": rows[-1][1],
                "tolerance": tol,
                "snapshots": len(rows),
            },
            failure=""
            if err_max <= tol
            else f"max pointwise velocity error {err_max:.3e} exceeds {tol:.1e} at t={err_at:.3f}",
        ),
        CaseResult(
            name="kinetic_energy_decay",
            passed=decay_dev <= dtol,
            metrics={"max_relative_deviation": decay_dev, "tolerance": dtol},
            failure=""
            if decay_dev <= dtol
            else f"L2 velocity decay deviates by {decay_dev:.3e} at t={dev_at:.3f}",
        ),
        CaseResult(
            name="incompressibility",
            passed=div_max <= vtol,
            metrics={"max_divergence": div_max, "tolerance": vtol},
            failure=""
            if div_max <= vtol
            else f"velocity divergence reaches {div_max:.3e}, above {vtol:.1e}",
        ),
    ]
    metrics = {"max_error": err_max, "max_divergence": div_max, "decay_deviation": decay_dev}
    tables = {
        "taylor_green.csv": (("t", "pointwise_error", "divergence_l2"), rows),
    }
    return cases, metrics, tables


# --- mms_parabolic ----------------------------------------------------------------

MMS_KAPPA_BOUNDS = (1.0, 2.0)


def mms_exact(grid: Grid, t: float) -> ScalarSpectralField:
    """psi = sin x1 sin x2 e^{-t}, the manufactured solution."""
    x1, x2 = grid.mesh
    return to_spectral(np.sin(x1) * np.sin(x2) * math.exp(-t), grid)


def mms_velocity(grid: Grid) -> VectorSpectralField:
    x1, x2 = grid.mesh
    return VectorSpectralField(
        (
            to_spectral(np.sin(x1) * np.cos(x2), grid),
            to_spectral(-np.cos(x1) * np.sin(x2), grid),
        ),
        divfree_certified=True,
    )


def mms_kappa(t, x1, x2):
    return 1.5 + 0.5 * np.tanh(np.sin(x1))


def mms_source(t, x1, x2):
    """Forcing that makes psi exact.  The cellular flow is orthogonal to
    grad psi pointwise, so only d_t psi - div(kappa grad psi) contributes:
    f = (2 kappa - 1) psi - (1 - tanh^2(sin x1)) cos^2(x1) sin(x2) e^{-t} / 2."""
    s1 = np.sin(x1)
    th = np.tanh(s1)
    kappa = 1.5 + 0.5 * th
    return math.exp(-t) * (
        (2.0 * kappa - 1.0) * s1 * np.sin(x2)
        - 0.5 * (1.0 - th * th) * np.cos(x1) ** 2 * np.sin(x2)
    )


def _mms_problem(grid: Grid) -> ParabolicProblem:
    return ParabolicProblem(
        psi0=mms_exact(grid, 0.0),
        kappa_bounds=MMS_KAPPA_BOUNDS,
        kappa=mms_kappa,
        velocity=mms_velocity(grid),
        source=mms_source,
    )


def _mms_final_error(n: int, t_end: float, dt: float, scheme: str) -> float:
    grid = Grid(int(n))
    traj = solve_parabolic(_mms_problem(grid), TimeStepperConfig(t_end=t_end, dt=dt, scheme=scheme))
    return linf_norm(_diff_scalar(traj.final, mms_exact(grid, t_end)))


def _suite_mms_parabolic(cfg, workers, out, timings):
    sizes = [int(n) for n in cfg["sizes"]]
    t_end, dt, scheme = float(cfg["t_end"]), float(cfg["dt"]), cfg["scheme"]
    with _timed(timings, "spatial"):
        errors = _pool_map(lambda n: _mms_final_error(n, t_end, dt, scheme), sizes, workers)
    tol = float(cfg["spatial_tolerance"])
    monotone = all(a > b for a, b in zip(errors, errors[1:]))
    spatial_ok = errors[-1] <= tol and monotone
    if spatial_ok:
        spatial_failure = ""
    elif errors[-1] > tol:
        spatial_failure = (
            f"pointwise error {errors[-1]:.3e} at n={sizes[-1]} exceeds {tol:.1e}"
        )
    else:
        k = next(i for i in range(len(errors) - 1) if errors[i] <= errors[i + 1])
        spatial_failure = f"error fails to decrease from n={sizes[k]} to n={sizes[k + 1]}"

    tcfg = cfg["temporal"]
    tn = int(tcfg["n"])
    tscheme = tcfg["scheme"]
    dts = [float(h) for h in tcfg["dts"]]
    with _timed(timings, "temporal"):
        grid = Grid(tn)
        problem = _mms_problem(grid)
        reference = solve_parabolic(
            problem,
            TimeStepperConfig(t_end=t_end, dt=float(tcfg["reference_dt"]), scheme=tscheme),
        ).final
        terrs = _pool_map(
            lambda h: linf_norm(
                _diff_scalar(
                    solve_parabolic(
                        problem, TimeStepperConfig(t_end=t_end, dt=h, scheme=tscheme)
                    ).final,
                    reference,
                )
            ),
            dts,
            workers,
        )
    slope = float(np.polyfit(np.log2(dts), np.log2(terrs), 1)[0])
    order, window = float(tcfg["order"]), float(tcfg["order_window"])
    temporal_ok = abs(slope - order) <= window

    cases = [
        CaseResult(
            name="spatial_convergence",
            passed=spatial_ok,
            metrics={
                "errors": {str(n): e for n, e in zip(sizes, errors)},
                "tolerance": tol,
                "dt": dt,
                "scheme": scheme,
            },
            failure=spatial_failure,
        ),
        CaseResult(
            name="temporal_order",
            passed=temporal_ok,
            metrics={
                "errors": {f"{h:g}": e for h, e in zip(dts, terrs)},
                "measured_order": slope,
                "nominal_order": order,
                "window": window,
                "n": tn,
                "scheme": tscheme,
            },
            failure=""
            if temporal_ok
            else f"measured order {slope:.3f} outside {order:g} +/- {window:g} at n={tn}",
        ),
    ]
    metrics = {"spatial_error": errors[-1], "temporal_order": slope}
    rows = [(n, dt, scheme, "exact", e) for n, e in zip(sizes, errors)]
    rows += [(tn, h, tscheme, f"dt={float(tcfg['reference_dt']):g}", e) for h, e in zip(dts, terrs)]
    tables = {"mms_errors.csv": (("n", "dt", "scheme", "reference", "linf_error"), rows)}
    return cases, metrics, tables


# --- energy_audit -----------------------------------------------------------------


def _suite_energy_audit(cfg, workers, out, timings):
    grid = Grid(int(cfg["n"]))
    laws = _law_pair(cfg["laws"])
    seed = int(cfg["seed"])
    theta = generate_initial(
        {"kind": "random_hs", "s": float(cfg["s_theta"]), "norm": float(cfg["norm_theta"]),
         "unknown": "temperature"},
        grid,
        seed,
    )
    u = generate_initial(
        {"kind": "random_hs", "s": float(cfg["s_u"]), "norm": float(cfg["norm_u"]),
         "unknown": "velocity"},
        grid,
        seed,
    )
    state = initial_state(theta, u, laws, beta=float(cfg["beta"]))
    stepper = TimeStepperConfig(
        t_end=float(cfg["t_end"]),
        dt=float(cfg["dt"]),
        scheme=cfg["scheme"],
        snapshot_interval=float(cfg["snapshot_interval"]),
    )
    with _timed(timings, "run"):
        traj = run(state, stepper, probes=("grad_theta_h1",))
    if out is not None:
        rundir = out / "run"
        rundir.mkdir(parents=True, exist_ok=True)
        traj.ledger.write_csv(rundir / "ledger.csv")

    thr = cfg["thresholds"]
    led = traj.ledger
    times = led.times
    cases = []

    res_t = np.abs(energy_residual_theta(traj))
    res_u = np.abs(energy_residual_u(traj))
    for name, res, bound in (
        ("residual_theta", res_t, float(thr["residual_theta"])),
        ("residual_u", res_u, float(thr["residual_u"])),
    ):
        worst = float(res.max())
        t_at = float(times[int(np.argmax(res))])
        cases.append(
            CaseResult(
                name=name,
                passed=worst <= bound,
                metrics={"max_residual": worst, "final_residual": float(res[-1]), "threshold": bound},
                failure=""
                if worst <= bound
                else f"relative energy residual {worst:.3e} exceeds {bound:.1e} at t={t_at:.3f}",
            )
        )

    bounds = check_apriori_bounds(traj, tol=float(thr["uniform"]))
    failing = [r for r in bounds if not r.passed]
    cases.append(
        CaseResult(
            name="uniform_bounds",
            passed=not failing,
            metrics={r.name: {"lhs": r.lhs, "rhs": r.rhs, "ratio": r.ratio} for r in bounds},
            failure=""
            if not failing
            else f"{failing[0].name}: lhs {failing[0].lhs:.6e} exceeds rhs {failing[0].rhs:.6e}",
        )
    )

    eta_reports = eta_equivalences(traj, tol=float(thr["eta"]))
    eta_bad = [r for r in eta_reports if not r.passed]
    cases.append(
        CaseResult(
            name="eta_transform",
            passed=not eta_bad,
            metrics={r.name: r.ratio for r in eta_reports},
            failure=""
            if not eta_bad
            else f"{eta_bad[0].name}: lhs {eta_bad[0].lhs:.6e} vs rhs {eta_bad[0].rhs:.6e}",
        )
    )

    strain_sq = led.column("strain_u") ** 2
    grad_sq = led.column("grad_u") ** 2
    denom = np.maximum(strain_sq, 1e-300)
    strain_defect = np.abs(strain_sq - 2.0 * grad_sq) / denom
    worst_strain = float(strain_defect.max()) if len(strain_defect) else 0.0
    strain_at = float(times[int(np.argmax(strain_defect))]) if len(strain_defect) else 0.0
    sbound = float(thr["strain_identity"])
    cases.append(
        CaseResult(
            name="strain_identity",
            passed=worst_strain <= sbound,
            metrics={"max_relative_defect": worst_strain, "threshold": sbound},
            failure=""
            if worst_strain <= sbound
            else f"strain identity defect {worst_strain:.3e} at t={strain_at:.3f}",
        )
    )

    # pointwise law bounds imply these row-wise dissipation floors
    slack = float(thr["dissipation_slack"])
    kap_lo = laws.a.lower_bound
    mu_lo = laws.b.lower_bound
    diss_t = led.column("diss_theta")
    diss_u = led.column("diss_u")
    gt_sq = led.column("grad_theta") ** 2
    floor_t = kap_lo * gt_sq * (1.0 - slack)
    floor_u = mu_lo * grad_sq * (1.0 - slack)
    bad_t = np.where(diss_t < floor_t)[0]
    bad_u = np.where(diss_u < floor_u)[0]
    diss_ok = len(bad_t) == 0 and len(bad_u) == 0
    if diss_ok:
        diss_failure = ""
    elif len(bad_t):
        k = int(bad_t[0])
        diss_failure = f"diss_theta {diss_t[k]:.6e} under floor {floor_t[k]:.6e} at t={times[k]:.3f}"
    else:
        k = int(bad_u[0])
        diss_failure = f"diss_u {diss_u[k]:.6e} under floor {floor_u[k]:.6e} at t={times[k]:.3f}"
    margin_t = float((diss_t - floor_t).min()) if len(diss_t) else 0.0
    margin_u = float((diss_u - floor_u).min()) if len(diss_u) else 0.0
    cases.append(
        CaseResult(
            name="dissipation_floors",
            passed=diss_ok,
            metrics={"min_margin_theta": margin_t, "min_margin_u": margin_u, "slack": slack},
            failure=diss_failure,
        )
    )

    over = max_principle_probe(traj, tolerance=float(thr["overshoot"]))
    cases.append(
        CaseResult(
            name="max_principle",
            passed=over.passed,
            metrics={"overshoot": over.overshoot, "time": over.time_of_worst},
            failure=""
            if over.passed
            else f"range overshoot {over.overshoot:.3e} at t={over.time_of_worst:.3f}",
        )
    )

    snaps = [snap.theta for _, snap in traj.snapshots]
    try:
        gn = gagliardo_nirenberg_check(snaps)
        gn_passed = gn.passed
        gn_metrics = {"max_ratio": gn.lhs, "baseline": gn.rhs, "fields": len(snaps)}
        gn_failure = (
            "" if gn.passed else f"interpolation ratio {gn.lhs:.4f} above baseline {gn.rhs:g}"
        )
    except ValueError:
        gn_passed = True
        gn_metrics = {"fields": 0, "note": "all snapshots constant; ratio undefined"}
        gn_failure = ""
    cases.append(
        CaseResult(name="gagliardo_nirenberg", passed=gn_passed, metrics=gn_metrics, failure=gn_failure)
    )

    metrics = {
        "max_residual_theta": float(res_t.max()),
        "max_residual_u": float(res_u.max()),
        "max_strain_defect": worst_strain,
    }
    rows = list(zip(times, res_t, res_u, strain_defect))
    tables = {
        "energy_audit.csv": (("t", "residual_theta", "residual_u", "strain_defect"), rows)
    }
    return cases, metrics, tables


# --- lp_scaling -------------------------------------------------------------------


def _suite_lp_scaling(cfg, workers, out, timings):
    field_s = float(cfg["field_s"])
    field_norm = float(cfg["field_norm"])
    cases = []

    rec = cfg["reconstruction"]
    rec_tol = float(rec["tolerance"])
    rec_max, rec_where = 0.0, ""
    with _timed(timings, "reconstruction"):
        for n in rec["sizes"]:
            g = Grid(int(n))
            bank = filter_bank(g)
            for seed in rec["seeds"]:
                f = random_hs_field(g, field_s, field_norm, int(seed), 0)
                defect = linf_norm(_diff_scalar(decompose(f, bank).reconstruct(), f))
                if defect >= rec_max:
                    rec_max, rec_where = defect, f"n={n}, seed={seed}"
    cases.append(
        CaseResult(
            name="reconstruction",
            passed=rec_max <= rec_tol,
            metrics={"max_defect": rec_max, "tolerance": rec_tol},
            failure=""
            if rec_max <= rec_tol
            else f"resummation defect {rec_max:.3e} exceeds {rec_tol:.1e} at {rec_where}",
        )
    )

    ber = cfg["bernstein"]
    bn, count, seed0 = int(ber["n"]), int(ber["count"]), int(ber["seed"])
    bgrid = Grid(bn)
    bbank = filter_bank(bgrid)

    def _bernstein_block(block):
        lo, hi = block
        worst_lo, worst_hi = math.inf, -math.inf
        checked = skipped = 0
        first_violation = ""
        for i in range(lo, hi):
            f = random_hs_field(bgrid, field_s, field_norm, seed0 + i, 0)
            for j in range(bbank.j_max + 1):
                try:
                    rep = bernstein_check(f, j, bbank)
                except UndefinedRatioError:
                    skipped += 1
                    continue
                except NumericError as err:
                    if not first_violation:
                        first_violation = f"seed {seed0 + i}, shell j={j}: {err}"
                    checked += 1
                    continue
                checked += 1
                worst_lo = min(worst_lo, rep.ratio)
                worst_hi = max(worst_hi, rep.ratio)
        return worst_lo, worst_hi, checked, skipped, first_violation

    nblocks = min(max(workers, 1), max(count, 1))
    edges = np.linspace(0, count, nblocks + 1, dtype=int)
    with _timed(timings, "bernstein"):
        parts = _pool_map(_bernstein_block, list(zip(edges[:-1], edges[1:])), workers)
    ratio_lo = min(p[0] for p in parts)
    ratio_hi = max(p[1] for p in parts)
    checked = sum(p[2] for p in parts)
    skipped = sum(p[3] for p in parts)
    violation = next((p[4] for p in parts if p[4]), "")
    cases.append(
        CaseResult(
            name="bernstein",
            passed=not violation,
            metrics={
                "fields": count,
                "shells_checked": checked,
                "shells_skipped": skipped,
                "min_ratio": ratio_lo,
                "max_ratio": ratio_hi,
                "lower": 0.75,
                "upper": 8.0 / 3.0,
            },
            failure=violation,
        )
    )

    # seed-averaged ratio per grid size; the criterion is stability across N,
    # so per-draw scatter is averaged out before comparing
    rat = cfg["ratio"]
    window = float(rat["window"])
    exponents = [float(s) for s in rat["exponents"]]
    ratio_rows = []
    by_s = {s: {} for s in exponents}
    with _timed(timings, "norm_ratio"):
        for n in rat["sizes"]:
            g = Grid(int(n))
            bank = filter_bank(g)
            for seed in rat["seeds"]:
                f = random_hs_field(g, field_s, field_norm, int(seed), 0)
                d = decompose(f, bank)
                for s in exponents:
                    lp_val = lp_sobolev_norm(d, s)
                    direct = sobolev_norm(f, s)
                    by_s[s].setdefault(int(n), []).append(lp_val / direct)
                    ratio_rows.append((s, int(n), int(seed), lp_val, direct, lp_val / direct))
    ratio_ok = True
    ratio_failure = ""
    ratio_metrics = {}
    for s in exponents:
        means = {n: sum(vals) / len(vals) for n, vals in by_s[s].items()}
        grand = sum(means.values()) / len(means)
        dev, n_at = max(((abs(m / grand - 1.0), n) for n, m in means.items()), key=lambda x: x[0])
        ratio_metrics[f"{s:g}"] = {
            "per_n": {str(n): m for n, m in means.items()},
            "max_deviation": dev,
        }
        if dev > window and ratio_ok:
            ratio_ok = False
            ratio_failure = (
                f"H^{s:g} lp/direct ratio at n={n_at} drifts {dev:.1%}"
                f" from the cross-grid mean {grand:.4f}"
            )
    cases.append(
        CaseResult(
            name="norm_ratio_stability",
            passed=ratio_ok,
            metrics={"window": window, "ratios": ratio_metrics},
            failure=ratio_failure,
        )
    )

    com = cfg["commutator"]
    base = Grid(int(com["base_n"]))
    cseeds = [int(x) for x in com["seeds"]]
    cs = float(com["field_s"])
    phi0 = random_hs_field(base, cs, 1.0, cseeds[0], 0)
    psi0 = random_hs_field(base, cs, 1.0, cseeds[1], 0)
    cwindow = float(com["window"])
    com_rows = []
    com_ok = True
    com_failure = ""
    com_metrics = {}
    with _timed(timings, "commutator"):
        for s, nu in (tuple(p) for p in com["pairs"]):
            values = []
            for level in range(int(com["doublings"]) + 1):
                g = Grid(int(com["base_n"]) * 2**level)
                phi = phi0 if level == 0 else embed_field(phi0, g)
                psi = psi0 if level == 0 else embed_field(psi0, g)
                c_emp = commutator_scaling_report(phi, psi, s, nu).l1_ratio
                values.append(c_emp)
                com_rows.append((s, nu, g.n, c_emp))
            drift = max(abs(b / a - 1.0) for a, b in zip(values, values[1:]))
            com_metrics[f"s={s:g},nu={nu:g}"] = {"c_emp": values, "max_drift": drift}
            if drift > cwindow and com_ok:
                com_ok = False
                k = max(
                    range(len(values) - 1),
                    key=lambda i: abs(values[i + 1] / values[i] - 1.0),
                )
                com_failure = (
                    f"C_emp drifts {drift:.1%} from n={base.n * 2 ** k} to"
                    f" n={base.n * 2 ** (k + 1)} at (s,nu)=({s:g},{nu:g})"
                )
    cases.append(
        CaseResult(
            name="commutator_stability",
            passed=com_ok,
            metrics={"window": cwindow, "pairs": com_metrics},
            failure=com_failure,
        )
    )

    metrics = {
        "reconstruction_defect": rec_max,
        "bernstein_fields": count,
        "bernstein_min_ratio": ratio_lo,
        "bernstein_max_ratio": ratio_hi,
    }
    tables = {
        "lp_ratio.csv": (("s", "n", "seed", "lp_norm", "direct_norm", "ratio"), ratio_rows),
        "commutator.csv": (("s", "nu", "n", "c_emp"), com_rows),
    }
    return cases, metrics, tables


# --- regularity_sweep -------------------------------------------------------------


def _suite_regularity_sweep(cfg, workers, out, timings):
    sweep_cfg = SweepConfig(
        grid=Grid(int(cfg["n"])),
        laws=_law_pair(cfg["laws"]),
        stepper=TimeStepperConfig(
            t_end=float(cfg["t_end"]),
            dt=cfg["dt"] if cfg["dt"] == "auto" else float(cfg["dt"]),
            scheme=cfg["scheme"],
            cfl_safety=float(cfg["cfl_safety"]),
        ),
        norm_theta=float(cfg["norm_theta"]),
        norm_u=float(cfg["norm_u"]),
        beta=float(cfg["beta"]),
        seed=int(cfg["seed"]),
        growth_cap=float(cfg["growth_cap"]),
    )
    pairs = [(float(p[0]), float(p[1])) for p in cfg["pairs"]]
    with _timed(timings, "sweep"):
        report = regularity_sweep(pairs, sweep_cfg, workers=workers)

    cases = []
    rows = []
    for p in report.points:
        name = f"s_theta={p.s_theta:g},s_u={p.s_u:g}"
        if p.reason:
            failure = p.reason
        elif p.passed:
            failure = ""
        else:
            failure = (
                f"sup norms ({p.sup_theta:.3f}, {p.sup_u:.3f}) exceed"
                f" {report.growth_cap:g}x initial ({p.initial_theta:.3f}, {p.initial_u:.3f})"
                f" at (s_theta,s_u)=({p.s_theta:g},{p.s_u:g})"
            )
        cases.append(
            CaseResult(
                name=name,
                passed=p.passed,
                metrics={
                    "sup_theta": p.sup_theta,
                    "sup_u": p.sup_u,
                    "initial_theta": p.initial_theta,
                    "initial_u": p.initial_u,
                    "int_grad_theta": p.int_grad_theta,
                    "int_grad_u": p.int_grad_u,
                },
                failure=failure,
            )
        )
        rows.append(
            (
                p.s_theta,
                p.s_u,
                p.sup_theta,
                p.sup_u,
                p.int_grad_theta,
                p.int_grad_u,
                p.passed,
                p.reason,
            )
        )
    growth = [
        max(p.sup_theta / max(p.initial_theta, 1e-300), p.sup_u / max(p.initial_u, 1e-300))
        for p in report.points
        if p.passed
    ]
    metrics = {
        "points": len(report.points),
        "growth_cap": report.growth_cap,
        "max_growth": max(growth) if growth else float("nan"),
    }
    tables = {
        "sweep.csv": (
            (
                "s_theta",
                "s_u",
                "sup_theta",
                "sup_u",
                "int_grad_theta",
                "int_grad_u",
                "passed",
                "reason",
            ),
            rows,
        )
    }
    return cases, metrics, tables


# --- twin_stability ---------------------------------------------------------------


def _suite_twin_stability(cfg, workers, out, timings):
    grid = Grid(int(cfg["n"]))
    laws = _law_pair(cfg["laws"])
    seed = int(cfg["seed"])
    theta = generate_initial(
        {"kind": "random_hs", "s": float(cfg["s_theta"]), "norm": float(cfg["norm_theta"]),
         "unknown": "temperature"},
        grid,
        seed,
    )
    u = generate_initial(
        {"kind": "random_hs", "s": float(cfg["s_u"]), "norm": float(cfg["norm_u"]),
         "unknown": "velocity"},
        grid,
        seed,
    )
    base = initial_state(theta, u, laws, beta=float(cfg["beta"]))
    stepper = TimeStepperConfig(t_end=float(cfg["t_end"]), dt=float(cfg["dt"]), scheme=cfg["scheme"])
    target = cfg["target"]
    pseed = int(cfg["perturbation_seed"])
    sizes = [float(s) for s in cfg["sizes"]]

    with _timed(timings, "runs"):
        zero_rep = twin_run_stability(base, 0.0, stepper, target=target, seed=pseed)
        reports = _pool_map(
            lambda size: twin_run_stability(base, size, stepper, target=target, seed=pseed),
            sizes,
            workers,
        )

    max_d = float(zero_rep.context["max_d"])
    cases = [
        CaseResult(
            name="determinism",
            passed=zero_rep.passed,
            metrics={"max_d": max_d},
            failure=""
            if zero_rep.passed
            else f"twin of the unperturbed run diverges, D reaches {max_d:.3e}",
        )
    ]

    c_emps = [r.c_emp for r in reports]
    mid = sorted(c_emps)[len(c_emps) // 2]
    drift = max(abs(c / mid - 1.0) for c in c_emps) if mid != 0 else math.inf
    window = float(cfg["drift_window"])
    drift_ok = drift <= window
    worst_size = sizes[int(np.argmax([abs(c / mid - 1.0) for c in c_emps]))] if mid != 0 else 0.0
    cases.append(
        CaseResult(
            name="c_emp_stability",
            passed=drift_ok,
            metrics={
                "c_emp": {f"{s:g}": c for s, c in zip(sizes, c_emps)},
                "max_drift": drift,
                "window": window,
            },
            failure=""
            if drift_ok
            else f"C_emp drifts {drift:.1%} from median {mid:.4f} at size {worst_size:g}",
        )
    )

    slack = float(cfg["proxy_slack"])
    proxy_ok = True
    proxy_failure = ""
    proxy_metrics = {}
    for size, rep in zip(sizes, reports):
        ok = (
            math.isfinite(rep.growth_ratio)
            and math.isfinite(rep.proxy_bound)
            and rep.growth_ratio <= rep.proxy_bound * (1.0 + slack)
        )
        proxy_metrics[f"{size:g}"] = {
            "growth_ratio": rep.growth_ratio,
            "proxy_bound": rep.proxy_bound,
            "d0": float(rep.d_values[0]),
            "dT": float(rep.d_values[-1]),
        }
        if not ok and proxy_ok:
            proxy_ok = False
            proxy_failure = (
                f"D(T)/D(0) = {rep.growth_ratio:.3e} escapes proxy"
                f" {rep.proxy_bound:.3e} (slack {slack:g}) at size {size:g},"
                f" t={float(rep.times[-1]):.3f}"
            )
    cases.append(
        CaseResult(
            name="gronwall_proxy",
            passed=proxy_ok,
            metrics={"slack": slack, "sizes": proxy_metrics},
            failure=proxy_failure,
        )
    )

    rows = []
    for size, rep in zip([0.0] + sizes, [zero_rep] + reports):
        for t, d, b in zip(rep.times, rep.d_values, rep.b_integral):
            rows.append((size, float(t), float(d), float(b)))
    metrics = {
        "c_emp_drift": drift,
        "determinism_max_d": max_d,
    }
    tables = {"twin_stability.csv": (("size", "t", "d_value", "b_integral"), rows)}
    return cases, metrics, tables


# --- runner -----------------------------------------------------------------------

_BUILDERS = {
    "taylor_green": _suite_taylor_green,
    "mms_parabolic": _suite_mms_parabolic,
    "energy_audit": _suite_energy_audit,
    "lp_scaling": _suite_lp_scaling,
    "regularity_sweep": _suite_regularity_sweep,
    "twin_stability": _suite_twin_stability,
}


def run_suite(name: str, config_overrides=(), out_dir=None, workers: int = 1) -> SuiteResult:
    """Run one packaged suite and, when out_dir is given, write its report
    directory.  Overrides are dotted-path assignments (strings "a.b=1" or a
    mapping {"a.b": 1}) applied to the suite defaults; keys the suite does not
    declare are rejected."""
    cfg = suite_defaults(name)
    if config_overrides:
        if isinstance(config_overrides, Mapping):
            for path, value in config_overrides.items():
                _set_dotted(cfg, path, value)
        else:
            cfg = apply_overrides(cfg, config_overrides)
    _reject_unknown_tree(cfg, _DEFAULTS[name], "")
    workers = resolve_workers(workers)

    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

    timings = {}
    start = time.perf_counter()
    cases, metrics, tables = _BUILDERS[name](cfg, workers, out, timings)
    timings["total"] = round(time.perf_counter() - start, 3)

    failed = [c for c in cases if not c.passed]
    result = SuiteResult(
        suite=name,
        passed=not failed,
        cases=tuple(cases),
        metrics=metrics,
        fingerprint=environment_fingerprint(),
        failure=failed[0].failure if failed else "",
    )
    if out is not None:
        _write_outputs(out, result, cfg, tables, timings)
    return result


def _write_outputs(out: Path, result: SuiteResult, cfg: dict, tables: dict, timings: dict) -> None:
    report = {
        "suite": result.suite,
        "passed": result.passed,
        "failure": result.failure,
        "config_sha256": config_digest(cfg),
        "environment": result.fingerprint,
        "metrics": _jsonable(result.metrics),
        "cases": [
            {"name": c.name, "passed": c.passed, "failure": c.failure, "metrics": _jsonable(c.metrics)}
            for c in result.cases
        ],
    }
    write_json(out / "report.json", report)
    write_json(out / "resolved_config.json", {"config": _jsonable(cfg), "sha256": config_digest(cfg)})
    write_json(out / "timings.json", {"seconds": timings})
    for fname, (header, rows) in tables.items():
        with open(out / fname, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
