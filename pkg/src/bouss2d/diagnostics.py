"""Run-level checks: discrete energy balances, a priori inequality monitors,
transformed-temperature equivalences, and stability probes.

Everything here is pure over completed trajectories.  Time integrals are
trapezoidal over the ledger rows (matching the stepper's own order), so
residuals converge at min(2, scheme order) under dt refinement.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigError, NumericBlowupError, NumericError, StepRejectedError
from .initial import (
    PERTURBATION_STREAM,
    TEMPERATURE_STREAM,
    random_hs_field,
    random_hs_velocity,
)
from .laws import eta_backward, eta_forward
from .lp import sobolev_norm
from .solver import (
    LawPair,
    SimState,
    TimeStepperConfig,
    Trajectory,
    initial_state,
    run,
    stability_bound,
)
from .spectral import (
    Grid,
    ScalarSpectralField,
    VectorSpectralField,
    gradient,
    l2_norm,
    l2_norm_gradient,
    l4_norm,
    laplacian,
    linf_norm,
)

_EPS = 1e-30

# Largest pointwise-in-time Gagliardo-Nirenberg ratio seen over large random
# batches at several resolutions is ~1.48; single low modes give sqrt(3/2).
GN_BASELINE = 2.0


@dataclass(frozen=True)
class EstimateReport:
    """One checked inequality: passed iff lhs <= rhs * (1 + tolerance)."""

    name: str
    lhs: float
    rhs: float
    ratio: float
    passed: bool
    context: dict

    def __str__(self):
        flag = "pass" if self.passed else "FAIL"
        return f"{self.name}: lhs={self.lhs:.6e} rhs={self.rhs:.6e} [{flag}]"


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs == 0 else math.inf


def _report(name, lhs, rhs, tol, context) -> EstimateReport:
    context = dict(context, tolerance=tol)
    return EstimateReport(
        name=name,
        lhs=float(lhs),
        rhs=float(rhs),
        ratio=_ratio(float(lhs), float(rhs)),
        passed=bool(lhs <= rhs * (1 + tol)),
        context=context,
    )


def _require_rows(traj: Trajectory) -> None:
    if len(traj.ledger) == 0:
        raise ValueError("empty trajectory: nothing recorded")


def _cumint(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    if len(times) == 1:
        return np.zeros(1)
    return np.concatenate(([0.0], cumulative_trapezoid(values, times)))


# --- energy balance residuals ---------------------------------------------------


def energy_residual_theta(traj: Trajectory) -> np.ndarray:
    """Relative defect of 1/2 d/dt ||theta||^2 = -dissipation, cumulative in
    time, one entry per ledger row (the first is zero by construction)."""
    _require_rows(traj)
    times = traj.ledger.times
    energy = 0.5 * traj.ledger.column("l2_theta") ** 2
    diss = _cumint(times, traj.ledger.column("diss_theta"))
    return np.abs(energy + diss - energy[0]) / max(energy[0], _EPS)


def energy_residual_u(traj: Trajectory) -> np.ndarray:
    """Kinetic balance residual; buoyancy enters as a work term."""
    _require_rows(traj)
    times = traj.ledger.times
    beta = traj.final.beta
    energy = 0.5 * traj.ledger.column("l2_u") ** 2
    diss = _cumint(times, traj.ledger.column("diss_u"))
    work = _cumint(times, beta * traj.ledger.column("buoyancy_power"))
    return np.abs(energy + diss - energy[0] - work) / max(energy[0], _EPS)


# --- a priori bounds -------------------------------------------------------------


def check_apriori_bounds(traj: Trajectory, tol: float = 1e-8) -> list[EstimateReport]:
    """Exact-constant inequalities are asserted; the constant-free estimates
    are recorded as empirical ratios for cross-run regression.

    The temperature and velocity bounds hold along the whole trajectory, so
    the checked quantity is the running sum 1/2 ||w(t)||^2 + c \\int_0^t
    ||grad w||^2 at its worst row (both bounds integrate a differential
    inequality from 0 to t, for every t).
    """
    _require_rows(traj)
    led = traj.ledger
    times = led.times
    horizon = float(times[-1] - times[0])
    beta = traj.final.beta
    laws = traj.final.laws
    theta0_sq = led.column("l2_theta")[0] ** 2
    u0_sq = led.column("l2_u")[0] ** 2

    reports = []
    running = 0.5 * led.column("l2_theta") ** 2 + laws.a.lower_bound * _cumint(
        times, led.column("grad_theta") ** 2
    )
    reports.append(
        _report(
            "uniform_theta",
            running.max(),
            0.5 * theta0_sq,
            tol,
            {"kappa_lower": laws.a.lower_bound, "rows": len(led)},
        )
    )

    running = 0.5 * led.column("l2_u") ** 2 + laws.b.lower_bound * _cumint(
        times, led.column("grad_u") ** 2
    )
    rhs = 0.5 * math.e * (horizon * beta**2 * theta0_sq + u0_sq)
    reports.append(
        _report(
            "uniform_u",
            running.max(),
            rhs,
            tol,
            {"mu_lower": laws.b.lower_bound, "beta": beta, "horizon": horizon},
        )
    )

    # constant-free velocity estimate: the realized ratio is the regression value
    lhs = led.column("l2_u").max() ** 2 + _cumint(times, led.column("grad_u") ** 2)[-1]
    rhs = horizon * beta**2 * theta0_sq + u0_sq
    ratio = _ratio(lhs, rhs)
    reports.append(
        EstimateReport(
            "energy_u_1",
            float(lhs),
            float(rhs),
            ratio,
            math.isfinite(ratio),
            {"kind": "empirical constant", "beta": beta},
        )
    )

    if "grad_theta_h1" in led.columns:
        h1_sq = led.column("l2_theta") ** 2 + led.column("grad_theta") ** 2
        hess_sq = led.column("grad_theta_h1") ** 2 - led.column("grad_theta") ** 2
        lhs = h1_sq.max() + _cumint(times, hess_sq)[-1]
        rhs = h1_sq[0] * (1.0 + led.column("grad_theta")[0] ** 2) * math.exp(
            min(horizon**2 * theta0_sq**2 + u0_sq**2, 700.0)
        )
        ratio = _ratio(lhs, rhs)
        reports.append(
            EstimateReport(
                "energy_theta_1",
                float(lhs),
                float(rhs),
                ratio,
                math.isfinite(ratio),
                {
                    "kind": "empirical constant",
                    "note": "time-derivative term of the lhs omitted; "
                    "second derivatives via the grad_theta_h1 probe",
                },
            )
        )
    return reports


# --- Gagliardo-Nirenberg ---------------------------------------------------------


def gagliardo_nirenberg_check(fields, baseline: float = GN_BASELINE) -> EstimateReport:
    """Pointwise-in-time interpolation ratio ||f||_{L4}^2 / (||f|| ||grad f||)
    over a batch, with area-normalized norms so a single cosine gives
    sqrt(3/2).  Constant fields carry no gradient and are excluded (the torus
    admits them, the whole plane does not); the mean is removed first."""
    ratios = []
    excluded = 0
    for f in fields:
        g = f.grid
        c = f.coeffs.copy()
        c[0, 0] = 0.0
        f = ScalarSpectralField(g, c)
        grad = l2_norm_gradient(f)
        if grad == 0.0:
            excluded += 1
            continue
        area = (2.0 * math.pi * g.box_length) ** 2
        ratios.append(l4_norm(f) ** 2 * math.sqrt(area) / (l2_norm(f) * grad))
    if not ratios:
        raise ValueError("no usable fields: every input was constant")
    return _report(
        "gagliardo_nirenberg",
        max(ratios),
        baseline,
        0.0,
        {"count": len(ratios), "excluded_constant": excluded, "min": min(ratios)},
    )


# --- transformed-temperature equivalences ----------------------------------------


def _delta(a: ScalarSpectralField, b: ScalarSpectralField) -> ScalarSpectralField:
    return ScalarSpectralField(a.grid, a.coeffs - b.coeffs)


def eta_equivalences(traj: Trajectory, tol: float = 1e-10) -> list[EstimateReport]:
    """Norm sandwiches kappa_* ||theta|| <= ||eta|| <= kappa^* ||theta|| for
    the value, the gradient, and the (finite-difference) time derivative,
    over the trajectory snapshots; plus the inverse round trip in L-inf.

    Each sandwich side is reported as its worst ratio against 1."""
    _require_rows(traj)
    laws = traj.final.laws
    if laws.a_primitive is None:
        raise ConfigError("trajectory laws carry no primitive transform for kappa")
    pt = laws.a_primitive
    lo, hi = laws.a.lower_bound, laws.a.upper_bound

    snaps = [(t, state.theta) for t, state in traj.snapshots]
    etas = [(t, eta_forward(pt, theta)) for t, theta in snaps]

    worst = {
        "eta_l2_lower": 0.0,
        "eta_l2_upper": 0.0,
        "eta_grad_lower": 0.0,
        "eta_grad_upper": 0.0,
        "eta_dt_lower": 0.0,
        "eta_dt_upper": 0.0,
    }
    skipped = 0

    def feed(kind, theta_norm, eta_norm):
        nonlocal skipped
        if theta_norm == 0.0 and eta_norm == 0.0:
            skipped += 1
            return
        worst[f"{kind}_lower"] = max(worst[f"{kind}_lower"], lo * theta_norm / eta_norm)
        worst[f"{kind}_upper"] = max(worst[f"{kind}_upper"], eta_norm / (hi * theta_norm))

    for (_, theta), (_, eta) in zip(snaps, etas):
        feed("eta_l2", l2_norm(theta), l2_norm(eta))
        feed("eta_grad", l2_norm_gradient(theta), l2_norm_gradient(eta))
    for k in range(len(snaps) - 1):
        dtheta = _delta(snaps[k + 1][1], snaps[k][1])
        deta = _delta(etas[k + 1][1], etas[k][1])
        feed("eta_dt", l2_norm(dtheta), l2_norm(deta))

    context = {"snapshots": len(snaps), "skipped_zero": skipped, "bounds": (lo, hi)}
    reports = [_report(name, value, 1.0, tol, context) for name, value in worst.items()]

    defect = max(
        linf_norm(_delta(eta_backward(pt, eta), theta))
        for (_, theta), (_, eta) in zip(snaps, etas)
    )
    reports.append(_report("eta_roundtrip", defect, 1e-8, 0.0, context))
    return reports


# --- maximum principle -----------------------------------------------------------


@dataclass(frozen=True)
class OvershootReport:
    overshoot: float
    initial_range: float
    time_of_worst: float
    passed: bool
    tolerance: float


def max_principle_probe(traj: Trajectory, tolerance: float = 1e-2) -> OvershootReport:
    """Transport-diffusion keeps theta inside its initial range; the spectral
    discretization overshoots by a resolution-dependent sliver."""
    _require_rows(traj)
    led = traj.ledger
    lo0 = led.column("theta_min")[0]
    hi0 = led.column("theta_max")[0]
    width = hi0 - lo0
    over = np.maximum(led.column("theta_max") - hi0, lo0 - led.column("theta_min"))
    over = np.maximum(over, 0.0)
    k = int(np.argmax(over))
    rel = over[k] / width if width > 0 else float(over[k])
    return OvershootReport(
        overshoot=float(rel),
        initial_range=float(width),
        time_of_worst=float(led.times[k]),
        passed=bool(rel <= tolerance),
        tolerance=tolerance,
    )


# --- regularity sweep ------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    grid: Grid
    laws: LawPair
    stepper: TimeStepperConfig
    norm_theta: float = 1.0
    norm_u: float = 1.0
    beta: float = 1.0
    seed: int = 0
    growth_cap: float = 10.0


@dataclass(frozen=True)
class SweepPoint:
    s_theta: float
    s_u: float
    sup_theta: float
    sup_u: float
    int_grad_theta: float
    int_grad_u: float
    initial_theta: float
    initial_u: float
    passed: bool
    reason: str = ""


@dataclass(frozen=True)
class SweepReport:
    points: tuple
    growth_cap: float

    @property
    def all_passed(self) -> bool:
        return all(p.passed for p in self.points)


def _validate_exponents(s_theta: float, s_u: float) -> None:
    if not (s_theta >= 1.0 and s_u >= 0.0 and s_u - 1.0 <= s_theta <= s_u + 2.0):
        raise ConfigError(
            f"exponent pair ({s_theta}, {s_u}) lies outside the admissible set "
            "s_theta >= 1, s_u >= 0, s_u - 1 <= s_theta <= s_u + 2"
        )


def _sweep_point(pair, cfg: SweepConfig) -> SweepPoint:
    s_theta, s_u = pair
    g = cfg.grid
    theta0 = random_hs_field(g, s_theta, cfg.norm_theta, cfg.seed, TEMPERATURE_STREAM)
    u0 = random_hs_velocity(g, s_u, cfg.norm_u, cfg.seed)
    state = initial_state(theta0, u0, cfg.laws, beta=cfg.beta)
    probes = (
        f"theta_h{s_theta:g}",
        f"u_h{s_u:g}",
        f"grad_theta_h{s_theta:g}",
        f"grad_u_h{s_u:g}",
    )
    try:
        traj = run(state, cfg.stepper, probes=probes)
    except (NumericBlowupError, StepRejectedError, NumericError) as err:
        return SweepPoint(
            s_theta, s_u, math.nan, math.nan, math.nan, math.nan,
            math.nan, math.nan, False, f"{type(err).__name__}: {err}",
        )
    led = traj.ledger
    times = led.times
    sup_theta = float(led.column(probes[0]).max())
    sup_u = float(led.column(probes[1]).max())
    init_theta = float(led.column(probes[0])[0])
    init_u = float(led.column(probes[1])[0])
    int_theta = float(_cumint(times, led.column(probes[2]) ** 2)[-1])
    int_u = float(_cumint(times, led.column(probes[3]) ** 2)[-1])
    finite = all(map(math.isfinite, (sup_theta, sup_u, int_theta, int_u)))
    capped = (
        sup_theta <= cfg.growth_cap * init_theta and sup_u <= cfg.growth_cap * init_u
    )
    reason = "" if finite and capped else "norm growth beyond cap"
    return SweepPoint(
        s_theta, s_u, sup_theta, sup_u, int_theta, int_u,
        init_theta, init_u, finite and capped, reason,
    )


def regularity_sweep(exponent_grid, cfg: SweepConfig, workers: int = 1) -> SweepReport:
    """Run one trajectory per admissible (s_theta, s_u) pair and record the
    sup-in-time Sobolev norms against the growth cap.  Blow-ups become failed
    datapoints, not exceptions."""
    pairs = [(float(s), float(t)) for s, t in exponent_grid]
    for s_theta, s_u in pairs:
        _validate_exponents(s_theta, s_u)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(lambda p: _sweep_point(p, cfg), pairs))
    else:
        points = [_sweep_point(p, cfg) for p in pairs]
    return SweepReport(points=tuple(points), growth_cap=cfg.growth_cap)


# --- twin-run stability ----------------------------------------------------------


@dataclass(frozen=True)
class StabilityReport:
    perturbation_size: float
    times: np.ndarray
    d_values: np.ndarray
    b_integral: np.ndarray
    c_emp: float
    growth_ratio: float
    proxy_bound: float
    passed: bool
    context: dict


def _perturbed_state(base: SimState, size: float, target: str, seed: int) -> SimState:
    g = base.grid
    if target == "theta":
        delta = random_hs_field(g, 1.0, size, seed, PERTURBATION_STREAM)
        theta = ScalarSpectralField(g, base.theta.coeffs + delta.coeffs)
        return initial_state(
            theta, base.u, base.laws, beta=base.beta, cutoff=base.cutoff, time=base.time
        )
    if target == "u":
        delta = random_hs_velocity(g, 0.0, size, seed)
        u = VectorSpectralField(
            tuple(
                ScalarSpectralField(g, a.coeffs + d.coeffs)
                for a, d in zip(base.u.components, delta.components)
            )
        )
        return initial_state(
            base.theta, u, base.laws, beta=base.beta, cutoff=base.cutoff, time=base.time
        )
    raise ConfigError(f"unknown perturbation target {target!r} (theta or u)")


def _grad_l2_vector(u: VectorSpectralField) -> float:
    return math.hypot(*(l2_norm_gradient(c) for c in u.components))


def twin_run_stability(
    base: SimState,
    perturbation_size: float,
    cfg: TimeStepperConfig,
    target: str = "theta",
    seed: int = 0,
) -> StabilityReport:
    """Evolve the base state and a perturbed copy with one frozen step size and
    compare their divergence D(t) = ||eta_1 - eta_2||_{H1}^2 + ||u_1 - u_2||^2
    against the Gronwall proxy integral built from both trajectories.

    c_emp is the smallest constant with log D(t) - log D(0) <= c_emp * int B
    over the recorded marks; a zero perturbation instead asserts bitwise
    reproducibility (D at roundoff)."""
    if perturbation_size < 0:
        raise ConfigError("perturbation size must be nonnegative")
    laws = base.laws
    if laws.a_primitive is None:
        raise ConfigError("twin-run stability needs laws with a primitive transform")
    pt = laws.a_primitive

    if cfg.dt == "auto":
        bound = stability_bound(base)
        dt = cfg.cfl_safety * (bound if math.isfinite(bound) else base.grid.spacing)
        cfg = replace(cfg, dt=dt)
    if cfg.snapshot_interval is None:
        horizon = cfg.t_end - base.time
        cfg = replace(cfg, snapshot_interval=max(horizon / 16.0, float(cfg.dt)))

    other = _perturbed_state(base, perturbation_size, target, seed)
    traj1 = run(base, cfg)
    traj2 = run(other, cfg)

    marks = []
    d_values = []
    b_values = []
    for (t1, s1), (t2, s2) in zip(traj1.snapshots, traj2.snapshots):
        if abs(t1 - t2) > 1e-9 * max(1.0, abs(t1)):
            raise NumericError("twin trajectories produced mismatched snapshot times")
        eta1 = eta_forward(pt, s1.theta)
        eta2 = eta_forward(pt, s2.theta)
        du = VectorSpectralField(
            tuple(_delta(a, b) for a, b in zip(s1.u.components, s2.u.components))
        )
        marks.append(t1)
        d_values.append(sobolev_norm(_delta(eta1, eta2), 1.0) ** 2 + l2_norm(du) ** 2)
        b_values.append(
            (
                l4_norm(gradient(s1.theta)) ** 4
                + l2_norm_gradient(eta2) ** 2
                + l2_norm(laplacian(eta2)) ** 2
                + 1.0
                + _grad_l2_vector(s2.u) ** 2
                + l4_norm(s1.u) ** 4
                + l4_norm(gradient(eta2)) ** 4
            )
            * (1.0 + l4_norm(gradient(eta1)))
        )

    times = np.array(marks)
    d_series = np.array(d_values)
    b_integral = _cumint(times, np.array(b_values))
    context = {"target": target, "seed": seed, "dt": float(cfg.dt), "marks": len(marks)}

    if perturbation_size == 0.0:
        worst = float(d_series.max())
        return StabilityReport(
            0.0, times, d_series, b_integral, 0.0, math.nan, math.nan,
            worst <= 1e-24, dict(context, mode="determinism", max_d=worst),
        )

    d0 = d_series[0]
    ratios = [
        math.log(d / d0) / bi
        for d, bi in zip(d_series[1:], b_integral[1:])
        if d > 0 and bi > 0
    ]
    c_emp = max(ratios) if ratios else math.nan
    growth = float(d_series[-1] / d0)
    proxy = math.exp(c_emp * b_integral[-1]) if math.isfinite(c_emp) else math.inf
    passed = math.isfinite(c_emp) and growth <= proxy * (1 + 1e-12)
    return StabilityReport(
        perturbation_size, times, d_series, b_integral,
        float(c_emp), growth, float(proxy), passed, context,
    )
