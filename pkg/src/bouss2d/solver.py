"""Time integration of the frequency-truncated Boussinesq system.

The temperature diffuses with kappa = a(theta) and the momentum with
mu = b(theta), both bounded coefficient laws.  Diffusion is split into a
constant stiff part (the lower bound times the Laplacian, integrated
implicitly and exactly per Fourier mode) and a variable remainder that steps
explicitly together with transport and buoyancy.  All quadratic and
coefficient-weighted products go through the 3/2-padded physical grid, and
every explicit term is re-truncated to the frequency ball that defines the
system, so the support invariant survives arbitrarily many steps.

A standalone linear parabolic solver shares the stepper machinery (with a
fixed advecting velocity, a coefficient field given directly in physical
space, and an optional source); it runs on the full resolved band since no
cutoff is part of that problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    GridMismatchError,
    NumericBlowupError,
    NumericError,
    StepRejectedError,
)
from .laws import CoefficientLaw, PrimitiveTransform
from .ledger import EnergyLedger
from .spectral import (
    Grid,
    ScalarSpectralField,
    VectorSpectralField,
    _ball_mask,
    _laplacian_multiplier,
    divergence,
    divergence_defect,
    from_physical_padded,
    gradient,
    l2_norm,
    leray_project,
    linf_norm,
    to_physical_padded,
    truncate,
    truncate_vector,
)

SCHEMES = ("imex_cn_rk2", "imex_etd_rk3")

_DIVFREE_TOL = 1e-12
_SUPPORT_TOL = 1e-13


# --- state and configuration --------------------------------------------------


@dataclass(frozen=True)
class LawPair:
    """Coefficient laws of the two unknowns; kappa's primitive rides along
    for diagnostics that work on the transformed temperature."""

    a: CoefficientLaw
    b: CoefficientLaw
    a_primitive: PrimitiveTransform | None = None


@dataclass(frozen=True)
class SimState:
    theta: ScalarSpectralField
    u: VectorSpectralField
    time: float
    cutoff: float
    laws: LawPair
    beta: float = 1.0

    def __post_init__(self):
        if self.theta.grid != self.u.grid:
            raise GridMismatchError("theta and u live on different grids")
        if not (self.time >= 0.0 and math.isfinite(self.time)):
            raise ValueError(f"time must be a finite nonnegative real, got {self.time}")
        if not (self.beta > 0):
            raise ValueError("beta must be positive")
        g = self.theta.grid
        if not (0 < self.cutoff <= g.max_radius * (1 + 1e-12)):
            raise ValueError(
                f"cutoff {self.cutoff:.6g} not representable on n={g.n}, L={g.box_length}"
            )
        if not self.u.divfree_certified and divergence_defect(self.u) > _DIVFREE_TOL:
            raise ValueError("velocity is not divergence-free to tolerance")

    @property
    def grid(self) -> Grid:
        return self.theta.grid


def initial_state(
    theta0: ScalarSpectralField,
    u0: VectorSpectralField,
    laws: LawPair,
    *,
    beta: float = 1.0,
    cutoff: float | None = None,
    time: float = 0.0,
) -> SimState:
    """Project raw initial data onto the solver's invariant set: truncate both
    unknowns to the frequency ball and remove any curl-free velocity part."""
    if cutoff is None:
        cutoff = theta0.grid.default_cutoff
    theta = truncate(theta0, cutoff)
    u = leray_project(truncate_vector(u0, cutoff))
    return SimState(theta, u, time, cutoff, laws, beta)


def friedrich_defect(state: SimState) -> float:
    """Largest coefficient magnitude outside the ball, relative to the largest
    inside; zero fields report zero."""
    mask = _ball_mask(state.grid, state.cutoff)
    worst = 0.0
    for f in (state.theta, *state.u.components):
        mags = np.abs(f.coeffs)
        top = mags.max()
        if top > 0:
            worst = max(worst, float(mags[~mask].max(initial=0.0) / top))
    return worst


@dataclass(frozen=True)
class TimeStepperConfig:
    t_end: float
    dt: float | str = "auto"
    scheme: str = "imex_cn_rk2"
    cfl_safety: float = 0.4
    snapshot_interval: float | None = None

    def __post_init__(self):
        if not (self.t_end >= 0.0 and math.isfinite(self.t_end)):
            raise ConfigError("t_end must be a finite nonnegative real")
        if isinstance(self.dt, str):
            if self.dt != "auto":
                raise ConfigError(f"dt must be positive or 'auto', got {self.dt!r}")
        elif not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError("dt must be positive or 'auto'")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r} (choose from {SCHEMES})")
        if not (0 < self.cfl_safety < 1):
            raise ConfigError("cfl_safety must lie in (0, 1)")
        if self.snapshot_interval is not None and not (self.snapshot_interval > 0):
            raise ConfigError("snapshot_interval must be positive")


@dataclass(frozen=True)
class ParabolicProblem:
    """Linear advection-diffusion setup: d_t psi + u.grad psi - div(kappa grad psi) = f.

    kappa is a constant or a callable (t, x1, x2) -> samples evaluated on the
    padded product grid; velocity is a spectral field or a callable t -> field;
    source is a callable (t, x1, x2) -> samples or None.  With steady=True the
    coefficient and velocity are sampled once at t=0 and reused.
    """

    psi0: ScalarSpectralField
    kappa_bounds: tuple[float, float]
    kappa: object = None
    velocity: object = None
    source: object = None
    steady: bool = True

    def __post_init__(self):
        lo, hi = self.kappa_bounds
        if not (0 < lo <= hi):
            raise ConfigError("kappa bounds must satisfy 0 < lower <= upper")
        if self.kappa is None and lo != hi:
            raise ConfigError("omitting kappa requires equal bounds (constant coefficient)")
        if isinstance(self.kappa, (int, float)) and not (lo <= self.kappa <= hi):
            raise ConfigError("constant kappa leaves its declared bounds")


# --- trajectories ---------------------------------------------------------------


@dataclass
class Trajectory:
    ledger: EnergyLedger
    snapshots: list
    final: SimState
    dt: float
    scheme: str

    @property
    def times(self) -> np.ndarray:
        return self.ledger.times


@dataclass
class ParabolicTrajectory:
    times: np.ndarray
    l2: np.ndarray
    snapshots: list
    final: ScalarSpectralField
    dt: float
    scheme: str


# --- stability bound ------------------------------------------------------------


def _coefficient_terms(spread: float, dx: float, top_radius: float) -> list:
    if spread <= 0:
        return []
    return [dx * dx / (2 * spread), 1.8 / (spread * top_radius**2)]


def stability_bound(state: SimState) -> float:
    """Largest dt the explicit part tolerates: advective CFL plus diffusion
    limits from the variable remainders (inf when nothing constrains)."""
    dx = state.grid.spacing
    terms = [math.inf]
    umax = linf_norm(state.u)
    if umax > 0:
        terms.append(dx / umax)
    terms += _coefficient_terms(
        state.laws.a.upper_bound - state.laws.a.lower_bound, dx, state.cutoff
    )
    terms += _coefficient_terms(
        state.laws.b.upper_bound - state.laws.b.lower_bound, dx, state.cutoff
    )
    return min(terms)


def _resolve_steps(horizon: float, cfg: TimeStepperConfig, bound: float, dx: float):
    """Step size and count covering [0, horizon]; auto keeps rows uniform."""
    if horizon <= 0:
        return 0.0, 0, 0.0
    if cfg.dt == "auto":
        target = cfg.cfl_safety * (bound if math.isfinite(bound) else dx)
        nsteps = max(1, math.ceil(horizon / target - 1e-9))
        return horizon / nsteps, nsteps, 0.0
    dt = float(cfg.dt)
    nsteps = int(math.floor(horizon / dt * (1 + 1e-12)))
    tail = horizon - nsteps * dt
    if tail <= 1e-9 * dt:
        tail = 0.0
    return dt, nsteps, tail


# --- IMEX stage machinery ---------------------------------------------------------


def _phi_series(z: np.ndarray, m: int) -> np.ndarray:
    acc = np.full_like(z, 1.0 / math.factorial(16 + m))
    for j in range(15, -1, -1):
        acc = acc * z + 1.0 / math.factorial(j + m)
    return acc


def _phi(z: np.ndarray, m: int) -> np.ndarray:
    """phi_m(z) = sum_j z^j/(j+m)!, series near 0, closed form elsewhere."""
    small = np.abs(z) < 0.5
    zs = np.where(small, z, 0.0)
    zb = np.where(small, 1.0, z)
    e = np.expm1(zb)
    if m == 1:
        big = e / zb
    elif m == 2:
        big = (e - zb) / zb**2
    else:
        big = (e - zb - 0.5 * zb**2) / zb**3
    return np.where(small, _phi_series(zs, m), big)


def _make_advance(scheme: str, lams: tuple, dt: float, explicit):
    """Single-step closure over coefficient arrays; lams are the per-unknown
    implicit multipliers, explicit(ws, t) the projected nonlinear tendency."""
    if scheme == "imex_cn_rk2":
        nums = tuple(1.0 + (0.5 * dt) * lam for lam in lams)
        dens = tuple(1.0 - (0.5 * dt) * lam for lam in lams)

        def advance(ws, t):
            e0 = explicit(ws, t)
            mid = tuple(
                (num * w + dt * e) / den for num, den, w, e in zip(nums, dens, ws, e0)
            )
            e1 = explicit(mid, t + dt)
            return tuple(
                (num * w + (0.5 * dt) * (a + b)) / den
                for num, den, w, a, b in zip(nums, dens, ws, e0, e1)
            )

        return advance

    exps, exps_h, w_half, w_full, g1s, g2s, g3s = [], [], [], [], [], [], []
    for lam in lams:
        z = dt * lam
        exps.append(np.exp(z))
        exps_h.append(np.exp(0.5 * z))
        w_half.append((0.5 * dt) * _phi(0.5 * z, 1))
        w_full.append(dt * _phi(z, 1))
        p2, p3 = _phi(z, 2), _phi(z, 3)
        g1s.append(dt * (_phi(z, 1) - 3 * p2 + 4 * p3))
        g2s.append(dt * (4 * p2 - 8 * p3))
        g3s.append(dt * (4 * p3 - p2))

    def advance(ws, t):
        f0 = explicit(ws, t)
        stage_a = tuple(eh * w + wh * f for eh, wh, w, f in zip(exps_h, w_half, ws, f0))
        fa = explicit(stage_a, t + 0.5 * dt)
        stage_b = tuple(
            e * w + wf * (2 * a - f)
            for e, wf, w, a, f in zip(exps, w_full, ws, fa, f0)
        )
        fb = explicit(stage_b, t + dt)
        return tuple(
            e * w + c1 * f + c2 * a + c3 * b
            for e, c1, c2, c3, w, f, a, b in zip(exps, g1s, g2s, g3s, ws, f0, fa, fb)
        )

    return advance


def _guard(samples: np.ndarray, term: str, time: float) -> None:
    if not np.all(np.isfinite(samples)):
        raise NumericBlowupError(term, time)


# --- the Boussinesq right-hand side -----------------------------------------------


def _boussinesq_terms(theta, u, laws: LawPair, cutoff: float, time: float) -> dict:
    """Named nonlinear pieces, each truncated to the frequency ball.

    adv_theta = P(u.grad theta), diff_rem = P div((kappa-kappa_lo) grad theta),
    adv_u = P(u.grad u), visc_rem = P div((mu-mu_lo) Su); coefficients only.
    """
    g = theta.grid

    theta_pad = to_physical_padded(theta)
    _guard(theta_pad, "temperature_samples", time)
    kvar = laws.a.evaluate(theta_pad) - laws.a.lower_bound
    mvar = laws.b.evaluate(theta_pad) - laws.b.lower_bound

    u1p = to_physical_padded(u.components[0])
    u2p = to_physical_padded(u.components[1])
    _guard(u1p, "velocity_samples", time)
    _guard(u2p, "velocity_samples", time)

    gt = gradient(theta)
    txp = to_physical_padded(gt.components[0])
    typ = to_physical_padded(gt.components[1])

    adv_t = u1p * txp + u2p * typ
    _guard(adv_t, "transport_theta", time)
    flux1 = kvar * txp
    flux2 = kvar * typ
    _guard(flux1, "diffusion_theta", time)
    adv_theta = truncate(from_physical_padded(adv_t, g), cutoff)
    diff_rem = truncate(
        divergence(
            VectorSpectralField(
                (from_physical_padded(flux1, g), from_physical_padded(flux2, g))
            )
        ),
        cutoff,
    )

    gu1 = gradient(u.components[0])
    gu2 = gradient(u.components[1])
    u1xp = to_physical_padded(gu1.components[0])
    u1yp = to_physical_padded(gu1.components[1])
    u2xp = to_physical_padded(gu2.components[0])
    u2yp = to_physical_padded(gu2.components[1])

    adv_1 = u1p * u1xp + u2p * u1yp
    adv_2 = u1p * u2xp + u2p * u2yp
    _guard(adv_1, "transport_u", time)
    _guard(adv_2, "transport_u", time)
    v11 = mvar * (2.0 * u1xp)
    v12 = mvar * (u1yp + u2xp)
    v22 = mvar * (2.0 * u2yp)
    _guard(v11, "viscosity_u", time)

    h11 = from_physical_padded(v11, g)
    h12 = from_physical_padded(v12, g)
    h22 = from_physical_padded(v22, g)
    visc_1 = truncate(divergence(VectorSpectralField((h11, h12))), cutoff)
    visc_2 = truncate(divergence(VectorSpectralField((h12, h22))), cutoff)

    return {
        "adv_theta": adv_theta.coeffs,
        "diff_rem": diff_rem.coeffs,
        "adv_u": (
            truncate(from_physical_padded(adv_1, g), cutoff).coeffs,
            truncate(from_physical_padded(adv_2, g), cutoff).coeffs,
        ),
        "visc_rem": (visc_1.coeffs, visc_2.coeffs),
    }


def _full_tendency(state: SimState):
    """dtheta coefficients and the unprojected momentum forcing (G1, G2)."""
    g = state.grid
    terms = _boussinesq_terms(state.theta, state.u, state.laws, state.cutoff, state.time)
    lap = _laplacian_multiplier(g)
    tc = state.theta.coeffs
    u1c, u2c = state.u.components[0].coeffs, state.u.components[1].coeffs
    dtheta = state.laws.a.lower_bound * lap * tc + terms["diff_rem"] - terms["adv_theta"]
    g1 = state.laws.b.lower_bound * lap * u1c + terms["visc_rem"][0] - terms["adv_u"][0]
    g2 = (
        state.laws.b.lower_bound * lap * u2c
        + terms["visc_rem"][1]
        - terms["adv_u"][1]
        + state.beta * tc
    )
    return dtheta, g1, g2


def rhs(state: SimState):
    """Instantaneous tendency (d theta/dt, d u/dt) with the momentum part
    projected onto divergence-free fields."""
    g = state.grid
    dtheta, g1, g2 = _full_tendency(state)
    du = leray_project(
        VectorSpectralField((ScalarSpectralField(g, g1), ScalarSpectralField(g, g2)))
    )
    return ScalarSpectralField(g, dtheta), du


def recover_pressure(state: SimState) -> ScalarSpectralField:
    """Mean-zero pressure whose gradient is the curl-free part of the momentum
    forcing (buoyancy + transport + full viscous term)."""
    g = state.grid
    _, g1, g2 = _full_tendency(state)
    div = divergence(
        VectorSpectralField((ScalarSpectralField(g, g1), ScalarSpectralField(g, g2)))
    )
    lap = _laplacian_multiplier(g)
    coeffs = np.where(lap != 0.0, div.coeffs / np.where(lap != 0.0, lap, 1.0), 0.0)
    return ScalarSpectralField(g, coeffs)


def _bouss_explicit(grid: Grid, laws: LawPair, beta: float, cutoff: float):
    def explicit(ws, t):
        theta = ScalarSpectralField(grid, ws[0])
        u = VectorSpectralField(
            (ScalarSpectralField(grid, ws[1]), ScalarSpectralField(grid, ws[2])),
            divfree_certified=True,
        )
        terms = _boussinesq_terms(theta, u, laws, cutoff, t)
        e_theta = terms["diff_rem"] - terms["adv_theta"]
        f1 = terms["visc_rem"][0] - terms["adv_u"][0]
        f2 = terms["visc_rem"][1] - terms["adv_u"][1] + beta * ws[0]
        proj = leray_project(
            VectorSpectralField((ScalarSpectralField(grid, f1), ScalarSpectralField(grid, f2)))
        )
        return (e_theta, proj.components[0].coeffs, proj.components[1].coeffs)

    return explicit


def _bouss_lams(grid: Grid, laws: LawPair):
    lap = _laplacian_multiplier(grid)
    return (laws.a.lower_bound * lap, laws.b.lower_bound * lap, laws.b.lower_bound * lap)


def _rebuild(state: SimState, ws, t: float) -> SimState:
    g = state.grid
    return SimState(
        ScalarSpectralField(g, ws[0]),
        VectorSpectralField(
            (ScalarSpectralField(g, ws[1]), ScalarSpectralField(g, ws[2])),
            divfree_certified=True,
        ),
        t,
        state.cutoff,
        state.laws,
        state.beta,
    )


# --- public stepping -----------------------------------------------------------


def _single_dt(state: SimState, cfg: TimeStepperConfig) -> float:
    bound = stability_bound(state)
    if cfg.dt == "auto":
        return cfg.cfl_safety * (bound if math.isfinite(bound) else state.grid.spacing)
    dt = float(cfg.dt)
    if dt > bound * (1 + 1e-9):
        raise StepRejectedError(dt, bound, state.time)
    return dt


def step(state: SimState, cfg: TimeStepperConfig) -> SimState:
    """Advance one step of cfg.scheme; auto dt resolves against the current
    stability bound, fixed dt is rejected when it exceeds the bound."""
    dt = _single_dt(state, cfg)
    g = state.grid
    advance = _make_advance(
        cfg.scheme, _bouss_lams(g, state.laws), dt, _bouss_explicit(g, state.laws, state.beta, state.cutoff)
    )
    ws = advance(
        (state.theta.coeffs, state.u.components[0].coeffs, state.u.components[1].coeffs),
        state.time,
    )
    return _rebuild(state, ws, state.time + dt)


def _check_support(state: SimState) -> None:
    defect = friedrich_defect(state)
    if defect > _SUPPORT_TOL:
        raise NumericError(
            f"frequency support leaked outside the ball (defect {defect:.3e}) at t={state.time:.6g}"
        )


def run(initial: SimState, cfg: TimeStepperConfig, probes=()) -> Trajectory:
    """March to t_end, recording a ledger row every step and snapshots every
    snapshot_interval (the initial and final states are always included)."""
    grid = initial.grid
    horizon = cfg.t_end - initial.time
    if horizon < -1e-12:
        raise ConfigError(f"t_end={cfg.t_end} precedes the initial time {initial.time}")
    bound0 = stability_bound(initial)
    if cfg.dt != "auto" and float(cfg.dt) > bound0 * (1 + 1e-9):
        raise StepRejectedError(float(cfg.dt), bound0, initial.time)
    dt, nsteps, tail = _resolve_steps(max(horizon, 0.0), cfg, bound0, grid.spacing)

    ledger = EnergyLedger(probes)
    ledger.record(initial)
    _check_support(initial)
    snapshots = [(initial.time, initial)]
    if nsteps == 0 and tail == 0.0:
        return Trajectory(ledger, snapshots, initial, dt, cfg.scheme)

    lams = _bouss_lams(grid, initial.laws)
    explicit = _bouss_explicit(grid, initial.laws, initial.beta, initial.cutoff)
    advance = _make_advance(cfg.scheme, lams, dt, explicit)
    interval = cfg.snapshot_interval if cfg.snapshot_interval is not None else horizon
    next_mark = initial.time + interval

    state = initial
    ws = (state.theta.coeffs, state.u.components[0].coeffs, state.u.components[1].coeffs)
    plan = [dt] * nsteps + ([tail] if tail > 0.0 else [])
    for k, h in enumerate(plan):
        bound = stability_bound(state)
        if h > bound * (1 + 1e-9):
            raise StepRejectedError(h, bound, state.time)
        if h != dt:
            advance = _make_advance(cfg.scheme, lams, h, explicit)
        try:
            ws = advance(ws, state.time)
        except NumericBlowupError as err:
            raise NumericBlowupError(err.term, err.time, k + 1) from None
        t = initial.time + (k + 1) * dt if h == dt else cfg.t_end
        state = _rebuild(state, ws, t)
        ledger.record(state)
        if t >= next_mark - 1e-9 * max(dt, tail):
            snapshots.append((t, state))
            _check_support(state)
            while next_mark <= t + 1e-9 * max(dt, tail):
                next_mark += interval
    if snapshots[-1][0] != state.time:
        snapshots.append((state.time, state))
        _check_support(state)
    return Trajectory(ledger, snapshots, state, dt, cfg.scheme)


# --- the linear parabolic problem -------------------------------------------------


def _padded_mesh(grid: Grid):
    m = grid.padded_n
    xs = (2 * np.pi * grid.box_length / m) * np.arange(m)
    return np.meshgrid(xs, xs, indexing="ij")


def _kappa_sampler(problem: ParabolicProblem, grid: Grid):
    lo, hi = problem.kappa_bounds
    x1, x2 = _padded_mesh(grid)
    shape = (grid.padded_n, grid.padded_n)

    def sample(t: float) -> np.ndarray:
        if problem.kappa is None or isinstance(problem.kappa, (int, float)):
            value = lo if problem.kappa is None else float(problem.kappa)
            return np.full(shape, value)
        samples = np.asarray(problem.kappa(t, x1, x2), dtype=float)
        if samples.shape != shape:
            raise ConfigError(f"kappa samples {samples.shape} do not match the padded grid {shape}")
        tol = 1e-9 * max(1.0, hi)
        if samples.min() < lo - tol or samples.max() > hi + tol:
            raise ConfigError("kappa samples leave the declared bounds")
        return samples

    if problem.steady:
        frozen = sample(0.0)
        return lambda t: frozen
    return sample


def _velocity_sampler(problem: ParabolicProblem, grid: Grid):
    def pads(t: float):
        v = problem.velocity(t) if callable(problem.velocity) else problem.velocity
        if v is None:
            return None
        if v.grid != grid:
            raise GridMismatchError("advecting velocity lives on a different grid")
        if not v.divfree_certified and divergence_defect(v) > _DIVFREE_TOL:
            raise ValueError("advecting velocity is not divergence-free to tolerance")
        return (to_physical_padded(v.components[0]), to_physical_padded(v.components[1]))

    if problem.steady or problem.velocity is None or not callable(problem.velocity):
        frozen = pads(0.0)
        return lambda t: frozen
    return pads


def _parabolic_explicit(problem: ParabolicProblem, grid: Grid):
    lo = problem.kappa_bounds[0]
    kappa_at = _kappa_sampler(problem, grid)
    velocity_at = _velocity_sampler(problem, grid)
    x1, x2 = _padded_mesh(grid)

    def explicit(ws, t):
        psi = ScalarSpectralField(grid, ws[0])
        gp = gradient(psi)
        txp = to_physical_padded(gp.components[0])
        typ = to_physical_padded(gp.components[1])
        out = np.zeros_like(ws[0])

        vel = velocity_at(t)
        if vel is not None:
            adv = vel[0] * txp + vel[1] * typ
            _guard(adv, "transport_psi", t)
            out -= from_physical_padded(adv, grid).coeffs

        kvar = kappa_at(t) - lo
        flux1 = kvar * txp
        flux2 = kvar * typ
        _guard(flux1, "diffusion_psi", t)
        out += divergence(
            VectorSpectralField(
                (from_physical_padded(flux1, grid), from_physical_padded(flux2, grid))
            )
        ).coeffs

        if problem.source is not None:
            src = np.asarray(problem.source(t, x1, x2), dtype=float)
            _guard(src, "source_psi", t)
            out += from_physical_padded(src, grid).coeffs
        return (out,)

    return explicit


def solve_parabolic(problem: ParabolicProblem, cfg: TimeStepperConfig) -> ParabolicTrajectory:
    """Integrate the linear problem with the same stepper machinery, full band."""
    grid = problem.psi0.grid
    lo, hi = problem.kappa_bounds
    dx = grid.spacing

    terms = [math.inf] + _coefficient_terms(hi - lo, dx, grid.max_radius)
    vel0 = _velocity_sampler(problem, grid)(0.0)
    if vel0 is not None:
        umax = float(np.sqrt((vel0[0] ** 2 + vel0[1] ** 2).max()))
        if umax > 0:
            terms.append(dx / umax)
    bound = min(terms)
    if cfg.dt != "auto" and float(cfg.dt) > bound * (1 + 1e-9):
        raise StepRejectedError(float(cfg.dt), bound, 0.0)
    dt, nsteps, tail = _resolve_steps(cfg.t_end, cfg, bound, dx)

    times = [0.0]
    norms = [l2_norm(problem.psi0)]
    snapshots = [(0.0, problem.psi0)]
    field = problem.psi0
    if nsteps == 0 and tail == 0.0:
        return ParabolicTrajectory(
            np.array(times), np.array(norms), snapshots, field, dt, cfg.scheme
        )

    lams = (lo * _laplacian_multiplier(grid),)
    explicit = _parabolic_explicit(problem, grid)
    advance = _make_advance(cfg.scheme, lams, dt, explicit)
    interval = cfg.snapshot_interval if cfg.snapshot_interval is not None else cfg.t_end
    next_mark = interval

    ws = (problem.psi0.coeffs,)
    t = 0.0
    plan = [dt] * nsteps + ([tail] if tail > 0.0 else [])
    for k, h in enumerate(plan):
        if h != dt:
            advance = _make_advance(cfg.scheme, lams, h, explicit)
        try:
            ws = advance(ws, t)
        except NumericBlowupError as err:
            raise NumericBlowupError(err.term, err.time, k + 1) from None
        t = (k + 1) * dt if h == dt else cfg.t_end
        field = ScalarSpectralField(grid, ws[0])
        times.append(t)
        norms.append(l2_norm(field))
        if t >= next_mark - 1e-9 * max(dt, tail):
            snapshots.append((t, field))
            while next_mark <= t + 1e-9 * max(dt, tail):
                next_mark += interval
    if snapshots[-1][0] != t:
        snapshots.append((t, field))
    return ParabolicTrajectory(np.array(times), np.array(norms), snapshots, field, dt, cfg.scheme)
