"""Temperature-dependent diffusivity laws and the primitive transform.

A coefficient law is a bounded scalar function z -> a(z) in [lower, upper] with
0 < lower, together with certified derivative data.  The primitive transform
provides A(z) = int_0^z a and its inverse, the change of unknown that trades
the divergence-form diffusion operator for a Laplacian acting on A(theta).

Builtin kinds:
    affine_clamped  intercept + slope*z, smoothly clamped into [lower, upper]
    tanh_smooth     midpoint + halfwidth * tanh(rate*(z - center))
    exp_clamped     prefactor * exp(activation/(offset + z)), smoothly clamped
                    (the Arrhenius-type viscosity law)

Hard clipping would leave the clamped laws merely Lipschitz; the clamp used
here is a C2 blend (tanh saturation over a margin of 5% of the bound gap), so
second derivatives stay bounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline, PchipInterpolator

from .errors import ConfigError, DomainError, NumericError
from .spectral import (
    ScalarSpectralField,
    to_physical,
    to_physical_padded,
    to_spectral,
)

_CLAMP_MARGIN = 0.05  # fraction of (upper - lower) used by the C2 blend


@dataclass(frozen=True)
class CoefficientLaw:
    """A bounded C2 coefficient law with certified constants.

    lipschitz_constant dominates |a'| everywhere and curvature_bound dominates
    |a''|; the bounds are attained (constant laws) or approached in the
    saturated tails.
    """

    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    derivative: Callable[[np.ndarray], np.ndarray]
    lower_bound: float
    upper_bound: float
    lipschitz_constant: float
    second_derivative: Callable[[np.ndarray], np.ndarray] | None = None
    curvature_bound: float | None = None
    params: Mapping[str, float] | None = None

    def __call__(self, z):
        return self.evaluate(z)


def _smooth_clamp(lower: float, upper: float):
    """C2 map of the real line into [lower, upper], identity on the interior.

    Outside [lower+m, upper-m] the value saturates along m*tanh((y-joint)/m),
    which matches value, slope 1, and zero curvature at the joints; the clamp
    slope never exceeds 1.
    """
    m = _CLAMP_MARGIN * (upper - lower)
    lo_joint = lower + m
    hi_joint = upper - m

    def clamp(y):
        y = np.asarray(y, dtype=float)
        out = np.where(y > hi_joint, hi_joint + m * np.tanh((y - hi_joint) / m), y)
        out = np.where(y < lo_joint, lo_joint + m * np.tanh((y - lo_joint) / m), out)
        return out

    def clamp_deriv(y):
        y = np.asarray(y, dtype=float)
        with np.errstate(over="ignore"):
            out = np.where(y > hi_joint, np.cosh((y - hi_joint) / m) ** -2.0, 1.0)
            out = np.where(y < lo_joint, np.cosh((y - lo_joint) / m) ** -2.0, out)
        return out

    def clamp_second(y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        for joint, active in ((hi_joint, y > hi_joint), (lo_joint, y < lo_joint)):
            t = np.tanh((y - joint) / m)
            out = np.where(active, (-2.0 / m) * t * (1.0 - t * t), out)
        return out

    # sup |clamp''| = (2/m) * max |t(1-t^2)| = (2/m) * 2/(3*sqrt(3))
    second_sup = (4.0 / (3.0 * np.sqrt(3.0))) / m
    return clamp, clamp_deriv, clamp_second, second_sup


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _get(params: Mapping[str, float], key: str, default=None) -> float:
    if key in params:
        return float(params[key])
    if default is None:
        raise ConfigError(f"missing law parameter '{key}'")
    return float(default)


def _constant_law(name: str, value: float, params: Mapping[str, float]) -> CoefficientLaw:
    _require(value > 0, f"{name}: constant value must be positive, got {value}")

    def ev(z):
        return np.full_like(np.asarray(z, dtype=float), value)

    def zero(z):
        return np.zeros_like(np.asarray(z, dtype=float))

    return CoefficientLaw(
        name=name,
        evaluate=ev,
        derivative=zero,
        lower_bound=value,
        upper_bound=value,
        lipschitz_constant=0.0,
        second_derivative=zero,
        curvature_bound=0.0,
        params=dict(params),
    )


def _clamped_law(
    name: str,
    raw: Callable,
    raw_deriv: Callable,
    raw_second: Callable,
    lower: float,
    upper: float,
    params: Mapping[str, float],
) -> CoefficientLaw:
    """Compose a raw law with the C2 clamp; derivatives via the chain rule.

    Deep in the saturated tails clamp' underflows to exactly 0 while the raw
    derivative may overflow; the true products vanish there (double-exponential
    saturation beats any raw growth), so those slots are forced to 0 instead
    of letting 0*inf poison the array.
    """
    clamp, clamp_d, clamp_dd, _ = _smooth_clamp(lower, upper)

    def ev(z):
        return clamp(raw(np.asarray(z, dtype=float)))

    def dv(z):
        z = np.asarray(z, dtype=float)
        cd = clamp_d(raw(z))
        with np.errstate(over="ignore", invalid="ignore"):
            out = cd * raw_deriv(z)
        return np.where(cd == 0.0, 0.0, out)

    def dv2(z):
        z = np.asarray(z, dtype=float)
        y = raw(z)
        cd = clamp_d(y)
        with np.errstate(over="ignore", invalid="ignore"):
            gp = raw_deriv(z)
            out = clamp_dd(y) * gp * gp + cd * raw_second(z)
        return np.where(cd == 0.0, 0.0, out)

    return CoefficientLaw(
        name=name,
        evaluate=ev,
        derivative=dv,
        lower_bound=lower,
        upper_bound=upper,
        lipschitz_constant=np.nan,  # filled in by the caller
        second_derivative=dv2,
        curvature_bound=np.nan,
        params=dict(params),
    )


def _certify_by_sampling(law: CoefficientLaw, extra_points: np.ndarray) -> CoefficientLaw:
    """Replace nan Lipschitz/curvature constants by 1.05x dense-sample maxima."""
    zs = np.unique(np.concatenate([np.linspace(-200.0, 200.0, 40001), extra_points]))
    lip = float(np.max(np.abs(law.derivative(zs))))
    curv = float(np.max(np.abs(law.second_derivative(zs))))
    return CoefficientLaw(
        name=law.name,
        evaluate=law.evaluate,
        derivative=law.derivative,
        lower_bound=law.lower_bound,
        upper_bound=law.upper_bound,
        lipschitz_constant=1.05 * lip,
        second_derivative=law.second_derivative,
        curvature_bound=1.05 * curv,
        params=law.params,
    )


def builtin_law(kind: str, params: Mapping[str, float]) -> CoefficientLaw:
    """Construct one of the builtin coefficient laws.

    Args:
        kind: "affine_clamped", "tanh_smooth", or "exp_clamped".
        params: kind-specific parameters; every kind takes lower/upper bounds.

    Raises:
        ConfigError: unknown kind, missing parameters, or invalid bounds.
    """
    if kind == "tanh_smooth":
        lower = _get(params, "lower")
        upper = _get(params, "upper")
        rate = _get(params, "rate", 1.0)
        center = _get(params, "center", 0.0)
        _require(lower > 0, f"tanh_smooth: lower bound must be positive, got {lower}")
        _require(upper >= lower, "tanh_smooth: upper < lower")
        if upper == lower:
            return _constant_law("tanh_smooth", lower, params)
        mid = 0.5 * (lower + upper)
        halfwidth = 0.5 * (upper - lower)

        def ev(z):
            return mid + halfwidth * np.tanh(rate * (np.asarray(z, dtype=float) - center))

        def dv(z):
            t = np.tanh(rate * (np.asarray(z, dtype=float) - center))
            return halfwidth * rate * (1.0 - t * t)

        def dv2(z):
            t = np.tanh(rate * (np.asarray(z, dtype=float) - center))
            return -2.0 * halfwidth * rate * rate * t * (1.0 - t * t)

        return CoefficientLaw(
            name="tanh_smooth",
            evaluate=ev,
            derivative=dv,
            lower_bound=lower,
            upper_bound=upper,
            lipschitz_constant=halfwidth * abs(rate),
            second_derivative=dv2,
            # max |t(1-t^2)| over (-1,1) is 2/(3*sqrt(3))
            curvature_bound=2.0 * halfwidth * rate * rate * 2.0 / (3.0 * np.sqrt(3.0)),
            params=dict(params),
        )

    if kind == "affine_clamped":
        lower = _get(params, "lower")
        upper = _get(params, "upper")
        intercept = _get(params, "intercept")
        slope = _get(params, "slope", 0.0)
        _require(lower > 0, f"affine_clamped: lower bound must be positive, got {lower}")
        _require(upper > lower, "affine_clamped: upper must exceed lower")
        if slope == 0.0:
            clamp, _, _, _ = _smooth_clamp(lower, upper)
            return _constant_law("affine_clamped", float(clamp(intercept)), params)

        def raw(z):
            return intercept + slope * np.asarray(z, dtype=float)

        def raw_d(z):
            return np.full_like(np.asarray(z, dtype=float), slope)

        def raw_dd(z):
            return np.zeros_like(np.asarray(z, dtype=float))

        law = _clamped_law("affine_clamped", raw, raw_d, raw_dd, lower, upper, params)
        _, _, _, clamp_dd_sup = _smooth_clamp(lower, upper)
        return CoefficientLaw(
            name=law.name,
            evaluate=law.evaluate,
            derivative=law.derivative,
            lower_bound=lower,
            upper_bound=upper,
            lipschitz_constant=abs(slope),  # clamp slope <= 1
            second_derivative=law.second_derivative,
            curvature_bound=clamp_dd_sup * slope * slope,
            params=dict(params),
        )

    if kind == "exp_clamped":
        lower = _get(params, "lower")
        upper = _get(params, "upper")
        prefactor = _get(params, "prefactor")
        activation = _get(params, "activation")
        offset = _get(params, "offset")
        _require(lower > 0, f"exp_clamped: lower bound must be positive, got {lower}")
        _require(upper > lower, "exp_clamped: upper must exceed lower")
        _require(prefactor > 0, "exp_clamped: prefactor must be positive")

        # The raw argument activation/(offset+z) has a pole at z = -offset; the
        # law continues past it at its one-sided saturation limit (the clamp has
        # flattened it long before), keeping evaluation total and continuous.
        def arg(z):
            denom = np.asarray(z, dtype=float) + offset
            with np.errstate(divide="ignore"):
                return np.where(
                    denom > 0,
                    activation / np.maximum(denom, 1e-300),
                    np.copysign(np.inf, activation),
                )

        def raw(z):
            return prefactor * np.exp(np.minimum(arg(z), 700.0))

        def raw_d(z):
            denom = np.asarray(z, dtype=float) + offset
            safe = np.maximum(denom, 1e-150)
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                out = -activation / (safe * safe) * raw(z)
            return np.where(denom > 0, out, 0.0)

        def raw_dd(z):
            denom = np.asarray(z, dtype=float) + offset
            safe = np.maximum(denom, 1e-150)
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                grow = activation / (safe * safe)
                out = (grow * grow + 2.0 * activation / safe**3) * raw(z)
            return np.where(denom > 0, out, 0.0)

        law = _clamped_law("exp_clamped", raw, raw_d, raw_dd, lower, upper, params)
        near_pole = -offset + np.linspace(-2.0, 2.0, 8001)
        return _certify_by_sampling(law, near_pole)

    raise ConfigError(f"unknown coefficient law kind '{kind}'")


def law_from_config(section: Mapping[str, object]) -> CoefficientLaw:
    """Build a law from a config mapping holding 'kind' plus its parameters."""
    if "kind" not in section:
        raise ConfigError("coefficient law section needs a 'kind'")
    params = {k: v for k, v in section.items() if k != "kind"}
    return builtin_law(str(section["kind"]), params)


# --- primitive transform ------------------------------------------------------


@dataclass(frozen=True)
class PrimitiveTransform:
    """A(z) = int_0^z law(s) ds with a certified inverse, on [z_min, z_max].

    The forward map is the antiderivative of a cubic spline through exact law
    values, refined at construction until it agrees with adaptive quadrature
    to 1e-10 relative; the inverse is a monotone interpolant polished by two
    Newton steps against the forward table, so the round trip closes to much
    better than 1e-10.
    """

    law: CoefficientLaw
    z_min: float
    z_max: float
    w_min: float
    w_max: float
    _anti: Callable
    _shift: float
    _inverse_seed: Callable

    @classmethod
    def build(
        cls, law: CoefficientLaw, z_range: tuple[float, float] = (-64.0, 64.0)
    ) -> "PrimitiveTransform":
        z_min, z_max = float(z_range[0]), float(z_range[1])
        if not (z_min < 0.0 < z_max):
            raise ConfigError("primitive transform range must contain 0")

        probes = np.linspace(0.997 * z_min, 0.997 * z_max, 23)
        breaks = []
        if law.params and "offset" in law.params:
            pole = -float(law.params["offset"])
            if z_min < pole < z_max:
                breaks.append(pole)

        def anchor_integral(z):
            pts = [p for p in breaks if min(0.0, z) < p < max(0.0, z)]
            val, _ = quad(
                law.evaluate, 0.0, z, epsabs=1e-12, epsrel=1e-12, limit=400,
                points=pts or None,
            )
            return val

        anchor = np.array([anchor_integral(z) for z in probes])

        nodes = 4097
        while True:
            zs = np.linspace(z_min, z_max, nodes)
            anti = CubicSpline(zs, law.evaluate(zs)).antiderivative()
            shift = float(anti(0.0))
            err = np.abs((anti(probes) - shift) - anchor) / (1.0 + np.abs(anchor))
            if err.max() < 1e-10 or nodes >= 65537:
                break
            nodes = 2 * (nodes - 1) + 1
        if err.max() > 1e-9:
            raise NumericError(
                f"primitive table for '{law.name}' disagrees with quadrature "
                f"by {err.max():.3e} at {nodes} nodes"
            )

        ws = anti(zs) - shift  # strictly increasing since law >= lower > 0
        seed = PchipInterpolator(ws, zs)
        pt = cls(
            law=law,
            z_min=z_min,
            z_max=z_max,
            w_min=float(ws[0]),
            w_max=float(ws[-1]),
            _anti=anti,
            _shift=shift,
            _inverse_seed=seed,
        )
        check = np.linspace(z_min, z_max, 4001)
        defect = float(np.abs(pt.inverse(pt.forward(check)) - check).max())
        if defect > 1e-10 * max(1.0, abs(z_min), abs(z_max)):
            raise NumericError(
                f"primitive transform for '{law.name}' failed to certify: "
                f"round-trip defect {defect:.3e}"
            )
        return pt

    def forward(self, z):
        z = np.asarray(z, dtype=float)
        if z.size and (z.min() < self.z_min - 1e-12 or z.max() > self.z_max + 1e-12):
            raise DomainError(
                f"primitive transform evaluated outside [{self.z_min}, {self.z_max}]"
            )
        return self._anti(z) - self._shift

    def inverse(self, w):
        w = np.asarray(w, dtype=float)
        tol = 1e-9 * max(1.0, abs(self.w_min), abs(self.w_max))
        if w.size and (w.min() < self.w_min - tol or w.max() > self.w_max + tol):
            raise DomainError(
                f"inverse primitive evaluated outside [{self.w_min:.6g}, {self.w_max:.6g}]"
            )
        z = self._inverse_seed(np.clip(w, self.w_min, self.w_max))
        for _ in range(2):  # Newton with the exact slope; law >= lower > 0
            z = z - ((self._anti(z) - self._shift) - w) / self.law.evaluate(z)
            z = np.clip(z, self.z_min, self.z_max)
        return z


# --- field-level operations ---------------------------------------------------


def apply_law(law: CoefficientLaw, theta: ScalarSpectralField) -> np.ndarray:
    """Coefficient samples on the 3/2-padded physical grid of theta."""
    samples = to_physical_padded(theta)
    if not np.all(np.isfinite(samples)):
        raise NumericError("non-finite temperature samples in apply_law")
    return law.evaluate(samples)


def eta_forward(pt: PrimitiveTransform, theta: ScalarSpectralField) -> ScalarSpectralField:
    """The transformed unknown A(theta), evaluated pointwise on theta's own grid."""
    values = to_physical(theta)
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite temperature samples in eta_forward")
    return to_spectral(np.asarray(pt.forward(values)), theta.grid)


def eta_backward(pt: PrimitiveTransform, eta: ScalarSpectralField) -> ScalarSpectralField:
    """Invert the primitive transform pointwise; errors outside the table range."""
    values = to_physical(eta)
    if not np.all(np.isfinite(values)):
        raise NumericError("non-finite samples in eta_backward")
    return to_spectral(np.asarray(pt.inverse(values)), eta.grid)
