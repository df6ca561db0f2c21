"""Coefficient laws: bounds, smoothness, and the primitive transform."""

import numpy as np
import pytest

from bouss2d.errors import ConfigError, DomainError, NumericError
from bouss2d.laws import (
    PrimitiveTransform,
    apply_law,
    builtin_law,
    eta_backward,
    eta_forward,
    law_from_config,
)
from bouss2d.spectral import Grid, l2_norm, to_physical, to_spectral


def tanh_law(lower=1.0, upper=2.0, rate=1.0, center=0.0):
    return builtin_law(
        "tanh_smooth", {"lower": lower, "upper": upper, "rate": rate, "center": center}
    )


ALL_LAWS = [
    tanh_law(),
    tanh_law(1.0, 3.0, rate=2.5, center=0.7),
    builtin_law("affine_clamped", {"lower": 0.5, "upper": 1.5, "intercept": 1.0, "slope": 0.25}),
    builtin_law("affine_clamped", {"lower": 1.0, "upper": 3.0, "intercept": 2.0, "slope": 0.0}),
    builtin_law(
        "exp_clamped",
        {"lower": 0.5, "upper": 4.0, "prefactor": 0.5, "activation": 2.0, "offset": 3.0},
    ),
    builtin_law(
        "exp_clamped",
        {"lower": 0.8, "upper": 2.0, "prefactor": 1.2, "activation": -1.5, "offset": 0.5},
    ),
]


class TestBuiltinLaws:
    def test_tanh_closed_form(self):
        """Midpoint value, slope at the center, and the stated Lipschitz constant."""
        law = tanh_law(1.0, 2.0, rate=1.0)
        assert law(0.0) == pytest.approx(1.5, abs=1e-15)
        assert law.derivative(0.0) == pytest.approx(0.5, abs=1e-15)
        assert law.lipschitz_constant == pytest.approx(0.5)
        zs = np.linspace(-30, 30, 2001)
        assert np.abs(law(zs) - (1.5 + 0.5 * np.tanh(zs))).max() < 1e-14

    def test_affine_identity_zone(self):
        """Inside the unclamped band the law is exactly affine."""
        law = builtin_law(
            "affine_clamped", {"lower": 1.0, "upper": 3.0, "intercept": 2.0, "slope": 0.5}
        )
        zs = np.linspace(-1.7, 1.7, 101)  # raw in [1.15, 2.85], margin is 0.1
        assert np.abs(law(zs) - (2.0 + 0.5 * zs)).max() == 0.0
        assert np.abs(law.derivative(zs) - 0.5).max() == 0.0

    def test_affine_zero_slope_collapses_to_constant(self):
        law = builtin_law(
            "affine_clamped", {"lower": 1.0, "upper": 3.0, "intercept": 2.0, "slope": 0.0}
        )
        assert law.lower_bound == law.upper_bound == 2.0
        assert law.lipschitz_constant == 0.0
        assert np.all(law(np.linspace(-9, 9, 50)) == 2.0)

    def test_exp_value_in_identity_zone(self):
        law = builtin_law(
            "exp_clamped",
            {"lower": 0.5, "upper": 4.0, "prefactor": 0.5, "activation": 2.0, "offset": 3.0},
        )
        assert law(0.0) == pytest.approx(0.5 * np.exp(2.0 / 3.0), rel=1e-14)

    def test_exp_continues_across_pole(self):
        """Both sides of z = -offset sit at the same saturated bound."""
        law = builtin_law(
            "exp_clamped",
            {"lower": 0.5, "upper": 4.0, "prefactor": 0.5, "activation": 2.0, "offset": 3.0},
        )
        zs = -3.0 + np.array([-1e-6, -1e-12, 0.0, 1e-12, 1e-9])
        vals = law(zs)
        assert np.all(np.isfinite(vals))
        assert np.abs(vals - 4.0).max() < 1e-12
        # negative activation saturates at the lower bound instead
        law2 = builtin_law(
            "exp_clamped",
            {"lower": 0.8, "upper": 2.0, "prefactor": 1.2, "activation": -1.5, "offset": 0.5},
        )
        assert np.abs(law2(-0.5 + np.array([-1e-9, 0.0, 1e-12])) - 0.8).max() < 1e-12

    def test_bounds_hold_on_dense_and_random_samples(self):
        """Every builtin stays inside [lower, upper] over a wide sweep."""
        rng = np.random.default_rng(20240811)
        zs = np.concatenate([np.linspace(-50, 50, 20001), rng.normal(0, 20, 10000)])
        for law in ALL_LAWS:
            vals = law(zs)
            assert np.all(np.isfinite(vals)), law.name
            assert vals.min() >= law.lower_bound - 1e-12, law.name
            assert vals.max() <= law.upper_bound + 1e-12, law.name

    def test_lipschitz_and_curvature_certificates(self):
        """Sampled |a'| and |a''| never exceed the stored constants."""
        rng = np.random.default_rng(77)
        zs = np.concatenate([np.linspace(-50, 50, 20001), rng.normal(0, 15, 10000)])
        for law in ALL_LAWS:
            d1 = law.derivative(zs)
            d2 = law.second_derivative(zs)
            assert np.all(np.isfinite(d1)), law.name
            assert np.all(np.isfinite(d2)), law.name
            assert np.abs(d1).max() <= law.lipschitz_constant * (1 + 1e-12), law.name
            assert np.abs(d2).max() <= law.curvature_bound * (1 + 1e-12), law.name

    @staticmethod
    def clamp_joints(law):
        """z values where the raw law meets a clamp joint (C2 but not C3 there)."""
        p = law.params or {}
        lo, hi = law.lower_bound, law.upper_bound
        m = 0.05 * (hi - lo)
        joints = []
        if law.name == "affine_clamped" and p.get("slope", 0.0):
            for j in (lo + m, hi - m):
                joints.append((j - p["intercept"]) / p["slope"])
        if law.name == "exp_clamped":
            for j in (lo + m, hi - m):
                r = j / p["prefactor"]
                if r > 0 and np.log(r) != 0:
                    joints.append(p["activation"] / np.log(r) - p["offset"])
        return joints

    def test_derivative_matches_finite_differences(self):
        """Richardson-extrapolated differences of a reproduce a' and a''.

        Points within a stencil width of a clamp joint are skipped: the laws
        are C2 by construction, not C3, so difference quotients straddling a
        joint see the third-derivative jump.
        """
        base = np.linspace(-8, 8, 161)
        h = 1e-4
        for law in ALL_LAWS:
            zs = base
            for j in self.clamp_joints(law):
                zs = zs[np.abs(zs - j) > 0.01]
            d_h = (law(zs + h) - law(zs - h)) / (2 * h)
            d_h2 = (law(zs + h / 2) - law(zs - h / 2)) / h
            fd = (4 * d_h2 - d_h) / 3
            assert np.abs(fd - law.derivative(zs)).max() < 1e-8, law.name
            s_h = (law.derivative(zs + h) - law.derivative(zs - h)) / (2 * h)
            s_h2 = (law.derivative(zs + h / 2) - law.derivative(zs - h / 2)) / h
            fd2 = (4 * s_h2 - s_h) / 3
            assert np.abs(fd2 - law.second_derivative(zs)).max() < 1e-6, law.name

    def test_lipschitz_attained_for_tanh(self):
        law = tanh_law(1.0, 3.0, rate=2.0, center=-0.4)
        assert law.derivative(-0.4) == pytest.approx(law.lipschitz_constant, rel=1e-15)

    def test_validation_errors(self):
        with pytest.raises(ConfigError):
            builtin_law("tanh_smooth", {"lower": 0.0, "upper": 2.0})
        with pytest.raises(ConfigError):
            builtin_law("tanh_smooth", {"lower": -1.0, "upper": 2.0})
        with pytest.raises(ConfigError):
            builtin_law("affine_clamped", {"lower": 1.0, "upper": 0.5, "intercept": 1.0})
        with pytest.raises(ConfigError):
            builtin_law("exp_clamped", {"lower": 1.0, "upper": 2.0, "prefactor": -1.0,
                                        "activation": 1.0, "offset": 1.0})
        with pytest.raises(ConfigError):
            builtin_law("polynomial", {"lower": 1.0, "upper": 2.0})
        with pytest.raises(ConfigError):
            builtin_law("tanh_smooth", {"upper": 2.0})

    def test_law_from_config(self):
        law = law_from_config({"kind": "tanh_smooth", "lower": 1.0, "upper": 2.0})
        assert law.name == "tanh_smooth"
        assert law(0.0) == pytest.approx(1.5)
        with pytest.raises(ConfigError):
            law_from_config({"lower": 1.0, "upper": 2.0})


class TestPrimitiveTransform:
    def test_constant_law_is_exact(self):
        """For a(z) = k the primitive is exactly k*z and inverts exactly."""
        law = builtin_law(
            "affine_clamped", {"lower": 1.0, "upper": 3.0, "intercept": 2.0, "slope": 0.0}
        )
        pt = PrimitiveTransform.build(law, (-8.0, 8.0))
        zs = np.linspace(-8, 8, 1001)
        assert np.abs(pt.forward(zs) - 2.0 * zs).max() < 1e-12
        assert np.abs(pt.inverse(2.0 * zs) - zs).max() < 1e-12

    def test_forward_matches_quadrature(self):
        """Spline antiderivative agrees with adaptive quadrature off the probe set."""
        from scipy.integrate import quad

        law = tanh_law(1.0, 3.0, rate=1.3, center=0.2)
        pt = PrimitiveTransform.build(law)
        for z in [-41.3, -7.77, -0.913, 0.4, 3.1415, 18.2, 55.5]:
            ref, _ = quad(law.evaluate, 0.0, z, epsabs=1e-13, epsrel=1e-13, limit=300)
            assert pt.forward(z) == pytest.approx(ref, abs=1e-9 * (1 + abs(ref)))

    def test_forward_anchored_at_zero(self):
        for law in ALL_LAWS:
            pt = PrimitiveTransform.build(law, (-16.0, 16.0))
            assert abs(float(pt.forward(0.0))) < 1e-13

    def test_monotone_with_lower_bound_slope(self):
        """A(z2) - A(z1) >= lower * (z2 - z1) for z2 > z1."""
        rng = np.random.default_rng(5)
        for law in ALL_LAWS:
            pt = PrimitiveTransform.build(law, (-32.0, 32.0))
            z = np.sort(rng.uniform(-32, 32, 400))
            gaps = np.diff(pt.forward(z))
            dz = np.diff(z)
            assert np.all(gaps >= law.lower_bound * dz - 1e-9), law.name
            assert np.all(gaps <= law.upper_bound * dz + 1e-9), law.name

    def test_round_trip(self):
        rng = np.random.default_rng(6)
        for law in ALL_LAWS:
            pt = PrimitiveTransform.build(law, (-16.0, 16.0))
            z = rng.uniform(-16, 16, 3000)
            back = pt.inverse(pt.forward(z))
            assert np.abs(back - z).max() < 1e-10, law.name
            w = pt.forward(np.linspace(-16, 16, 777))
            assert np.abs(pt.forward(pt.inverse(w)) - w).max() < 1e-10, law.name

    def test_derivative_of_primitive_is_law(self):
        """Centered differences of A recover a, tightest at the table anchor z=0."""
        law = tanh_law(1.0, 2.0, rate=1.0)
        pt = PrimitiveTransform.build(law)
        h = 1e-4
        zs = np.linspace(-20, 20, 401)
        d_h = (pt.forward(zs + h) - pt.forward(zs - h)) / (2 * h)
        d_h2 = (pt.forward(zs + h / 2) - pt.forward(zs - h / 2)) / h
        fd = (4 * d_h2 - d_h) / 3
        assert np.abs(fd - law(zs)).max() < 1e-8
        fd0 = (4 * (pt.forward(h / 2) - pt.forward(-h / 2)) / h
               - (pt.forward(h) - pt.forward(-h)) / (2 * h)) / 3
        assert abs(float(fd0) - float(law(0.0))) < 2e-9

    def test_domain_errors(self):
        law = tanh_law()
        pt = PrimitiveTransform.build(law, (-4.0, 4.0))
        with pytest.raises(DomainError):
            pt.forward(4.5)
        with pytest.raises(DomainError):
            pt.inverse(pt.w_max + 1.0)
        with pytest.raises(ConfigError):
            PrimitiveTransform.build(law, (1.0, 4.0))


class TestFieldTransforms:
    def grid_and_theta(self, n=64, amp=2.0):
        g = Grid(n)
        x1, x2 = g.mesh
        values = amp * (np.sin(x1) * np.cos(2 * x2) + 0.3 * np.cos(3 * x1 + x2))
        return g, to_spectral(values, g), values

    def test_constant_law_scales_field(self):
        """eta = k * theta exactly when the coefficient is constant."""
        g, theta, _ = self.grid_and_theta()
        law = builtin_law(
            "affine_clamped", {"lower": 0.5, "upper": 2.5, "intercept": 1.5, "slope": 0.0}
        )
        pt = PrimitiveTransform.build(law, (-8.0, 8.0))
        eta = eta_forward(pt, theta)
        assert np.abs(eta.coeffs - 1.5 * theta.coeffs).max() < 1e-13

    def test_norm_sandwich(self):
        """lower*|theta| <= |A(theta)| pointwise lifts to the L2 norms."""
        g, theta, values = self.grid_and_theta()
        law = tanh_law(1.0, 3.0)
        pt = PrimitiveTransform.build(law, (-16.0, 16.0))
        eta = eta_forward(pt, theta)
        n_theta = l2_norm(theta)
        n_eta = l2_norm(eta)
        assert law.lower_bound * n_theta * (1 - 1e-9) <= n_eta
        assert n_eta <= law.upper_bound * n_theta * (1 + 1e-9)

    def test_eta_norm_matches_quadrature_oracle(self):
        """l2 norm of the sampled transform equals the direct sample quadrature."""
        g, theta, values = self.grid_and_theta()
        law = tanh_law(1.0, 3.0, rate=0.8)
        pt = PrimitiveTransform.build(law, (-16.0, 16.0))
        eta = eta_forward(pt, theta)
        samples = np.asarray(pt.forward(values))
        oracle = np.sqrt(g.cell_area * np.sum(samples**2))
        assert l2_norm(eta) == pytest.approx(oracle, rel=1e-12)

    def test_field_round_trip(self):
        g, theta, _ = self.grid_and_theta()
        law = tanh_law(1.0, 3.0, rate=1.7, center=0.3)
        pt = PrimitiveTransform.build(law, (-16.0, 16.0))
        back = eta_backward(pt, eta_forward(pt, theta))
        assert np.abs(to_physical(back) - to_physical(theta)).max() < 1e-10

    def test_apply_law_bounds_and_shape(self):
        g, theta, _ = self.grid_and_theta()
        law = tanh_law(1.0, 3.0)
        coeff = apply_law(law, theta)
        assert coeff.shape == (g.padded_n, g.padded_n)
        assert coeff.min() >= 1.0 - 1e-12 and coeff.max() <= 3.0 + 1e-12

    def test_eta_backward_out_of_table(self):
        g = Grid(16)
        law = tanh_law()
        pt = PrimitiveTransform.build(law, (-4.0, 4.0))
        too_big = to_spectral(np.full((16, 16), 50.0), g)
        with pytest.raises(DomainError):
            eta_backward(pt, too_big)

    def test_nan_rejected(self):
        g = Grid(16)
        bad = np.zeros((16, 16))
        bad[3, 5] = np.nan
        theta = to_spectral(bad, g)
        law = tanh_law()
        pt = PrimitiveTransform.build(law, (-4.0, 4.0))
        with pytest.raises(NumericError):
            eta_forward(pt, theta)
