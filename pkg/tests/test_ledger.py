"""Energy ledger tests against hand-computable states."""

import numpy as np
import pytest

from bouss2d import lp
from bouss2d.errors import ConfigError
from bouss2d.initial import taylor_green_velocity
from bouss2d.laws import builtin_law
from bouss2d.ledger import BASE_COLUMNS, EnergyLedger
from bouss2d.solver import LawPair, initial_state
from bouss2d.spectral import Grid, gradient, l2_norm, to_spectral, zero_vector


def const_laws(kappa: float, mu: float) -> LawPair:
    return LawPair(
        a=builtin_law("tanh_smooth", {"lower": kappa, "upper": kappa}),
        b=builtin_law("tanh_smooth", {"lower": mu, "upper": mu}),
    )


def cellular_state(kappa=0.8, mu=0.3):
    """Temperature equal to the vertical velocity of a unit cellular flow, so
    every ledger column has a closed form."""
    g = Grid(32)
    x1, x2 = g.mesh
    theta = to_spectral(-np.cos(x1) * np.sin(x2), g)
    return initial_state(theta, taylor_green_velocity(g), const_laws(kappa, mu))


class TestRecord:
    def test_base_columns_order(self):
        led = EnergyLedger()
        assert led.columns == BASE_COLUMNS
        assert led.columns[0] == "t"

    def test_row_values_match_closed_forms(self):
        st = cellular_state()
        led = EnergyLedger()
        led.record(st)
        assert len(led) == 1
        assert led.column("t")[0] == 0.0
        assert np.isclose(led.column("l2_theta")[0], l2_norm(st.theta), rtol=1e-13)
        assert np.isclose(led.column("l2_u")[0], l2_norm(st.u), rtol=1e-13)
        # theta coincides with u_2, so the buoyancy integral is |u_2|^2
        want = l2_norm(st.u.components[1]) ** 2
        assert np.isclose(led.column("buoyancy_power")[0], want, rtol=1e-12)

    def test_constant_coefficients_factor_out(self):
        st = cellular_state(kappa=0.8, mu=0.3)
        led = EnergyLedger()
        led.record(st)
        row = {name: led.column(name)[0] for name in led.columns}
        assert np.isclose(row["diss_theta"], 0.8 * row["grad_theta"] ** 2, rtol=1e-12)
        assert np.isclose(row["diss_u"], 0.5 * 0.3 * row["strain_u"] ** 2, rtol=1e-12)

    def test_strain_identity(self):
        """For divergence-free fields |Su|^2 integrates to twice |grad u|^2."""
        st = cellular_state()
        led = EnergyLedger()
        led.record(st)
        strain = led.column("strain_u")[0]
        grad = led.column("grad_u")[0]
        assert np.isclose(strain**2, 2.0 * grad**2, rtol=1e-12)

    def test_temperature_range(self):
        st = cellular_state()
        led = EnergyLedger()
        led.record(st)
        assert abs(led.column("theta_min")[0] + 1.0) < 1e-12
        assert abs(led.column("theta_max")[0] - 1.0) < 1e-12

    def test_times_accumulate(self):
        st = cellular_state()
        led = EnergyLedger()
        for _ in range(3):
            led.record(st)
        assert np.array_equal(led.times, np.zeros(3))
        assert len(led.rows) == 3


class TestProbes:
    def test_probe_columns_evaluate_sobolev_norms(self):
        st = cellular_state()
        led = EnergyLedger(probes=("theta_h1.5", "grad_theta_h0.5"))
        led.record(st)
        assert led.column("theta_h1.5")[0] == lp.sobolev_norm(st.theta, 1.5)
        assert led.column("grad_theta_h0.5")[0] == lp.sobolev_norm(gradient(st.theta), 0.5)

    def test_grad_u_probe_combines_components(self):
        st = cellular_state()
        led = EnergyLedger(probes=("grad_u_h0",))
        led.record(st)
        want = np.hypot(
            lp.sobolev_norm(gradient(st.u.components[0]), 0.0),
            lp.sobolev_norm(gradient(st.u.components[1]), 0.0),
        )
        assert np.isclose(led.column("grad_u_h0")[0], want, rtol=1e-14)

    def test_malformed_probes_rejected(self):
        for name in ("vorticity_h1", "theta_h", "theta_h1x", "theta"):
            with pytest.raises(ConfigError):
                EnergyLedger(probes=(name,))

    def test_unknown_column_raises(self):
        led = EnergyLedger()
        led.record(cellular_state())
        with pytest.raises(KeyError):
            led.column("enstrophy")


class TestCsv:
    def test_roundtrip_preserves_every_digit(self, tmp_path):
        st = cellular_state()
        led = EnergyLedger(probes=("u_h-0.5",))
        led.record(st)
        led.record(st)
        path = tmp_path / "ledger.csv"
        led.write_csv(path)
        back = EnergyLedger.from_csv(path)
        assert back.columns == led.columns
        for name in led.columns:
            assert np.array_equal(back.column(name), led.column(name))

    def test_header_mismatch_rejected(self, tmp_path):
        led = EnergyLedger()
        led.record(cellular_state())
        path = tmp_path / "ledger.csv"
        led.write_csv(path)
        text = path.read_text().replace("l2_theta", "junk", 1)
        bad = tmp_path / "tampered.csv"
        bad.write_text(text)
        with pytest.raises(ValueError):
            EnergyLedger.from_csv(bad)
