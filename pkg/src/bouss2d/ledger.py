"""Per-step time series of norms, dissipation rates, and balance terms.

Each row holds the quantities the energy identities are audited against:
L2 norms of the unknowns and their gradients, the instantaneous dissipation
rates weighted by the actual coefficient fields, the buoyancy power, and the
physical-space temperature range.  Optional probe columns add Sobolev norms
of either unknown (or of its gradient) at chosen exponents.

Weighted integrands are evaluated on the 3/2-padded grid; unweighted inner
products come straight from the coefficients.  CSV output uses %.17g so a
written ledger round-trips bit-exactly.
"""

from __future__ import annotations

import re

import numpy as np

from .errors import ConfigError
from .lp import sobolev_norm
from .spectral import (
    VectorSpectralField,
    gradient,
    l2_norm,
    l2_norm_gradient,
    strain,
    to_physical_padded,
)

BASE_COLUMNS = (
    "t",
    "l2_theta",
    "grad_theta",
    "l2_u",
    "grad_u",
    "strain_u",
    "diss_theta",
    "diss_u",
    "buoyancy_power",
    "theta_min",
    "theta_max",
)

_PROBE_FORM = re.compile(r"^(theta|u|grad_theta|grad_u)_h(-?\d+(?:\.\d+)?)$")


def _parse_probe(name: str):
    m = _PROBE_FORM.match(name)
    if m is None:
        raise ConfigError(
            f"unknown probe '{name}' (expected theta_h<s>, u_h<s>, grad_theta_h<s>, grad_u_h<s>)"
        )
    return m.group(1), float(m.group(2))


def _probe_value(state, target: str, s: float) -> float:
    if target == "theta":
        return sobolev_norm(state.theta, s)
    if target == "u":
        return sobolev_norm(state.u, s)
    if target == "grad_theta":
        return sobolev_norm(gradient(state.theta), s)
    g1 = sobolev_norm(gradient(state.u.components[0]), s)
    g2 = sobolev_norm(gradient(state.u.components[1]), s)
    return float(np.hypot(g1, g2))


class EnergyLedger:
    """Append-only table, one row per accepted step (plus the initial state)."""

    def __init__(self, probes=()):
        self.probes = tuple(probes)
        self._parsed = tuple(_parse_probe(p) for p in self.probes)
        self.columns = BASE_COLUMNS + self.probes
        self._rows: list[tuple[float, ...]] = []

    def __len__(self) -> int:
        return len(self._rows)

    @property
    def rows(self) -> list[tuple[float, ...]]:
        return list(self._rows)

    def column(self, name: str) -> np.ndarray:
        try:
            i = self.columns.index(name)
        except ValueError:
            raise KeyError(f"ledger has no column '{name}'") from None
        return np.array([r[i] for r in self._rows])

    @property
    def times(self) -> np.ndarray:
        return self.column("t")

    def record(self, state) -> None:
        theta, u = state.theta, state.u
        grid = theta.grid
        area = (2 * np.pi * grid.box_length) ** 2

        theta_pad = to_physical_padded(theta)
        kappa = state.laws.a.evaluate(theta_pad)
        mu = state.laws.b.evaluate(theta_pad)

        gt = gradient(theta)
        tx = to_physical_padded(gt.components[0])
        ty = to_physical_padded(gt.components[1])
        diss_theta = float((kappa * (tx * tx + ty * ty)).mean() * area)

        s11, s12, _, s22 = strain(u)
        p11 = to_physical_padded(s11)
        p12 = to_physical_padded(s12)
        p22 = to_physical_padded(s22)
        diss_u = float(0.5 * (mu * (p11 * p11 + 2 * p12 * p12 + p22 * p22)).mean() * area)

        # <theta, u2> is exact in coefficient space
        buoyancy = float(
            area * np.real(np.sum(np.conj(theta.coeffs) * u.components[1].coeffs))
        )

        g1 = l2_norm_gradient(u.components[0])
        g2 = l2_norm_gradient(u.components[1])
        strain_u = float(
            np.sqrt(l2_norm(s11) ** 2 + 2 * l2_norm(s12) ** 2 + l2_norm(s22) ** 2)
        )

        row = (
            float(state.time),
            l2_norm(theta),
            l2_norm_gradient(theta),
            l2_norm(u),
            float(np.hypot(g1, g2)),
            strain_u,
            diss_theta,
            diss_u,
            buoyancy,
            float(theta_pad.min()),
            float(theta_pad.max()),
        )
        row += tuple(_probe_value(state, target, s) for target, s in self._parsed)
        self._rows.append(row)

    def write_csv(self, path) -> None:
        lines = [",".join(self.columns)]
        for row in self._rows:
            lines.append(",".join("%.17g" % v for v in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "EnergyLedger":
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln]
        if not lines:
            raise ValueError(f"{path}: empty ledger file")
        header = tuple(lines[0].split(","))
        if header[: len(BASE_COLUMNS)] != BASE_COLUMNS:
            raise ValueError(f"{path}: unrecognized ledger header")
        ledger = cls(probes=header[len(BASE_COLUMNS) :])
        width = len(header)
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != width:
                raise ValueError(f"{path}: ragged ledger row")
            ledger._rows.append(tuple(float(p) for p in parts))
        return ledger
