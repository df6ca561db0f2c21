"""Manufactured advection-diffusion problem shared by the solver tests.

psi = sin(x1) sin(x2) exp(-t) is forced to solve

    d_t psi + u . grad psi - div(kappa grad psi) = f

with the cellular velocity u = (sin x1 cos x2, -cos x1 sin x2) and the
variable coefficient kappa = 3/2 + tanh(sin x1)/2.  The source f is worked
out symbolically once at import time and handed to the solver as a callable.
"""

import numpy as np
import sympy as sp

from bouss2d.solver import ParabolicProblem
from bouss2d.spectral import Grid, ScalarSpectralField, VectorSpectralField, to_spectral

KAPPA_BOUNDS = (1.0, 2.0)

_X1, _X2, _T = sp.symbols("x1 x2 t", real=True)
_PSI = sp.sin(_X1) * sp.sin(_X2) * sp.exp(-_T)
_U1 = sp.sin(_X1) * sp.cos(_X2)
_U2 = -sp.cos(_X1) * sp.sin(_X2)
_KAPPA = sp.Rational(3, 2) + sp.tanh(sp.sin(_X1)) / 2
_F = (
    sp.diff(_PSI, _T)
    + _U1 * sp.diff(_PSI, _X1)
    + _U2 * sp.diff(_PSI, _X2)
    - sp.diff(_KAPPA * sp.diff(_PSI, _X1), _X1)
    - sp.diff(_KAPPA * sp.diff(_PSI, _X2), _X2)
)
_F_FN = sp.lambdify((_T, _X1, _X2), sp.simplify(_F), "numpy")
_KAPPA_FN = sp.lambdify((_X1, _X2), _KAPPA, "numpy")


def kappa_samples(t, x1, x2):
    return _KAPPA_FN(x1, x2)


def source_samples(t, x1, x2):
    return _F_FN(t, x1, x2)


def cellular_velocity(grid: Grid) -> VectorSpectralField:
    x1, x2 = grid.mesh
    return VectorSpectralField(
        (
            to_spectral(np.sin(x1) * np.cos(x2), grid),
            to_spectral(-np.cos(x1) * np.sin(x2), grid),
        ),
        divfree_certified=True,
    )


def exact_solution(grid: Grid, t: float) -> ScalarSpectralField:
    x1, x2 = grid.mesh
    return to_spectral(np.sin(x1) * np.sin(x2) * np.exp(-t), grid)


def build_problem(n: int) -> ParabolicProblem:
    grid = Grid(n)
    return ParabolicProblem(
        psi0=exact_solution(grid, 0.0),
        kappa_bounds=KAPPA_BOUNDS,
        kappa=kappa_samples,
        velocity=cellular_velocity(grid),
        source=source_samples,
    )
