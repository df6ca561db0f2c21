"""Dyadic frequency decomposition, Sobolev norms, and commutator diagnostics.

The filter bank follows the classical construction: a smooth radial low-pass
chi equal to 1 on the unit ball and supported in radius 4/3, with shell
profiles phi(xi) = chi(xi/2) - chi(xi) supported in the annulus
3/4 <= |xi| <= 8/3.  On a grid the shells stop at
j_max = floor(log2(N/(2L))) - 1, so the partition of unity is exact (to
roundoff) on the closed ball of radius N/(2L); modes in the corner of the
lattice beyond that radius are outside the decomposition's certified range.

Sobolev norms use the weight (1 + |xi|^2)^s inside the squared sum.  The
commutator [phi, Delta_j] grad psi and its summability reports implement the
shell-wise estimates used to close energy arguments for variable-coefficient
diffusion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    ConfigError,
    DegenerateInputError,
    DomainError,
    GridMismatchError,
    NumericError,
    UndefinedRatioError,
)
from .spectral import (
    Grid,
    ScalarSpectralField,
    VectorSpectralField,
    gradient,
    l2_norm,
    linf_norm,
    multiply_dealiased,
    to_physical,
    to_spectral,
)

SOBOLEV_RANGE = (-4.0, 8.0)


def _transition(x: np.ndarray) -> np.ndarray:
    """The standard C-infinity step: 0 for x<=0, 1 for x>=1, monotone between."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    out[x <= 0.0] = 0.0
    out[x >= 1.0] = 1.0
    mid = (x > 0.0) & (x < 1.0)
    xm = x[mid]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    out[mid] = a / (a + b)
    return out


def chi_profile(r: np.ndarray) -> np.ndarray:
    """Radial low-pass: 1 for r <= 1, 0 for r >= 4/3, smooth and nonincreasing."""
    r = np.asarray(r, dtype=float)
    return _transition((4.0 / 3.0 - r) * 3.0)


def phi_profile(r: np.ndarray) -> np.ndarray:
    """Shell profile chi(r/2) - chi(r), supported in 3/4 <= r <= 8/3."""
    r = np.asarray(r, dtype=float)
    return chi_profile(0.5 * r) - chi_profile(r)


@dataclass(frozen=True)
class DyadicFilterBank:
    """Shell multipliers for one grid: low_pass = chi(|k|), shells[j] = phi(2^-j |k|)."""

    grid: Grid
    j_max: int
    low_pass: np.ndarray
    shells: tuple[np.ndarray, ...]


@lru_cache(maxsize=32)
def filter_bank(grid: Grid) -> DyadicFilterBank:
    """Build (and cache) the dyadic filter bank for a grid.

    Raises:
        ConfigError: grid too coarse to hold even one shell.
    """
    j_max = int(math.floor(math.log2(grid.max_radius))) - 1
    if j_max < 0:
        raise ConfigError(
            f"grid with max radius {grid.max_radius} is too coarse for a dyadic bank"
        )
    r = np.sqrt(grid.k_squared)
    low = chi_profile(r)
    shells = tuple(phi_profile(r / 2.0**j) for j in range(j_max + 1))
    return DyadicFilterBank(grid=grid, j_max=j_max, low_pass=low, shells=shells)


@dataclass(frozen=True)
class DyadicDecomposition:
    """Ordered blocks [low-pass, shell 0, ..., shell j_max] of one field."""

    blocks: tuple[ScalarSpectralField, ...]
    source_grid: Grid

    @property
    def j_max(self) -> int:
        return len(self.blocks) - 2

    def shell(self, j: int) -> ScalarSpectralField:
        """Block for shell j; j = -1 addresses the low-pass block."""
        if not -1 <= j <= self.j_max:
            raise DomainError(f"shell index {j} outside [-1, {self.j_max}]")
        return self.blocks[j + 1]

    def reconstruct(self) -> ScalarSpectralField:
        total = np.zeros_like(self.blocks[0].coeffs)
        for b in self.blocks:
            total = total + b.coeffs
        return ScalarSpectralField(self.source_grid, total)


def apply_shell(bank: DyadicFilterBank, j: int, f: ScalarSpectralField) -> ScalarSpectralField:
    """Apply one shell multiplier (j = -1 is the low pass) to a field."""
    if f.grid != bank.grid:
        raise GridMismatchError("field grid does not match filter bank grid")
    if not -1 <= j <= bank.j_max:
        raise DomainError(f"shell index {j} outside [-1, {bank.j_max}]")
    mult = bank.low_pass if j == -1 else bank.shells[j]
    return ScalarSpectralField(f.grid, f.coeffs * mult)


def decompose(g: ScalarSpectralField, bank: DyadicFilterBank) -> DyadicDecomposition:
    """Split g into its low-pass block and dyadic shell blocks.

    Raises:
        GridMismatchError: bank was built for a different grid.
    """
    if g.grid != bank.grid:
        raise GridMismatchError("field grid does not match filter bank grid")
    blocks = [ScalarSpectralField(g.grid, g.coeffs * bank.low_pass)]
    blocks.extend(ScalarSpectralField(g.grid, g.coeffs * m) for m in bank.shells)
    return DyadicDecomposition(blocks=tuple(blocks), source_grid=g.grid)


def _check_sobolev_exponent(s: float) -> float:
    s = float(s)
    if not SOBOLEV_RANGE[0] <= s <= SOBOLEV_RANGE[1]:
        raise DomainError(f"Sobolev exponent {s} outside {list(SOBOLEV_RANGE)}")
    return s


def sobolev_norm(g: ScalarSpectralField | VectorSpectralField, s: float) -> float:
    """H^s norm via the direct multiplier: box * sqrt(sum (1+|k|^2)^s |c_k|^2).

    Vector fields get the root of the summed squared component norms.
    """
    s = _check_sobolev_exponent(s)
    if isinstance(g, VectorSpectralField):
        return math.sqrt(sum(sobolev_norm(c, s) ** 2 for c in g.components))
    w = (1.0 + g.grid.k_squared) ** s
    total = float(np.sum(w * np.abs(g.coeffs) ** 2))
    return 2.0 * math.pi * g.grid.box_length * math.sqrt(total)


def lp_sobolev_norm(d: DyadicDecomposition, s: float) -> float:
    """Shell-sum H^s norm: ||g||_L2 + (sum_{j>=0} 2^{2js} ||Delta_j g||^2)^(1/2).

    Equivalent to sobolev_norm with constants depending only on s and the bank.
    """
    s = float(s)
    if s < 0:
        raise DomainError(f"lp_sobolev_norm needs s >= 0, got {s}")
    g_l2 = l2_norm(d.reconstruct())
    shell_sum = 0.0
    for j in range(d.j_max + 1):
        shell_sum += 4.0 ** (j * s) * l2_norm(d.shell(j)) ** 2
    return g_l2 + math.sqrt(shell_sum)


@dataclass(frozen=True)
class BernsteinReport:
    """Gradient-to-scale ratio of one shell block."""

    j: int
    ratio: float
    block_norm: float
    gradient_norm: float
    lower: float = 0.75
    upper: float = 8.0 / 3.0


def bernstein_check(g: ScalarSpectralField, j: int, bank: DyadicFilterBank | None = None) -> BernsteinReport:
    """Ratio ||grad Delta_j g|| / (2^j ||Delta_j g||), certified inside [3/4, 8/3].

    Raises:
        UndefinedRatioError: the shell block is identically zero.
        NumericError: ratio escapes the support bounds (cannot happen for a
            correctly built bank; kept as a hard invariant).
    """
    if bank is None:
        bank = filter_bank(g.grid)
    if not 0 <= j <= bank.j_max:
        raise DomainError(f"shell index {j} outside [0, {bank.j_max}]")
    block = apply_shell(bank, j, g)
    block_norm = l2_norm(block)
    if block_norm == 0.0:
        raise UndefinedRatioError(f"shell {j} of field is zero; Bernstein ratio undefined")
    grad_norm = l2_norm(gradient(block))
    ratio = grad_norm / (2.0**j * block_norm)
    if not (0.75 - 1e-12 <= ratio <= 8.0 / 3.0 + 1e-12):
        raise NumericError(f"Bernstein ratio {ratio} outside [3/4, 8/3] at shell {j}")
    return BernsteinReport(j=j, ratio=ratio, block_norm=block_norm, gradient_norm=grad_norm)


def commutator(
    phi: ScalarSpectralField, psi: ScalarSpectralField, j: int, bank: DyadicFilterBank | None = None
) -> VectorSpectralField:
    """[phi, Delta_j] grad psi = phi * Delta_j grad psi - Delta_j (phi grad psi).

    Products are dealiased; the result is the two-component field obtained by
    applying the defining difference to each component of grad psi.
    """
    if phi.grid != psi.grid:
        raise GridMismatchError("commutator arguments live on different grids")
    if bank is None:
        bank = filter_bank(phi.grid)
    grad_psi = gradient(psi)
    comps = []
    for comp in grad_psi.components:
        direct = multiply_dealiased(phi, apply_shell(bank, j, comp))
        swapped = apply_shell(bank, j, multiply_dealiased(phi, comp))
        comps.append(ScalarSpectralField(phi.grid, direct.coeffs - swapped.coeffs))
    return VectorSpectralField(components=(comps[0], comps[1]))


@dataclass(frozen=True)
class CommutatorScalingReport:
    """Shell-weighted commutator sums against their closing right-hand sides.

    terms[i] is 2^(js) ||[phi, Delta_j] grad psi||_L2 for j = i+1 (the l1 and
    l2 sums run over j >= 1); normalized_sequence is terms / l1_sum, the
    realized summable sequence.  tail_estimate extrapolates the truncated
    shells geometrically from the last resolved ratio (0.0 when the last terms
    give no contraction to extrapolate from).
    """

    s: float
    nu: float
    j_max: int
    terms: tuple[float, ...]
    l1_sum: float
    l1_rhs: float
    l1_ratio: float
    l2_sum: float | None
    l2_rhs: float | None
    l2_ratio: float | None
    normalized_sequence: tuple[float, ...]
    geometric_ratio: float | None
    tail_estimate: float


def commutator_scaling_report(
    phi: ScalarSpectralField,
    psi: ScalarSpectralField,
    s: float,
    nu: float,
    bank: DyadicFilterBank | None = None,
) -> CommutatorScalingReport:
    """Measure S = sum_{j>=1} 2^(js) ||[phi,Delta_j] grad psi|| against its bound.

    The l1 form needs -1 < nu < 1 and -1 < s < nu + 1, with right-hand side
    ||grad phi||_{H^nu} ||grad psi||_{H^(s-nu)}; when s > 0 the l2 form against
    ||grad phi||_Linf ||grad psi||_{H^(s-1)} + ||grad phi||_{H^(s-1)} ||grad psi||_Linf
    is reported as well.

    Raises:
        DomainError: (s, nu) outside the l1 parameter domain.
        DegenerateInputError: vanishing right-hand side with a nonzero sum.
    """
    s, nu = float(s), float(nu)
    if not -1.0 < nu < 1.0:
        raise DomainError(f"commutator scaling needs -1 < nu < 1, got nu={nu}")
    if not -1.0 < s < nu + 1.0:
        raise DomainError(f"commutator scaling needs -1 < s < nu+1, got s={s}, nu={nu}")
    if bank is None:
        bank = filter_bank(phi.grid)

    terms = []
    for j in range(1, bank.j_max + 1):
        terms.append(2.0 ** (j * s) * l2_norm(commutator(phi, psi, j, bank)))
    terms = tuple(terms)
    l1_sum = float(sum(terms))

    grad_phi = gradient(phi)
    grad_psi = gradient(psi)
    l1_rhs = sobolev_norm(grad_phi, nu) * sobolev_norm(grad_psi, s - nu)
    if l1_rhs == 0.0:
        if l1_sum > 1e-13:
            raise DegenerateInputError("zero right-hand side against a nonzero commutator sum")
        l1_ratio = 0.0
    else:
        l1_ratio = l1_sum / l1_rhs

    l2_sum = l2_rhs = l2_ratio = None
    if s > 0.0:
        l2_sum = math.sqrt(sum(t * t for t in terms))
        l2_rhs = linf_norm(grad_phi) * sobolev_norm(grad_psi, s - 1.0) + sobolev_norm(
            grad_phi, s - 1.0
        ) * linf_norm(grad_psi)
        l2_ratio = 0.0 if l2_rhs == 0.0 else l2_sum / l2_rhs

    normalized = tuple(t / l1_sum for t in terms) if l1_sum > 0 else tuple(0.0 for _ in terms)
    geometric_ratio = None
    tail = 0.0
    if len(terms) >= 2 and terms[-2] > 0.0 and terms[-1] > 0.0:
        q = terms[-1] / terms[-2]
        geometric_ratio = q
        if q < 1.0:
            tail = terms[-1] * q / (1.0 - q)

    return CommutatorScalingReport(
        s=s,
        nu=nu,
        j_max=bank.j_max,
        terms=terms,
        l1_sum=l1_sum,
        l1_rhs=float(l1_rhs),
        l1_ratio=float(l1_ratio),
        l2_sum=l2_sum,
        l2_rhs=l2_rhs,
        l2_ratio=l2_ratio,
        normalized_sequence=normalized,
        geometric_ratio=geometric_ratio,
        tail_estimate=tail,
    )


def product_ratio(phi: ScalarSpectralField, psi: ScalarSpectralField, s: float) -> float:
    """||phi psi||_{H^s} / (||phi||_Linf ||psi||_{H^s} + ||phi||_{H^s} ||psi||_Linf).

    Raises:
        DegenerateInputError: denominator is zero.
    """
    num = sobolev_norm(multiply_dealiased(phi, psi), s)
    den = linf_norm(phi) * sobolev_norm(psi, s) + sobolev_norm(phi, s) * linf_norm(psi)
    if den == 0.0:
        raise DegenerateInputError("product estimate denominator vanished")
    return num / den


def composition_ratio(law, theta: ScalarSpectralField, s: float) -> float:
    """||grad(a(theta))||_{H^(s-1)} / ||grad theta||_{H^(s-1)} for a coefficient law.

    Raises:
        DegenerateInputError: constant theta (zero gradient norm).
    """
    den = sobolev_norm(gradient(theta), s - 1.0)
    if den == 0.0:
        raise DegenerateInputError("composition estimate needs nonconstant theta")
    composed = to_spectral(np.asarray(law.evaluate(to_physical(theta))), theta.grid)
    return sobolev_norm(gradient(composed), s - 1.0) / den
