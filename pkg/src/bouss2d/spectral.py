"""Fourier representation of periodic fields and the spectral calculus on them.

Fields live on the square torus [0, 2*pi*L)^2 sampled on an n-by-n grid and are
stored as Fourier-series coefficients c_k (fft2 layout, normalized by 1/n^2), so
that f(x) = sum_k c_k exp(i k.x / L) with integer frequencies k in
{-n/2+1, ..., n/2} per axis scaled by 1/L.  With this normalization Parseval
reads ||f||_L2^2 = (2*pi*L)^2 * sum_k |c_k|^2.

All operations are pure functions over immutable field objects; per-grid helper
arrays are cached and safe for concurrent lookup.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import GridMismatchError, NumericError, ShapeError


@dataclass(frozen=True)
class Grid:
    """Uniform n x n sampling of the torus [0, 2*pi*L)^2.

    Args:
        n: points per axis; even and at least 8.
        box_length: the scale L; the box edge is 2*pi*L.
        dealias_fraction: fraction of the Nyquist radius used as the default
            low-pass cutoff.  The default 2/3 makes quadratic products of
            cutoff-limited fields exactly alias-free under 3/2 padding.
    """

    n: int
    box_length: float = 1.0
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError(f"grid size must be even and >= 8, got {self.n}")
        if not (self.box_length > 0):
            raise ValueError("box_length must be positive")
        if not (0 < self.dealias_fraction <= 1):
            raise ValueError("dealias_fraction must lie in (0, 1]")

    @cached_property
    def x(self) -> np.ndarray:
        return (2 * np.pi * self.box_length / self.n) * np.arange(self.n)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical coordinates (X1, X2) with values[i, j] = f(x1_i, x2_j)."""
        return tuple(np.meshgrid(self.x, self.x, indexing="ij"))

    @cached_property
    def freq1(self) -> np.ndarray:
        f = np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)
        return f[:, None]

    @cached_property
    def freq2(self) -> np.ndarray:
        return self.freq1.reshape(1, self.n)

    @cached_property
    def k1(self) -> np.ndarray:
        return self.freq1 / self.box_length

    @cached_property
    def k2(self) -> np.ndarray:
        return self.freq2 / self.box_length

    @cached_property
    def k_squared(self) -> np.ndarray:
        return self.k1**2 + self.k2**2

    @cached_property
    def spacing(self) -> float:
        return 2 * np.pi * self.box_length / self.n

    @cached_property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def max_radius(self) -> float:
        """Largest representable cutoff radius, n/(2L)."""
        return self.n / (2 * self.box_length)

    @property
    def default_cutoff(self) -> float:
        return self.dealias_fraction * self.max_radius

    @property
    def padded_n(self) -> int:
        return (3 * self.n) // 2

    @cached_property
    def _nyquist_free1(self) -> np.ndarray:
        return (np.abs(self.freq1) != self.n // 2)

    @cached_property
    def _nyquist_free2(self) -> np.ndarray:
        return (np.abs(self.freq2) != self.n // 2)


@dataclass(frozen=True)
class ScalarSpectralField:
    """A real scalar field held as Hermitian-symmetric Fourier coefficients."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.grid.n, self.grid.n):
            raise ShapeError(
                f"coefficient array {self.coeffs.shape} does not match grid n={self.grid.n}"
            )


@dataclass(frozen=True)
class VectorSpectralField:
    """Two scalar components on a shared grid, optionally certified solenoidal."""

    components: tuple[ScalarSpectralField, ScalarSpectralField]
    divfree_certified: bool = False

    def __post_init__(self):
        if self.components[0].grid != self.components[1].grid:
            raise GridMismatchError("vector components live on different grids")

    @property
    def grid(self) -> Grid:
        return self.components[0].grid


def zero_field(grid: Grid) -> ScalarSpectralField:
    return ScalarSpectralField(grid, np.zeros((grid.n, grid.n), dtype=complex))


def zero_vector(grid: Grid) -> VectorSpectralField:
    return VectorSpectralField((zero_field(grid), zero_field(grid)), divfree_certified=True)


def to_physical(f: ScalarSpectralField) -> np.ndarray:
    """Inverse transform to real samples on the field's own grid."""
    n = f.grid.n
    return np.fft.ifft2(f.coeffs * (n * n)).real


def to_spectral(values: np.ndarray, grid: Grid) -> ScalarSpectralField:
    """Forward transform of real samples; values[i, j] = f(x1_i, x2_j)."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n, grid.n):
        raise ShapeError(f"sample array {values.shape} does not match grid n={grid.n}")
    return ScalarSpectralField(grid, np.fft.fft2(values) / (grid.n * grid.n))


# --- 3/2 zero padding -------------------------------------------------------
#
# The Nyquist slot (axis frequency -n/2) represents two conjugate modes of the
# real interpolant; embedding splits it half-and-half into the +/-n/2 slots of
# the padded grid so that the embedding is an exact trig-polynomial identity.


def _embed_coeffs(grid: Grid, c: np.ndarray) -> np.ndarray:
    n, m = grid.n, grid.padded_n
    half = n // 2
    cc = np.fft.fftshift(c)  # index 0 <-> frequency -n/2
    ext = np.zeros((n + 1, n + 1), dtype=complex)
    ext[:n, :n] = cc
    ext[n, :] = ext[0, :]
    ext[0, :] *= 0.5
    ext[n, :] *= 0.5
    ext[:, n] = ext[:, 0]
    ext[:, 0] *= 0.5
    ext[:, n] *= 0.5
    off = m // 2
    out = np.zeros((m, m), dtype=complex)
    out[off - half : off + half + 1, off - half : off + half + 1] = ext
    return np.fft.ifftshift(out)


def _extract_coeffs(grid: Grid, c_m: np.ndarray) -> np.ndarray:
    n, m = grid.n, grid.padded_n
    half = n // 2
    off = m // 2
    win = np.fft.fftshift(c_m)[off - half : off + half + 1, off - half : off + half + 1]
    tmp = win[:n, :].copy()
    tmp[0, :] += win[n, :]
    out = tmp[:, :n].copy()
    out[:, 0] += tmp[:, n]
    return np.fft.ifftshift(out)


def to_physical_padded(f: ScalarSpectralField) -> np.ndarray:
    """Real samples on the 3/2 zero-padded grid (for products and sup norms)."""
    m = f.grid.padded_n
    return np.fft.ifft2(_embed_coeffs(f.grid, f.coeffs) * (m * m)).real


def from_physical_padded(values: np.ndarray, grid: Grid) -> ScalarSpectralField:
    m = grid.padded_n
    if values.shape != (m, m):
        raise ShapeError(f"padded array {values.shape} does not match m={m}")
    c_m = np.fft.fft2(values) / (m * m)
    return ScalarSpectralField(grid, _extract_coeffs(grid, c_m))


def multiply_dealiased(f: ScalarSpectralField, g: ScalarSpectralField) -> ScalarSpectralField:
    """Pointwise product via the 3/2-padded physical grid.

    Exact (alias-free) whenever the factors are band-limited to |k| <= n/(3L);
    in general the retained sub-Nyquist modes of the product are exact and only
    the folded Nyquist slots carry the unavoidable projection.
    """
    if f.grid != g.grid:
        raise GridMismatchError("multiply_dealiased requires a shared grid")
    return from_physical_padded(to_physical_padded(f) * to_physical_padded(g), f.grid)


# --- cutoffs and projections ------------------------------------------------


@lru_cache(maxsize=256)
def _ball_mask(grid: Grid, radius: float) -> np.ndarray:
    # closed Euclidean ball; integer-lattice squares make the comparison exact
    rl_sq = (radius * grid.box_length) ** 2
    return (grid.freq1**2 + grid.freq2**2) <= rl_sq + 1e-9


def _validate_cutoff(grid: Grid, radius: float) -> None:
    if not (radius > 0):
        raise ValueError("cutoff radius must be positive")
    if radius > grid.max_radius * (1 + 1e-12):
        raise ValueError(
            f"cutoff radius {radius:.6g} is not representable on n={grid.n}, "
            f"L={grid.box_length} (max {grid.max_radius:.6g})"
        )


def truncate(f: ScalarSpectralField, radius: float) -> ScalarSpectralField:
    """Sharp low-pass to the closed frequency ball |k| <= radius."""
    _validate_cutoff(f.grid, radius)
    return ScalarSpectralField(f.grid, np.where(_ball_mask(f.grid, radius), f.coeffs, 0.0))


def truncate_vector(v: VectorSpectralField, radius: float) -> VectorSpectralField:
    return VectorSpectralField(
        (truncate(v.components[0], radius), truncate(v.components[1], radius)),
        divfree_certified=v.divfree_certified,
    )


def embed_field(f: ScalarSpectralField, target: Grid) -> ScalarSpectralField:
    """Copy a field onto a finer grid of the same box, mode for mode.

    The source must carry no Nyquist-ring content (those slots are ambiguous
    between +n/2 and -n/2 on the fine lattice); fields produced by the
    dealiased pipeline and the random synthesizers satisfy this.
    """
    g = f.grid
    if target.box_length != g.box_length:
        raise GridMismatchError("embedding requires the same box length")
    if target.n < g.n:
        raise GridMismatchError("embedding target must be at least as fine")
    nyq = g.n // 2
    ring = (np.abs(g.freq1) == nyq) | (np.abs(g.freq2) == nyq)
    if np.any(f.coeffs[ring] != 0.0):
        raise ShapeError("cannot embed a field with Nyquist-ring content")
    if target.n == g.n:
        return ScalarSpectralField(target, f.coeffs.copy())
    pad = (target.n - g.n) // 2
    extra = (target.n - g.n) - pad
    wide = np.pad(np.fft.fftshift(f.coeffs), ((pad, extra), (pad, extra)))
    return ScalarSpectralField(target, np.fft.ifftshift(wide))


def leray_project(v: VectorSpectralField) -> VectorSpectralField:
    """Remove the curl-free part mode by mode; the k=0 mode is untouched."""
    grid = v.grid
    c1, c2 = v.components[0].coeffs, v.components[1].coeffs
    ksq = grid.k_squared.copy()
    ksq[0, 0] = 1.0  # the mean has no curl-free content to remove
    dot = (grid.k1 * c1 + grid.k2 * c2) / ksq
    p1 = c1 - grid.k1 * dot
    p2 = c2 - grid.k2 * dot
    return VectorSpectralField(
        (ScalarSpectralField(grid, p1), ScalarSpectralField(grid, p2)),
        divfree_certified=True,
    )


def divergence_defect(v: VectorSpectralField) -> float:
    """max_k |k . u_hat(k)| relative to max |u_hat|, the certification measure."""
    grid = v.grid
    c1, c2 = v.components[0].coeffs, v.components[1].coeffs
    num = np.abs(grid.k1 * c1 + grid.k2 * c2).max()
    den = max(np.abs(c1).max(), np.abs(c2).max())
    return 0.0 if den == 0 else float(num / den)


# --- spectral differentiation -----------------------------------------------
#
# Nyquist planes are zeroed after every differentiation (sign-ambiguous modes
# would otherwise break realness and skew-adjointness).


def _ddx1(grid: Grid, c: np.ndarray) -> np.ndarray:
    return np.where(grid._nyquist_free1, 1j * grid.k1 * c, 0.0)


def _ddx2(grid: Grid, c: np.ndarray) -> np.ndarray:
    return np.where(grid._nyquist_free2, 1j * grid.k2 * c, 0.0)


def gradient(f: ScalarSpectralField) -> VectorSpectralField:
    g = f.grid
    return VectorSpectralField(
        (ScalarSpectralField(g, _ddx1(g, f.coeffs)), ScalarSpectralField(g, _ddx2(g, f.coeffs)))
    )


def divergence(v: VectorSpectralField) -> ScalarSpectralField:
    g = v.grid
    return ScalarSpectralField(
        g, _ddx1(g, v.components[0].coeffs) + _ddx2(g, v.components[1].coeffs)
    )


def _laplacian_multiplier(g: Grid) -> np.ndarray:
    # per-axis Nyquist masking keeps laplacian = divergence(gradient) exact
    return -(
        np.where(g._nyquist_free1, g.k1**2, 0.0) + np.where(g._nyquist_free2, g.k2**2, 0.0)
    )


def laplacian(f: ScalarSpectralField) -> ScalarSpectralField:
    g = f.grid
    return ScalarSpectralField(g, _laplacian_multiplier(g) * f.coeffs)


def strain(v: VectorSpectralField) -> tuple[ScalarSpectralField, ...]:
    """Deformation tensor Su = grad u + (grad u)^T as (S11, S12, S21, S22)."""
    g = v.grid
    c1, c2 = v.components[0].coeffs, v.components[1].coeffs
    s11 = ScalarSpectralField(g, 2.0 * _ddx1(g, c1))
    s22 = ScalarSpectralField(g, 2.0 * _ddx2(g, c2))
    off = ScalarSpectralField(g, _ddx2(g, c1) + _ddx1(g, c2))
    return (s11, off, off, s22)


# --- norms and reductions ----------------------------------------------------


def mean_value(f: ScalarSpectralField) -> float:
    return float(f.coeffs[0, 0].real)


def l2_norm(f: ScalarSpectralField | VectorSpectralField) -> float:
    if isinstance(f, VectorSpectralField):
        total = sum(np.sum(np.abs(c.coeffs) ** 2) for c in f.components)
    else:
        total = np.sum(np.abs(f.coeffs) ** 2)
    box = 2 * np.pi * f.grid.box_length
    return float(box * np.sqrt(total))


def l2_norm_gradient(f: ScalarSpectralField) -> float:
    """||grad f||_L2 straight from the multiplier, cheaper than gradient()."""
    g = f.grid
    total = np.sum(-_laplacian_multiplier(g) * np.abs(f.coeffs) ** 2)
    box = 2 * np.pi * g.box_length
    return float(box * np.sqrt(total))


def _padded_samples(f: ScalarSpectralField | VectorSpectralField) -> np.ndarray:
    if isinstance(f, VectorSpectralField):
        return np.stack([to_physical_padded(c) for c in f.components])
    return to_physical_padded(f)[None, :, :]


def linf_norm(f: ScalarSpectralField | VectorSpectralField) -> float:
    """Sup norm on the 3/2-padded grid; |.| is the Euclidean length for vectors."""
    samples = _padded_samples(f)
    return float(np.sqrt((samples**2).sum(axis=0).max()))


def l4_norm(f: ScalarSpectralField | VectorSpectralField) -> float:
    """L4 norm by quadrature on the 3/2-padded grid (suppresses aliasing)."""
    samples = _padded_samples(f)
    area = (2 * np.pi * f.grid.box_length) ** 2
    quad = ((samples**2).sum(axis=0) ** 2).mean() * area
    return float(quad**0.25)


def parseval_defect(f: ScalarSpectralField) -> float:
    """Relative gap between physical-quadrature and spectral L2 norms."""
    phys = to_physical(f)
    quad = float(np.sqrt((phys**2).mean()) * 2 * np.pi * f.grid.box_length)
    spec = l2_norm(f)
    scale = max(quad, spec, 1e-300)
    return abs(quad - spec) / scale


def hermitian_defect(f: ScalarSpectralField) -> float:
    """Relative deviation from coeff(-k) = conj(coeff(k))."""
    n = f.grid.n
    rev = (-np.arange(n)) % n
    mirrored = np.conj(f.coeffs[np.ix_(rev, rev)])
    scale = max(np.abs(f.coeffs).max(), 1e-300)
    return float(np.abs(f.coeffs - mirrored).max() / scale)


def require_finite(values: np.ndarray, context: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"non-finite values in {context}")
