"""Deterministic initial data: Taylor-Green cells, random Sobolev fields, files.

Randomness comes from numpy's counter-based Philox generator keyed by
(seed, stream) so each unknown draws an independent, platform-stable stream:
stream 0 is the temperature, streams 1 and 2 the velocity components, and
stream 3 is reserved for twin-run perturbations.

Random fields are synthesized in Fourier space with an isotropic power-law
envelope |k|^-(s+1.05): square-summable against the H^s weight (so the target
norm is finite as the grid grows) while keeping enough tail that every
strictly higher Sobolev norm grows with resolution.  Spectra are restricted to
the closed ball |k| <= N/(2L) with the Nyquist ring removed, Hermitian
symmetrized, mean-zeroed, and scaled to hit the requested H^s norm exactly.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import ConfigError, DomainError
from .fieldio import read_snapshot
from .lp import SOBOLEV_RANGE, sobolev_norm
from .spectral import (
    Grid,
    ScalarSpectralField,
    VectorSpectralField,
    _ball_mask,
    leray_project,
    to_spectral,
    zero_field,
    zero_vector,
)

TEMPERATURE_STREAM = 0
VELOCITY_STREAMS = (1, 2)
PERTURBATION_STREAM = 3


def _generator(seed: int, stream: int) -> np.random.Generator:
    if not 0 <= int(seed) < 2**63:
        raise ConfigError(f"seed must be a nonnegative 64-bit integer, got {seed}")
    key = int(seed) + (int(stream) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _random_coeffs(grid: Grid, s: float, rng: np.random.Generator) -> np.ndarray:
    """One unnormalized mean-zero Hermitian draw with the |k|^-(s+1.05) envelope."""
    n = grid.n
    raw = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    radius = np.sqrt(grid.k_squared)
    with np.errstate(divide="ignore"):
        envelope = np.where(radius > 0.0, radius ** -(s + 1.05), 0.0)
    c = raw * envelope
    keep = (
        _ball_mask(grid, grid.max_radius)
        & grid._nyquist_free1
        & grid._nyquist_free2
    )
    c = np.where(keep, c, 0.0)
    rev = (-np.arange(n)) % n
    c = 0.5 * (c + np.conj(c[np.ix_(rev, rev)]))
    c[0, 0] = 0.0
    return c


def random_hs_field(grid: Grid, s: float, norm: float, seed: int, stream: int) -> ScalarSpectralField:
    """A random real field with ||.||_{H^s} equal to norm (exactly, by scaling)."""
    if not SOBOLEV_RANGE[0] <= s <= SOBOLEV_RANGE[1]:
        raise DomainError(f"Sobolev exponent {s} outside {list(SOBOLEV_RANGE)}")
    if norm < 0:
        raise ConfigError(f"requested norm must be nonnegative, got {norm}")
    field = ScalarSpectralField(grid, _random_coeffs(grid, s, _generator(seed, stream)))
    if norm == 0.0:
        return zero_field(grid)
    measured = sobolev_norm(field, s)
    return ScalarSpectralField(grid, field.coeffs * (norm / measured))


def random_hs_velocity(grid: Grid, s: float, norm: float, seed: int) -> VectorSpectralField:
    """A divergence-free mean-zero random velocity with H^s norm equal to norm."""
    if not SOBOLEV_RANGE[0] <= s <= SOBOLEV_RANGE[1]:
        raise DomainError(f"Sobolev exponent {s} outside {list(SOBOLEV_RANGE)}")
    if norm < 0:
        raise ConfigError(f"requested norm must be nonnegative, got {norm}")
    comps = tuple(
        ScalarSpectralField(grid, _random_coeffs(grid, s, _generator(seed, stream)))
        for stream in VELOCITY_STREAMS
    )
    v = leray_project(VectorSpectralField(components=comps))
    if norm == 0.0:
        return zero_vector(grid)
    measured = sobolev_norm(v, s)
    scaled = tuple(ScalarSpectralField(grid, c.coeffs * (norm / measured)) for c in v.components)
    return VectorSpectralField(components=scaled, divfree_certified=True)


def taylor_green_velocity(grid: Grid, amplitude: float = 1.0) -> VectorSpectralField:
    """The cellular flow A (sin(x1/L) cos(x2/L), -cos(x1/L) sin(x2/L))."""
    x1, x2 = grid.mesh
    invl = 1.0 / grid.box_length
    u1 = to_spectral(amplitude * np.sin(x1 * invl) * np.cos(x2 * invl), grid)
    u2 = to_spectral(-amplitude * np.cos(x1 * invl) * np.sin(x2 * invl), grid)
    return VectorSpectralField(components=(u1, u2), divfree_certified=True)


def taylor_green_scalar(grid: Grid, amplitude: float = 1.0) -> ScalarSpectralField:
    """The matching cellular scalar A cos(x1/L) cos(x2/L)."""
    x1, x2 = grid.mesh
    invl = 1.0 / grid.box_length
    return to_spectral(amplitude * np.cos(x1 * invl) * np.cos(x2 * invl), grid)


def generate_initial(
    spec: Mapping[str, object], grid: Grid, seed: int
) -> ScalarSpectralField | VectorSpectralField:
    """Build the initial field described by spec on the given grid.

    spec holds "kind" (zero | taylor_green | random_hs | file) plus
    "unknown" ("temperature" or "velocity") and kind-specific keys:
    random_hs takes s and norm (and an optional seed override); file takes
    path (scalar) or path1/path2 (velocity components).  Velocities are
    always returned Leray-projected and mean-zero.
    """
    kind = str(spec.get("kind", ""))
    unknown = str(spec.get("unknown", "temperature"))
    if unknown not in ("temperature", "velocity"):
        raise ConfigError(f"unknown field role '{unknown}'")
    vector = unknown == "velocity"

    if kind == "zero":
        return zero_vector(grid) if vector else zero_field(grid)

    if kind == "taylor_green":
        amplitude = float(spec.get("amplitude", 1.0))
        return (
            taylor_green_velocity(grid, amplitude)
            if vector
            else taylor_green_scalar(grid, amplitude)
        )

    if kind == "random_hs":
        if "s" not in spec or "norm" not in spec:
            raise ConfigError("random_hs initial data needs 's' and 'norm'")
        s = float(spec["s"])
        norm = float(spec["norm"])
        use_seed = int(spec.get("seed", seed))
        if vector:
            return random_hs_velocity(grid, s, norm, use_seed)
        return random_hs_field(grid, s, norm, use_seed, TEMPERATURE_STREAM)

    if kind == "file":
        if vector:
            if "path1" not in spec or "path2" not in spec:
                raise ConfigError("file initial data for velocity needs 'path1' and 'path2'")
            comps = (
                read_snapshot(str(spec["path1"]), grid),
                read_snapshot(str(spec["path2"]), grid),
            )
            v = leray_project(VectorSpectralField(components=comps))
            centered = tuple(
                ScalarSpectralField(grid, np.where(_zero_mode_mask(grid), 0.0, c.coeffs))
                for c in v.components
            )
            return VectorSpectralField(components=centered, divfree_certified=True)
        if "path" not in spec:
            raise ConfigError("file initial data needs 'path'")
        return read_snapshot(str(spec["path"]), grid)

    raise ConfigError(f"unknown initial data kind '{kind}'")


def _zero_mode_mask(grid: Grid) -> np.ndarray:
    mask = np.zeros((grid.n, grid.n), dtype=bool)
    mask[0, 0] = True
    return mask
