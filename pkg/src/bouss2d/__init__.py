"""Pseudo-spectral 2D Boussinesq flow with temperature-dependent diffusivities.

Subpackage map:
    spectral    Fourier fields, transforms, cutoffs, Leray projection
    fieldio     binary field snapshots
    laws        coefficient laws a(theta), b(theta) and the primitive transform
    lp          dyadic (Littlewood-Paley) analysis and Sobolev norms
    solver      the coupled solver, the linear parabolic solver, pressure
    ledger      per-run time series of norms and balance terms
    diagnostics energy residuals, inequality monitors, stability harnesses
    initial     synthesized initial data with prescribed regularity
    config      TOML run configuration
    suites      packaged experiment suites
    cli         command-line entry point
"""

__version__ = "0.1.0"
