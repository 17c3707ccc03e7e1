"""Complex Gamma and Gauss hypergeometric functions.

Only the parameter ranges consumed by the spectral kernels are supported:
``Im z`` up to about 1e4 for Gamma, and real arguments ``z < 1`` for 2F1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import ConvergenceError, DomainError, PoleError

SERIES_CAP = 100_000

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
# B_2k / (2k (2k-1)) for k = 1..8
_STIRLING = np.array([
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
])
_SHIFT = 15.0


def _log_sin_pi(z):
    """log(sin(pi z)) without overflow for large |Im z| (branch unspecified)."""
    w = np.pi * z
    out = np.empty_like(w)
    small = np.abs(w.imag) < 20.0
    out[small] = np.log(np.sin(w[small]))
    up = ~small & (w.imag > 0)
    wu = w[up]
    out[up] = -1j * wu + np.log1p(-np.exp(2j * wu)) + (0.5j * np.pi - math.log(2.0))
    dn = ~small & (w.imag < 0)
    wd = w[dn]
    out[dn] = 1j * wd + np.log1p(-np.exp(-2j * wd)) - (0.5j * np.pi + math.log(2.0))
    return out


def _loggamma_right(z):
    # Re z >= 1/2: shift upward with the recurrence, then Stirling.
    need = np.where(np.abs(z.imag) >= _SHIFT, 0.0, np.maximum(0.0, np.ceil(_SHIFT - z.real)))
    nmax = int(need.max()) if need.size else 0
    acc = np.zeros_like(z)
    for k in range(nmax):
        mask = k < need
        acc[mask] += np.log(z[mask] + k)
    w = z + need
    inv = 1.0 / w
    inv2 = inv * inv
    series = np.zeros_like(w)
    for c in _STIRLING[::-1]:
        series = series * inv2 + c
    series *= inv
    return (w - 0.5) * np.log(w) - w + _LOG_SQRT_2PI + series - acc


def loggamma(z):
    """log Gamma(z) for complex z; the imaginary part is defined mod 2*pi."""
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    pole = (z.imag == 0) & (z.real <= 0) & (z.real == np.round(z.real))
    if pole.any():
        raise PoleError(f"Gamma has a pole at {z[pole][0].real:g}")
    out = np.empty_like(z)
    refl = z.real < 0.5
    out[~refl] = _loggamma_right(z[~refl])
    if refl.any():
        zl = z[refl]
        out[refl] = math.log(math.pi) - _log_sin_pi(zl) - _loggamma_right(1.0 - zl)
    return out[0] if scalar else out


def gamma_complex(z):
    """Gamma(z) for complex z. Underflows to 0 for very large |Im z|; use loggamma there."""
    return np.exp(loggamma(z))


@dataclass(frozen=True)
class HypArgs:
    alpha: complex
    beta: complex
    gamma: complex
    z: complex

    def __post_init__(self):
        g = complex(self.gamma)
        if g.imag == 0 and g.real <= 0 and g.real == round(g.real):
            raise PoleError("gamma must not be zero or a negative integer")


def _series_float(a, b, c, z, tol, cap=SERIES_CAP):
    """Vectorised Gauss series; returns (value, peak |term|)."""
    term = np.ones_like(z)
    total = np.ones_like(z)
    peak = np.ones(z.shape)
    az = np.abs(z)
    zmax = float(az.max()) if z.size else 0.0
    for k in range(cap):
        term = term * ((a + k) * (b + k) / ((c + k) * (k + 1))) * z
        total = total + term
        mag = np.abs(term)
        np.maximum(peak, mag, out=peak)
        ratio = abs((a + k + 1) * (b + k + 1) / ((c + k + 1) * (k + 2))) * zmax
        rho = max(ratio, zmax)
        if rho < 1.0 and float(mag.max(initial=0.0)) * rho / (1.0 - rho) <= tol:
            return total, peak
    raise ConvergenceError(f"hypergeometric series did not converge within {cap} terms")


def _series_mp(a, b, c, z, tol, peak):
    dps = 20 + int(max(0.0, math.log10(max(peak, 1.0))))
    with mpmath.workdps(dps):
        a_, b_, c_, z_ = mpmath.mpc(a), mpmath.mpc(b), mpmath.mpc(c), mpmath.mpc(z)
        term = mpmath.mpc(1)
        total = mpmath.mpc(1)
        for k in range(SERIES_CAP):
            term *= (a_ + k) * (b_ + k) / ((c_ + k) * (k + 1)) * z_
            total += term
            ratio = abs((a_ + k + 1) * (b_ + k + 1) / ((c_ + k + 1) * (k + 2))) * abs(z_)
            rho = max(ratio, abs(z_))
            if rho < 1 and abs(term) * rho / (1 - rho) <= tol:
                return complex(total)
    raise ConvergenceError("hypergeometric series did not converge")


def hyp2f1_series(a, b, c, z, tol=1e-15):
    """Gauss series for |z| < 1, vectorised over z.

    Elements whose partial sums suffer cancellation beyond ``tol`` are
    re-summed in extended precision.
    """
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    if np.any(np.abs(z) >= 1.0):
        raise DomainError("series path requires |z| < 1")
    a, b, c = complex(a), complex(b), complex(c)
    val, peak = _series_float(a, b, c, z, tol)
    bad = np.nonzero(peak * 1e-15 > tol)[0]
    for i in bad:
        val[i] = _series_mp(a, b, c, z[i], tol, peak[i])
    return val[0] if scalar else val


def _quadratic_parts(z):
    z = np.asarray(z, dtype=float)
    if np.any(z >= 1.0):
        raise DomainError("quadratic transform requires z < 1")
    root = np.sqrt(1.0 - z)
    if np.any(~np.isfinite(root)):
        raise DomainError("non-real square root in quadratic transform")
    den = 1.0 + root
    w = (z / (den * den)) ** 2
    return den, w


def hyp2f1_quadratic(alpha, z, tol=1e-15):
    """F(alpha, alpha; 2 alpha; z) through the quadratic transformation.

    Valid for real z < 1; the inner argument stays in [0, 1) so the
    transformed series converges geometrically for every z <= 0.
    """
    scalar = np.ndim(z) == 0
    den, w = _quadratic_parts(np.atleast_1d(z))
    alpha = complex(alpha)
    pref = np.exp(-2.0 * alpha * np.log(0.5 * den))
    inner, _ = _series_float(alpha, 0.5, alpha + 0.5, w.astype(complex), tol * 0.5)
    out = pref * inner
    return out[0] if scalar else out


def hyp2f1(args: HypArgs, tol: float = 1e-15, method: str = "auto") -> complex:
    """Gauss hypergeometric function F(alpha, beta; gamma; z).

    ``method="auto"`` switches to the quadratic transform when the
    parameters have the F(a, a; 2a; z) shape and z is real and below -1/2.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, b, c, z = (complex(v) for v in (args.alpha, args.beta, args.gamma, args.z))
    if z == 0:
        return 1.0 + 0.0j
    quad_ok = a == b and c == 2 * a and z.imag == 0 and z.real < 1
    if method == "quadratic" or (method == "auto" and quad_ok and z.real < -0.5):
        if not quad_ok:
            raise DomainError("quadratic transform needs F(a, a; 2a; z) with real z < 1")
        return complex(hyp2f1_quadratic(a, z.real, tol))
    if method not in ("auto", "series", "quadratic"):
        raise ValueError(f"unknown method {method!r}")
    return complex(hyp2f1_series(a, b, c, z, tol))
