"""Stationary-phase analysis of the oscillatory integral L(r; x).

The phase is

    phi(z) = -r log z + x log(1 + z/x) + 2r log(1 + sqrt(1 + z/x)),

its inner saddle z0 solves phi'(z0) = 0, and L(r; x) is compared with the
first-order saddle value.  Also here: the outer saddle in x and the
inversion of tau = x + alpha x^xi log x.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import quad
from .errors import ConvergenceError, DomainError, PrecisionError

SERIES_REGIME = 0.2
B_IMPL = 0.1


class RegimeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PhaseContext:
    r: float
    x: float
    xi: float
    delta: float = 0.1

    def __post_init__(self):
        if not (self.r > 0 and self.x > 0):
            raise DomainError("r and x must be positive")
        if not 0 < self.xi <= 0.5:
            raise DomainError("xi must lie in (0, 1/2]")
        if not 0 < self.delta < self.xi:
            raise DomainError("delta must lie in (0, xi)")

    @property
    def ratio(self) -> float:
        return self.r / self.x

    def require_regime(self):
        if self.ratio > SERIES_REGIME:
            raise DomainError(f"r/x = {self.ratio:.3g} exceeds {SERIES_REGIME}")


def phase(ctx: PhaseContext, z, order: int = 0):
    """phi and its first two z-derivatives."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DomainError("phase requires z > 0")
    r, x = ctx.r, ctx.x
    w = z / x
    su = np.sqrt(1.0 + w)
    if order == 0:
        return -r * np.log(z) + x * np.log1p(w) + 2.0 * r * np.log1p(su)
    if order == 1:
        # -r/z + x/(x+z) written to avoid the cancellation of the two O(1) terms
        return (z - r) / z - z / (x + z) + r / (x * (su + 1.0 + w))
    if order == 2:
        return (r / z ** 2 - x / (x + z) ** 2
                - r / x ** 2 * (1.0 + 0.5 / su) / (su + 1.0 + w) ** 2)
    raise ValueError("order must be 0, 1 or 2")


def phase_dx(ctx: PhaseContext, z):
    """Partial derivative of phi with respect to x at fixed z."""
    z = np.asarray(z, dtype=float)
    r, x = ctx.r, ctx.x
    w = z / x
    su = np.sqrt(1.0 + w)
    return np.log1p(w) - w / (1.0 + w) - r * w / (x * su * (1.0 + su))


def amplitude(ctx: PhaseContext, z):
    """C(z) = z^-1/2 (1+z/x)^-1/2 exp(-x^(2 xi) log^2(1+z/x) / 4) / (1 + sqrt(1+z/x))."""
    z = np.asarray(z, dtype=float)
    w = z / ctx.x
    lw = np.log1p(w)
    return (z ** -0.5 * (1.0 + w) ** -0.5 * np.exp(-0.25 * ctx.x ** (2 * ctx.xi) * lw * lw)
            / (1.0 + np.sqrt(1.0 + w)))


def series_z0(ctx: PhaseContext) -> float:
    q = ctx.ratio
    return ctx.r * (1.0 + q / 2.0 + q * q / 8.0)


def saddle_z0(ctx: PhaseContext, mode: str = "newton") -> float:
    """Root of phi' near z = r, by Newton's method or by the three-term series."""
    ctx.require_regime()
    if mode == "series":
        return series_z0(ctx)
    if mode != "newton":
        raise ValueError("mode must be 'newton' or 'series'")
    scale = abs(float(phase(ctx, ctx.r / 2.0, 1)))
    z = ctx.r
    for _ in range(50):
        g = float(phase(ctx, z, 1))
        if abs(g) <= 1e-14 * scale:
            return z
        z_new = z - g / float(phase(ctx, z, 2))
        if z_new <= 0:
            z_new = z / 2.0
        if z_new == z:
            return z
        z = z_new
    raise ConvergenceError("Newton iteration for the saddle did not converge")


def stationarity_residual(ctx: PhaseContext, z0: float) -> float:
    return abs(float(phase(ctx, z0, 1))) / abs(float(phase(ctx, ctx.r / 2.0, 1)))


def saddle_value(ctx: PhaseContext, x: float | None = None) -> float:
    """phi(z0(x)) at the Newton saddle, optionally at a shifted x."""
    c = ctx if x is None else PhaseContext(ctx.r, x, ctx.xi, ctx.delta)
    return float(phase(c, saddle_z0(c), 0))


def dphi_dx_at_saddle(ctx: PhaseContext, rel_step: float = 2e-3):
    """Total x-derivative of phi(z0(x)) by a five-point difference.

    Returns (numerical derivative, partial derivative at z0, -r^3 / (24 x^3)).
    """
    ctx.require_regime()
    h = rel_step * ctx.x
    f = [saddle_value(ctx, ctx.x + k * h) for k in (-2, -1, 1, 2)]
    total = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h)
    partial = float(phase_dx(ctx, saddle_z0(ctx)))
    return total, partial, -ctx.r ** 3 / (24.0 * ctx.x ** 3)


# --------------------------------------------------------------------------
# L(r; x)


def _prefactor(r: float) -> complex:
    # 2^(1 - 2ir)
    return 2.0 * complex(np.exp(-2j * r * math.log(2.0)))


def _l_direct(ctx: PhaseContext, upper: float, tol: float):
    # z = e^w turns z^(-1/2 - ir) dz into e^(w/2 - irw) dw; since |z C(z)| <= sqrt(z)/2
    # the neglected range w < w_lo contributes at most exp(w_lo / 2).
    w_lo = 2.0 * math.log(1e-2 * tol)
    w_hi = math.log(upper)

    def freq(w):
        z = np.exp(w)
        return np.abs(z * phase(ctx, z, 1)) + 20.0

    def integrand(w):
        z = np.exp(w)
        return z * amplitude(ctx, z) * np.exp(1j * phase(ctx, z, 0))

    edges = quad.oscillatory_edges(w_lo, w_hi, freq)
    val, err = quad.gl_integrate(integrand, edges, order=10)
    return _prefactor(ctx.r) * val, 2.0 * err + math.exp(w_lo / 2.0)


def L_eval(ctx: PhaseContext, mode: str = "direct", tol: float = 1e-10, upper_scale: float = 1.0):
    """L(r; x) by quadrature (``direct``) or by the first-order saddle value.

    Returns (value, error estimate); the saddle error estimate is NaN because
    only the leading stationary-phase term is used.
    """
    if mode == "direct":
        upper = upper_scale * ctx.x ** (1.0 - ctx.delta)
        val, err = _l_direct(ctx, upper, tol)
        if err > max(tol, 1e-12) * max(1.0, abs(val)) * 10:
            raise PrecisionError(f"L quadrature error {err:.3g} above tolerance")
        return val, err
    if mode == "saddle":
        if ctx.ratio > SERIES_REGIME:
            warnings.warn(f"r/x = {ctx.ratio:.3g} is outside the saddle regime", RegimeWarning)
        z0 = saddle_z0(ctx) if ctx.ratio <= SERIES_REGIME else _newton_unchecked(ctx)
        p2 = float(phase(ctx, z0, 2))
        val = (_prefactor(ctx.r) * math.sqrt(2.0 * math.pi / p2) * float(amplitude(ctx, z0))
               * complex(np.exp(1j * (float(phase(ctx, z0, 0)) + math.pi / 4.0))))
        return val, math.nan
    raise ValueError("mode must be 'direct' or 'saddle'")


def _newton_unchecked(ctx):
    z = ctx.r
    for _ in range(50):
        z_new = z - float(phase(ctx, z, 1)) / float(phase(ctx, z, 2))
        if abs(z_new - z) <= 1e-15 * z:
            return z_new
        z = z_new
    raise ConvergenceError("Newton iteration for the saddle did not converge")


@dataclass(frozen=True)
class SaddleReport:
    z0_newton: float
    z0_series: float
    phi0: float
    phi2: float
    L_direct: complex
    L_saddle: complex
    rel_err: float

    def __post_init__(self):
        if not self.phi2 > 0:
            raise ValueError("phi'' must be positive at the saddle")


def saddle_report(ctx: PhaseContext, tol: float = 1e-10) -> SaddleReport:
    zn = saddle_z0(ctx, "newton")
    zs = saddle_z0(ctx, "series")
    ld, _ = L_eval(ctx, "direct", tol)
    ls, _ = L_eval(ctx, "saddle")
    return SaddleReport(zn, zs, float(phase(ctx, zn, 0)), float(phase(ctx, zn, 2)),
                        ld, ls, abs(ld - ls) / abs(ld))


# --------------------------------------------------------------------------
# outer saddle and tau inversion


def outer_phase(r: float, t: float, x, order: int = 0):
    """H(x) = (r - t) log x + r^3 / (48 x^2) (the h-term is taken as zero)."""
    x = np.asarray(x, dtype=float)
    if order == 0:
        return (r - t) * np.log(x) + r ** 3 / (48.0 * x ** 2)
    if order == 1:
        return (r - t) / x - r ** 3 / (24.0 * x ** 3)
    if order == 2:
        return -(r - t) / x ** 2 + r ** 3 / (8.0 * x ** 4)
    raise ValueError("order must be 0, 1 or 2")


def outer_saddle_x0(r: float, t: float) -> float:
    """Stationary point of H in x, Newton-refined from sqrt(r^3 / (24 (r - t)))."""
    if not r > t:
        raise DomainError("no real outer saddle unless r > t")
    x = math.sqrt(r ** 3 / (24.0 * (r - t)))
    for _ in range(50):
        step = float(outer_phase(r, t, x, 1)) / float(outer_phase(r, t, x, 2))
        x -= step
        if abs(step) <= 1e-15 * x:
            return x
    raise ConvergenceError("outer saddle Newton iteration did not converge")


def invert_tau(tau: float, alpha: float, xi: float):
    """Solve tau = x + alpha x^xi log x for x; returns (x, dx/dtau)."""
    if abs(alpha) > B_IMPL:
        raise DomainError(f"|alpha| must not exceed {B_IMPL}")
    if tau < 10:
        raise DomainError("tau must be >= 10")
    if not 0 < xi <= 0.5:
        raise DomainError("xi must lie in (0, 1/2]")

    def dtau(x):
        return 1.0 + alpha * x ** (xi - 1.0) * (xi * math.log(x) + 1.0)

    x = tau - alpha * tau ** xi * math.log(tau)
    for _ in range(60):
        d = dtau(x)
        if d <= 0:
            raise DomainError("tau(x) is not increasing at the iterate")
        step = (x + alpha * x ** xi * math.log(x) - tau) / d
        x -= step
        if abs(step) <= 1e-15 * x:
            break
    else:
        raise ConvergenceError("tau inversion did not converge")
    d = dtau(x)
    if d <= 0:
        raise DomainError("tau(x) is not increasing at the solution")
    return x, 1.0 / d
