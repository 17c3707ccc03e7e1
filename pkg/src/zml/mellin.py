"""The modified Mellin transform Z_2(s) = int_1^oo |zeta(1/2+ix)|^4 x^-s dx.

Every evaluator works with the reduced transform

    Z_2(s) - R(s) = int_1^oo g(x) x^-s dx,   g = |zeta|^4 - Q_4(log x),

where R(s) = sum_k q_k k! / (s-1)^(k+1) is the transform of Q_4(log x) on
[1, oo) and Q_4 = P_4 + P_4'.  The reduced transform continues to
Re s > 1/2, and on any finite range [1, x_max] it is entire, which the
inversion and contour routines exploit.

Two evaluators are provided: ``DirectZ2`` (quadrature of g up to x_max plus
an error bound for the rest) and ``DecomposedZ2`` (the four-piece smooth
partition with the Gaussian-smoothed moment psi in the middle range and
repeated integration by parts for the tail).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import quad
from .config import default_envelope, default_polynomial
from .errors import DataError, DomainError, PrecisionError
from .moments import MomentPolynomial, moment_integral
from .spectral import psi_grid
from .zetacore import zeta4_array

S_CHUNK = 32


class SpectralDataInsufficient(DataError):
    """The spectral expansion path cannot produce psi to the requested budget."""


class IntervalWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# smooth partition


def _logistic_parts(g):
    """L = 1/(1+e^-g) and L(1-L), both computed without overflow."""
    e = np.exp(-np.abs(g))
    L = np.where(g >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    L1 = e / (1.0 + e) ** 2
    return L, L1


def ramp(u, order: int = 0):
    """C-infinity step S(u) = 1/(1 + exp(1/u - 1/(1-u))) on [0, 1] and its derivatives.

    S is 0 for u <= 0, 1 for u >= 1, and every derivative vanishes at both ends.
    """
    if order not in range(5):
        raise ValueError("order must be 0..4")
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    if order == 0:
        out[u >= 1] = 1.0
    m = (u > 0) & (u < 1)
    if not m.any():
        return out
    v = u[m]
    g = 1.0 / (1.0 - v) - 1.0 / v
    L, L1 = _logistic_parts(g)
    if order == 0:
        out[m] = L
        return out
    # g^(k) = k!/(1-u)^(k+1) + (-1)^(k+1) k!/u^(k+1)
    d = [None] + [math.factorial(k) * ((1.0 - v) ** -(k + 1) + (-1) ** (k + 1) * v ** -(k + 1))
                  for k in range(1, 5)]
    L2 = L1 * (1.0 - 2.0 * L)
    L3 = L1 * (1.0 - 6.0 * L + 6.0 * L * L)
    L4 = L1 * (1.0 - 2.0 * L) * (1.0 - 12.0 * L + 12.0 * L * L)
    g1, g2, g3, g4 = d[1], d[2], d[3], d[4]
    if order == 1:
        val = L1 * g1
    elif order == 2:
        val = L2 * g1 ** 2 + L1 * g2
    elif order == 3:
        val = L3 * g1 ** 3 + 3.0 * L2 * g1 * g2 + L1 * g3
    else:
        val = (L4 * g1 ** 4 + 6.0 * L3 * g1 ** 2 * g2
               + L2 * (3.0 * g2 ** 2 + 4.0 * g1 * g3) + L1 * g4)
    # far inside the flat ends the logistic factor underflows before the poles of g' blow up
    out[m] = np.where(np.isfinite(val), val, 0.0)
    return out


@lru_cache(maxsize=1)
def ramp_bounds() -> tuple[float, ...]:
    """K_l = max |S^(l)| on [0, 1] for l = 0..4, maximised on a dense grid."""
    u = np.linspace(0.0, 1.0, 200001)
    return tuple(float(np.max(np.abs(ramp(u, k)))) for k in range(5))


@dataclass(frozen=True)
class SmoothingPartition:
    """rho + sigma + omega = 1 on [1, oo), with the ramps on [X, 2X] and [Y, 2Y].

    With U = S((x - X)/X) and D = S((x - Y)/Y): rho = 1 - U, sigma = U (1 - D),
    omega = U D.  For Y >= 2X this is rho = 1 on [1, X], sigma = 1 on
    [2X, Y] and omega = 1 - sigma on [Y, oo).
    """

    X: float
    Y: float

    def __post_init__(self):
        if not self.X > 1:
            raise DomainError("X must exceed 1")
        if not self.Y > self.X:
            raise DomainError("Y must exceed X")

    def _factor(self, x, base, order):
        return ramp((x - base) / base, order) / base ** order

    def _up_down(self, x, order):
        U = [self._factor(x, self.X, k) for k in range(order + 1)]
        D = [self._factor(x, self.Y, k) for k in range(order + 1)]
        return U, D

    def rho(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        v = -self._factor(x, self.X, order)
        return v + 1.0 if order == 0 else v

    def omega(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        U, D = self._up_down(x, order)
        return sum(math.comb(order, k) * U[k] * D[order - k] for k in range(order + 1))

    def sigma(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        return -self.rho(x, order) - self.omega(x, order) + (1.0 if order == 0 else 0.0)

    def bounds(self) -> tuple[float, ...]:
        return ramp_bounds()


def smoothing_eval(part: SmoothingPartition, x, which: str, order: int = 0):
    """Value or derivative (order 0..4) of rho, sigma or omega at x >= 1."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 1):
        raise DomainError("x must be >= 1")
    if order not in range(5):
        raise ValueError("order must be 0..4")
    fn = {"rho": part.rho, "sigma": part.sigma, "omega": part.omega}.get(which)
    if fn is None:
        raise ValueError("which must be 'rho', 'sigma' or 'omega'")
    out = fn(x, order)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# analytic pieces


@dataclass(frozen=True)
class MellinPoint:
    s: complex
    value: complex
    err: float
    method: str

    def __post_init__(self):
        if not self.s.real > 0.5:
            raise DomainError("Re s must exceed 1/2")
        if not self.err >= 0:
            raise ValueError("err must be non-negative")


def polar_part(s, poly: MomentPolynomial):
    """R(s) = int_1^oo Q_4(log x) x^-s dx = sum_k q_k k! / (s-1)^(k+1)."""
    s = np.asarray(s, dtype=complex)
    if np.any(s == 1):
        raise DomainError("R(s) has a pole at s = 1")
    q = poly.q_coefficients()
    w = 1.0 / (s - 1.0)
    return sum(q[k] * math.factorial(k) * w ** (k + 1) for k in range(5))


def q4_tail(s, X: float, poly: MomentPolynomial):
    """int_X^oo Q_4(log x) x^-s dx (continued analytically to s != 1)."""
    s = np.asarray(s, dtype=complex)
    q = poly.q_coefficients()
    L = math.log(X)
    w = 1.0 / (s - 1.0)
    tot = 0.0
    for k in range(5):
        for j in range(k + 1):
            tot = tot + q[k] * math.factorial(k) / math.factorial(k - j) * L ** (k - j) * w ** (j + 1)
    return np.exp((1.0 - s) * L) * tot


def _upper_gamma5(y: float) -> float:
    # Gamma(5, y) = e^-y sum_j 4!/j! y^j
    return math.exp(-y) * sum(24.0 / math.factorial(j) * y ** j for j in range(5))


def envelope_tail(sigma: float, abs_s: float, X: float, K: float) -> float:
    """Bound for |int_X^oo E_2'(x) x^-s dx| from |E_2(x)| <= K sqrt(x) log^4 x.

    Integration by parts gives |E_2(X)| X^-sigma + |s| int_X^oo |E_2| x^(-sigma-1) dx.
    """
    if sigma <= 0.5:
        return math.inf
    L = math.log(X)
    a = sigma - 0.5
    return K * (math.sqrt(X) * L ** 4 * X ** -sigma + abs_s * _upper_gamma5(a * L) / a ** 5)


def _default_poly(poly):
    return poly if poly is not None else default_polynomial()


def _default_env(K):
    return K if K is not None else default_envelope()


# --------------------------------------------------------------------------
# shared oscillatory sums


class _LogNodes:
    """Gauss-Legendre nodes in u = log x on [log a, log b] resolving |zeta|^4 and x^-it, |t| <= t_max."""

    def __init__(self, a: float, b: float, t_max: float, order: int = 8, fraction: float = 0.25):
        def freq(u):
            x = np.exp(u)
            return x * np.maximum(np.log(x / quad.TWO_PI), 1.0) + t_max + 1.0

        self.edges = quad.oscillatory_edges(math.log(a), math.log(b), freq, fraction)
        self.order = order
        self.uc, self.wc = quad.panel_nodes(self.edges, order)
        self.uf, self.wf = quad.panel_nodes(quad.halve(self.edges), order)


def _mellin_sums(u, weights, s_values, threads: int = 1):
    """sum_j weights_j exp(-s u_j) for each s (weights already include any x factor)."""
    s_values = np.atleast_1d(np.asarray(s_values, dtype=complex))
    weights = np.asarray(weights)

    def run(start):
        s = s_values[start:start + S_CHUNK]
        if s.size > 2:
            d0 = (s[-1] - s[0]) / (s.size - 1)
            drift = np.max(np.abs(s[0] + d0 * np.arange(s.size) - s))
        if s.size > 2 and drift <= 1e-13 * max(1.0, float(np.max(np.abs(s)))):
            # evenly spaced s: advance exp(-s u) by repeated multiplication
            rows = np.empty((s.size, u.size), dtype=complex)
            rows[0] = np.exp(-s[0] * u)
            step = np.exp(-d0 * u)
            for k in range(1, s.size):
                np.multiply(rows[k - 1], step, out=rows[k])
            return rows @ weights
        return np.exp(-np.outer(s, u)) @ weights

    parts = quad.pmap(run, range(0, s_values.size, S_CHUNK), threads)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=complex)


# --------------------------------------------------------------------------
# direct evaluator


class DirectZ2:
    """Z_2 from quadrature of g = |zeta|^4 - Q_4 on [1, x_max].

    ``reduced(s)`` is the exact transform of g on [1, x_max] (an entire
    function of s).  ``__call__`` adds R(s) and bounds the omitted
    int_{x_max}^oo g x^-s with the E_2 envelope, which requires Re s > 1/2
    and is only useful for Re s > 1.

    With ``taper=True`` g is multiplied by 1 - S on [x_max/2, x_max], so
    the transformed function is smooth at its upper end; this is meant for
    inversion, where it suppresses the Gibbs ringing of a hard cut.
    """

    method = "direct"

    def __init__(self, x_max: float, poly: MomentPolynomial | None = None, t_max: float = 100.0,
                 cache=None, threads: int = 1, envelope: float | None = None, taper: bool = False,
                 order: int = 8):
        if x_max <= 1:
            raise DomainError("x_max must exceed 1")
        self.x_max = float(x_max)
        self.poly = _default_poly(poly)
        self.t_max = float(t_max)
        self.K = _default_env(envelope)
        self.threads = threads
        self.taper = taper
        self.cache = cache
        self.order = order
        self.nodes = None

    def _build(self):
        if self.nodes is not None:
            return
        n = _LogNodes(1.0, self.x_max, self.t_max, self.order)
        gc, _ = self._g(n.uc, self.cache)
        gf, ef = self._g(n.uf, self.cache)
        # integrand in u: g(e^u) e^u e^(-s u)
        self._ac = gc * np.exp(n.uc) * n.wc
        self._af = gf * np.exp(n.uf) * n.wf
        self._ae = ef * np.exp(n.uf) * n.wf
        self.nodes = n

    def _cut(self, x):
        if not self.taper:
            return np.ones_like(x)
        h = self.x_max / 2.0
        return 1.0 - ramp((x - h) / h)

    def _g(self, u, cache):
        x = np.exp(u)
        v, e = quad.eval_chunked(lambda c: zeta4_array(c, cache), x, self.threads)
        c = self._cut(x)
        return (v - self.poly.q4(u)) * c, e * c

    def g(self, x):
        """The (optionally tapered) reduced integrand at arbitrary x in [1, x_max]."""
        x = np.asarray(x, dtype=float)
        v, _ = zeta4_array(x)
        return (v - self.poly.q4(np.log(x))) * self._cut(x)

    def _check(self, s):
        if np.any(np.abs(s.imag) > self.t_max * (1 + 1e-12)):
            raise DomainError(f"|Im s| exceeds the resolved range t_max = {self.t_max:g}")

    def reduced(self, s):
        """(transform of g on [1, x_max], quadrature error) for an array of s."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        self._check(s)
        self._build()
        n = self.nodes
        fine = _mellin_sums(n.uf, self._af, s, self.threads)
        coarse = _mellin_sums(n.uc, self._ac, s, self.threads)
        # evaluation errors enter with weight x^(1 - Re s)
        ev = np.array([np.sum(self._ae * np.exp(-sr * n.uf)) for sr in s.real])
        return fine, np.abs(fine - coarse) + ev

    def tail_bound(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        start = self.x_max / 2.0 if self.taper else self.x_max
        return np.array([envelope_tail(z.real, abs(z), start, self.K) for z in s])

    def evaluate(self, s) -> list[MellinPoint]:
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        if np.any(s.real <= 0.5):
            raise DomainError("Re s must exceed 1/2")
        red, err = self.reduced(s)
        val = polar_part(s, self.poly) + red
        tot = err + self.tail_bound(s)
        return [MellinPoint(complex(z), complex(v), float(e), self.method) for z, v, e in zip(s, val, tot)]

    def __call__(self, s) -> MellinPoint:
        return self.evaluate([s])[0]


def z2_direct(s: complex, x_max: float = 2000.0, tol: float = 1e-2, cache=None,
              poly: MomentPolynomial | None = None, envelope: float | None = None,
              threads: int = 1) -> MellinPoint:
    """Z_2(s) for Re s >= 1 + 1e-3 by quadrature on [1, x_max] plus the analytic Q_4 tail.

    Raises PrecisionError when the envelope bound on the remaining E_2' tail
    exceeds tol/2 or the total error estimate exceeds tol.
    """
    s = complex(s)
    if s.real < 1 + 1e-3:
        raise DomainError("z2_direct needs Re s >= 1.001")
    poly = _default_poly(poly)
    K = _default_env(envelope)
    tail = envelope_tail(s.real, abs(s), x_max, K)
    if tail > tol / 2:
        raise PrecisionError(f"tail bound {tail:.3g} exceeds tol/2 at x_max = {x_max:g}; increase x_max")
    ev = DirectZ2(x_max, poly, t_max=max(abs(s.imag), 1.0), cache=cache, threads=threads, envelope=K)
    pt = ev(s)
    if pt.err > tol:
        raise PrecisionError(f"error estimate {pt.err:.3g} exceeds tol {tol:.3g}")
    return pt


# --------------------------------------------------------------------------
# tail by integration by parts


@dataclass(frozen=True)
class TailResult:
    value: complex
    terms: tuple[complex, ...]
    e2_bound: float
    quad_err: float


def z2_tail(s: complex, Y: float, part: SmoothingPartition, poly: MomentPolynomial | None = None,
            envelope: float | None = None) -> TailResult:
    """int_Y^oo omega(x) Q_4(log x) x^-s dx by five integrations by parts, plus a bound for the E_2' part.

    Each step moves one derivative onto omega Q_4; since omega' lives on
    [Y, 2Y] and Q_4^(5) = 0 the result is exactly

        sum_{j=1..5} (s-1)^-j int_Y^2Y omega'(x) Q_4^(j-1)(log x) x^(1-s) dx.

    ``terms`` holds the five summands.  The E_2' part is never evaluated; its
    bound from |E_2(x)| <= K sqrt(x) log^4 x is returned as ``e2_bound``.
    """
    s = complex(s)
    if s.real <= 0.5:
        raise DomainError("Re s must exceed 1/2")
    if s == 1:
        raise DomainError("s = 1 is a pole")
    if abs(Y - part.Y) > 1e-12 * Y:
        raise ValueError("Y must match the partition")
    poly = _default_poly(poly)
    K = _default_env(envelope)
    q = poly.q_coefficients()
    derivs = [q]
    for _ in range(4):
        derivs.append(np.polynomial.polynomial.polyder(derivs[-1]))

    def freq(u):
        return np.full_like(u, abs(s.imag) + 1.0)

    edges = quad.oscillatory_edges(math.log(Y), math.log(2 * Y), freq, min_panels=8)
    terms, qerr = [], 0.0
    for j in range(5):
        def f(u, c=derivs[j]):
            x = np.exp(u)
            return part.omega(x, 1) * np.polynomial.polynomial.polyval(u, c) * np.exp((2.0 - s) * u)
        J, e = quad.gl_integrate(f, edges, order=12)
        terms.append(J / (s - 1.0) ** (j + 1))
        qerr += e / abs(s - 1.0) ** (j + 1)

    # E_2 part: -int E_2 (omega' x^-s - s omega x^(-s-1))
    def env_w(u):
        x = np.exp(u)
        return np.abs(part.omega(x, 1)) * np.sqrt(x) * u ** 4 * x ** (-s.real) * x

    flat = np.full_like
    e_edges = quad.oscillatory_edges(math.log(Y), math.log(2 * Y), lambda u: flat(u, 1.0), min_panels=8)
    w_part, _ = quad.gl_integrate(env_w, e_edges, order=12)
    a = s.real - 0.5
    bound = K * (w_part + abs(s) * _upper_gamma5(a * math.log(Y)) / a ** 5)
    return TailResult(complex(sum(terms)), tuple(complex(t) for t in terms), float(bound), float(qerr))


# --------------------------------------------------------------------------
# decomposed evaluator


class DecomposedZ2:
    """Z_2 = Z_12 + Z_22 + Z_32 + Z_42 over a smoothing partition.

    Z_12 = int rho |zeta|^4 x^-s on [1, 2X] and int sigma |zeta|^4 x^-s on
    [X, 2Y] use Gauss-Legendre panels in log x.  psi (the Gaussian-smoothed
    moment with G = x^xi) is tabulated on a uniform grid of [X, 2Y]; Z_32 is
    the trapezoid sum of sigma psi x^-s and Z_22 is the sigma |zeta|^4
    integral minus that same sum.  sigma and all its derivatives vanish at X
    and 2Y, so the trapezoid rule converges spectrally; its error estimate
    is the difference against the rule on every other point.  Z_42 comes
    from ``z2_tail``, whose E_2 bound is added to the error.
    """

    method = "decomposed"

    def __init__(self, part: SmoothingPartition, xi: float = 0.5, poly: MomentPolynomial | None = None,
                 t_max: float = 50.0, cache=None, threads: int = 1, h: float | None = None,
                 envelope: float | None = None, spectral=None, strict: bool = True):
        if spectral is not None:
            raise SpectralDataInsufficient(
                "psi from the spectral expansion needs the explicit main term, which is not "
                "implemented; use the direct psi path")
        if not 0 < xi <= 0.5:
            raise DomainError("xi must lie in (0, 1/2]")
        if strict and part.X < (1.0 + t_max) ** (1.0 + xi):
            raise DomainError(f"X = {part.X:g} is below (1 + t_max)^(1 + xi) = {(1 + t_max) ** (1 + xi):.4g}")
        self.part = part
        self.xi = xi
        self.poly = _default_poly(poly)
        self.K = _default_env(envelope)
        self.t_max = float(t_max)
        self.threads = threads
        X, Y = part.X, part.Y

        def weighted(lo, hi, weight):
            nodes = _LogNodes(lo, hi, self.t_max)
            out = []
            for u, w in ((nodes.uc, nodes.wc), (nodes.uf, nodes.wf)):
                x = np.exp(u)
                v, e = quad.eval_chunked(lambda c: zeta4_array(c, cache), x, threads)
                wt = weight(x) * x * w
                out.append((u, v * wt, e * np.abs(wt)))
            return out

        self._z12 = weighted(1.0, 2.0 * X, part.rho)
        self._zs = weighted(X, 2.0 * Y, part.sigma)
        if h is None:
            # psi is smooth on the scale G = x^xi, so G/8 resolves it; x^-it needs 2 pi x / t
            h = min(X ** xi / 8.0, quad.TWO_PI * X / max(self.t_max, 1.0) / 16.0)
        n = 2 * math.ceil((2.0 * Y - X) / (2.0 * h))
        self.grid = np.linspace(X, 2.0 * Y, n + 1)
        self.h = (2.0 * Y - X) / n
        psi, perr = psi_grid(self.grid, xi, cache=cache, threads=threads)
        sg = part.sigma(self.grid)
        self._psi_w = sg * psi * self.h
        self._psi_e = np.abs(sg) * perr * self.h

    def _gl(self, parts, s):
        (uc, ac, _), (uf, af, ef) = parts
        c = _mellin_sums(uc, ac, s, self.threads)
        f = _mellin_sums(uf, af, s, self.threads)
        ev = np.array([np.sum(ef * np.exp(-sr * uf)) for sr in s.real])
        return f, np.abs(f - c) + ev

    def _trap(self, s):
        u = np.log(self.grid)
        full = _mellin_sums(u, self._psi_w, s, self.threads)
        half = 2.0 * _mellin_sums(u[::2], self._psi_w[::2], s, self.threads)
        ev = np.array([np.sum(self._psi_e * np.exp(-sr * u)) for sr in s.real])
        return full, np.abs(full - half) + ev

    def components(self, s):
        """Dict of component arrays (values and errors) for an array of s."""
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        if np.any(np.abs(s.imag) > self.t_max * (1 + 1e-12)):
            raise DomainError(f"|Im s| exceeds t_max = {self.t_max:g}")
        if np.any(s.real <= 0.5) or np.any(s.real > 4):
            raise DomainError("Re s must lie in (1/2, 4]")
        z12, e12 = self._gl(self._z12, s)
        zs, es = self._gl(self._zs, s)
        z32, e32 = self._trap(s)
        tails = [z2_tail(z, self.part.Y, self.part, self.poly, self.K) for z in s]
        return {
            "z12": (z12, e12),
            "z22": (zs - z32, es + e32),
            "z32": (z32, e32),
            "z42": (np.array([t.value for t in tails]), np.array([t.quad_err for t in tails])),
            "z62_bound": np.array([t.e2_bound for t in tails]),
        }

    def evaluate(self, s) -> list[MellinPoint]:
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        c = self.components(s)
        val = c["z12"][0] + c["z22"][0] + c["z32"][0] + c["z42"][0]
        err = c["z12"][1] + c["z22"][1] + c["z32"][1] + c["z42"][1] + c["z62_bound"]
        return [MellinPoint(complex(z), complex(v), float(e), self.method) for z, v, e in zip(s, val, err)]

    def reduced(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=complex))
        pts = self.evaluate(s)
        return (np.array([p.value for p in pts]) - polar_part(s, self.poly),
                np.array([p.err for p in pts]))

    def __call__(self, s) -> MellinPoint:
        return self.evaluate([s])[0]


def z2_decomposed(s: complex, part: SmoothingPartition, spectral_data=None, xi: float = 0.5,
                  tol: float = 1e-6, cache=None, poly: MomentPolynomial | None = None,
                  envelope: float | None = None, threads: int = 1) -> MellinPoint:
    """Z_2(s) for 1/2 + 1e-3 <= Re s <= 4 through the smooth partition.

    ``tol`` applies to the quadrature part of the error; the E_2 envelope
    bound for the tail is reported in ``err`` but not held to ``tol``.
    """
    s = complex(s)
    if not 0.5 + 1e-3 <= s.real <= 4:
        raise DomainError("Re s must lie in [0.501, 4]")
    ev = DecomposedZ2(part, xi, poly, t_max=max(abs(s.imag), 1.0), cache=cache, threads=threads,
                      envelope=envelope, spectral=spectral_data)
    c = ev.components(np.array([s]))
    quad_err = float(sum(c[k][1][0] for k in ("z12", "z22", "z32", "z42")))
    if quad_err > tol:
        raise PrecisionError(f"quadrature error {quad_err:.3g} exceeds tol {tol:.3g}")
    return ev.evaluate(np.array([s]))[0]


# --------------------------------------------------------------------------
# inversion


@dataclass(frozen=True)
class InversionResult:
    x: float
    value: float
    err: float
    trunc_err: float
    q4: float


def _line_kernel_integral(ev: DirectZ2, x0: float, c: float, U: float):
    """(1/2 pi) int_{-U}^{U} G(c+it) x0^(c-1+it) dt with the t-integral done in closed form.

    Exchanging the order of integration turns it into
    int g(x) x^-c x0^(c-1) sin(U log(x0/x)) / (pi log(x0/x)) dx, computed in u = log x.
    """
    u0 = math.log(x0)

    def freq(u):
        x = np.exp(u)
        return x * np.maximum(np.log(x / quad.TWO_PI), 1.0) + U + 1.0

    edges = quad.oscillatory_edges(0.0, math.log(ev.x_max), freq)

    def f(u):
        d = u0 - u
        return (ev.g(np.exp(u)) * np.exp((1.0 - c) * u) * x0 ** (c - 1.0)
                * (U / math.pi) * np.sinc(U * d / math.pi))

    return quad.gl_integrate(f, edges, order=8, threads=ev.threads)


def mellin_invert(x: float, sigma_line: float = 1.1, t_max: float = 5000.0,
                  poly: MomentPolynomial | None = None, evaluator=None, cache=None,
                  x_max: float | None = None, order: int = 4, threads: int = 1) -> InversionResult:
    """Reconstruct |zeta(1/2+ix)|^4 as Q_4(log x) + (1/2 pi i) int (Z_2 - R)(s) x^(s-1) ds.

    The line Re s = sigma_line is truncated at |Im s| = t_max.  With the
    default evaluator (a tapered DirectZ2 on [1, x_max]) the t-integral is
    done in closed form; any other evaluator exposing ``reduced(s)`` is
    integrated by Gauss-Legendre panels in t.  ``trunc_err`` is the change
    from halving t_max.
    """
    if x < 10:
        raise DomainError("x must be >= 10")
    if sigma_line < 1 + 1e-3:
        raise DomainError("sigma_line must be >= 1.001")
    poly = _default_poly(poly)
    q4 = float(poly.q4(math.log(x)))
    if evaluator is None:
        x_max = x_max or max(4.0 * x, 200.0)
        evaluator = DirectZ2(x_max, poly, t_max=t_max, cache=cache, threads=threads, taper=True)
    if isinstance(evaluator, DirectZ2):
        if x >= (evaluator.x_max / 2 if evaluator.taper else evaluator.x_max):
            raise DomainError("x must lie below the evaluator's cut-off")
        full, e_full = _line_kernel_integral(evaluator, x, sigma_line, t_max)
        half, _ = _line_kernel_integral(evaluator, x, sigma_line, t_max / 2)
    else:
        full, e_full = _line_quadrature(evaluator, x, sigma_line, t_max, order)
        half, _ = _line_quadrature(evaluator, x, sigma_line, t_max / 2, order)
    trunc = abs(full - half)
    return InversionResult(float(x), q4 + full, e_full + trunc, trunc, q4)


def _t_edges(t_max: float, bandwidth: float):
    width = 0.25 * quad.TWO_PI / max(bandwidth, 1.0)
    return quad.uniform_edges(0.0, t_max, width)


def _line_quadrature(evaluator, x0: float, c: float, t_max: float, order: int):
    """(1/pi) Re int_0^t_max (Z_2 - R)(c+it) x0^(c-1+it) dt by panels in t."""
    bw = math.log(getattr(evaluator, "x_max", None) or 2.0 * evaluator.part.Y * 4) + math.log(x0)
    edges = _t_edges(t_max, bw)
    out = []
    for e in (edges, quad.halve(edges)):
        t, w = quad.panel_nodes(e, order)
        s = c + 1j * t
        red, err = evaluator.reduced(s)
        vals = red * np.exp((s - 1.0) * math.log(x0))
        out.append((quad.fsum((vals * w).real) / math.pi, quad.fsum(err * x0 ** (c - 1) * w) / math.pi))
    (coarse, _), (fine, ev) = out
    return fine, abs(fine - coarse) + ev


# --------------------------------------------------------------------------
# contour estimate of E_2


def plateau(x, lo: float, hi: float):
    """Smooth bump on [lo, hi], equal to 1 on the middle half."""
    x = np.asarray(x, dtype=float)
    q = (hi - lo) / 4.0
    return ramp((x - lo) / q) * (1.0 - ramp((x - hi + q) / q))


@dataclass(frozen=True)
class ContourInterval:
    T: float
    H: float
    lower: float
    upper: float
    smoothed_upper: float
    smoothed_lower: float
    trunc_err: float
    quad_err: float
    t_cut: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def _smoothed_e2(evaluator, lo: float, hi: float, c: float, U: float, const: float, order: int = 4):
    """int f(x) E_2(x) dx for the plateau f on [lo, hi], via the line Re s = c.

    E_2(x) = const + int_1^x g, and int_1^x g is the inverse transform of
    G(s) x^s / s, so int f E_2 = const int f + (1/pi) Re int_0^U G F / s dt
    with F(s) = int f(x) x^s dx.
    """
    fx_edges = quad.uniform_edges(lo, hi, (hi - lo) / 64.0)
    xf, wf = quad.panel_nodes(fx_edges, 16)
    fw = plateau(xf, lo, hi) * wf
    mass = quad.fsum(fw)
    lx = np.log(xf)
    bw = math.log(hi) + math.log(getattr(evaluator, "x_max", hi))
    edges = _t_edges(U, bw)
    out = []
    for e in (edges, quad.halve(edges)):
        t, w = quad.panel_nodes(e, order)
        s = c + 1j * t
        red, err = evaluator.reduced(s)
        F = np.exp(np.outer(s, lx)) @ fw
        Fabs = np.exp(c * lx) @ np.abs(fw)
        vals = red * F / s
        out.append((quad.fsum((vals * w).real) / math.pi, quad.fsum(err * Fabs / np.abs(s) * w) / math.pi))
    (coarse, _), (fine, ev) = out
    return const * mass + fine, abs(fine - coarse) + ev, mass, xf, fw


def e2_via_contour(T: float, H: float, c_line: float = 0.51, evaluator=None,
                   poly: MomentPolynomial | None = None, cache=None, threads: int = 1,
                   t_cut: float | None = None) -> ContourInterval:
    """Upper and lower estimates for E_2(T) from smoothed averages over [T, T+H] and [T-H, T].

    For x in [T, T+H], E_2(T) <= E_2(x) + Q_max (x - T) because E_2' >= -Q_4;
    averaging against a plateau f gives the upper estimate, and the mirror
    argument on [T-H, T] gives the lower one.  The smoothed averages come from
    a line integral at Re s = c_line truncated at |Im s| = 2 T log T / H;
    the truncation error (change from halving the cut) and the quadrature
    error widen the interval.

    The default evaluator is DirectZ2 on [1, T+H], whose reduced transform is
    entire, so any c_line > 0 is admissible.
    """
    if not (H > 1 and H <= T / 4):
        raise DomainError("need 1 < H <= T/4")
    if c_line <= 0:
        raise DomainError("c_line must be positive")
    poly = _default_poly(poly)
    U = t_cut or 2.0 * T * math.log(T) / H
    if evaluator is None:
        evaluator = DirectZ2(T + H, poly, t_max=U, cache=cache, threads=threads)
    if getattr(evaluator, "x_max", math.inf) < T + H:
        raise DomainError("evaluator must cover [1, T+H]")
    if c_line <= 0.5 and not isinstance(evaluator, DirectZ2):
        raise DomainError("c_line <= 1/2 needs a finite-range evaluator")
    head, _ = moment_integral(1.0, 4.0, cache=cache)
    const = head - poly.a[0]
    q_max = poly.q4_max(T - H, T + H)

    up_full, up_err, up_mass, xu, fu = _smoothed_e2(evaluator, T, T + H, c_line, U, const)
    up_half, _, _, _, _ = _smoothed_e2(evaluator, T, T + H, c_line, U / 2, const)
    lo_full, lo_err, lo_mass, xl, fl = _smoothed_e2(evaluator, T - H, T, c_line, U, const)
    lo_half, _, _, _, _ = _smoothed_e2(evaluator, T - H, T, c_line, U / 2, const)
    trunc = max(abs(up_full - up_half) / up_mass, abs(lo_full - lo_half) / lo_mass)
    qerr = max(up_err / up_mass, lo_err / lo_mass)

    upper = (up_full + q_max * quad.fsum((xu - T) * fu)) / up_mass
    lower = (lo_full - q_max * quad.fsum((T - xl) * fl)) / lo_mass
    res = ContourInterval(T, H, lower - trunc - qerr, upper + trunc + qerr,
                          up_full / up_mass, lo_full / lo_mass, trunc, qerr, U)
    if res.width > 10.0 * H * math.log(T) ** 4:
        warnings.warn(f"contour interval width {res.width:.3g} exceeds 10 H log^4 T", IntervalWarning)
    return res


# --------------------------------------------------------------------------
# mean square on a vertical line


@dataclass(frozen=True)
class MeanSquare:
    sigma: float
    T: float
    value: float
    err: float
    grid_max: float


def default_evaluator(sigma: float, T: float, xi: float = 0.5, cache=None, threads: int = 1,
                      poly: MomentPolynomial | None = None, x_max: float | None = None):
    """DirectZ2 for sigma > 1, otherwise DecomposedZ2 with X = (1+T)^(1+xi), Y = 2X."""
    if sigma > 1:
        return DirectZ2(x_max or 4000.0, poly, t_max=T, cache=cache, threads=threads)
    X = (1.0 + T) ** (1.0 + xi)
    return DecomposedZ2(SmoothingPartition(X, 2.0 * X), xi, poly, t_max=T, cache=cache, threads=threads)


def z2_mean_square(sigma: float, T: float, step: float = 0.25, evaluator=None, cache=None,
                   threads: int = 1) -> MeanSquare:
    """Trapezoid estimate of int_1^T |Z_2(sigma+it)|^2 dt with a step-halving error estimate."""
    if sigma <= 0.5:
        raise DomainError("sigma must exceed 1/2")
    if not 0 < step <= 0.25:
        raise DomainError("step must lie in (0, 0.25]")
    if T <= 1:
        raise DomainError("T must exceed 1")
    if evaluator is None:
        evaluator = default_evaluator(sigma, T, cache=cache, threads=threads)
    n = 2 * math.ceil((T - 1.0) / (2.0 * step))
    t = np.linspace(1.0, T, n + 1)
    pts = evaluator.evaluate(sigma + 1j * t)
    v = np.array([abs(p.value) ** 2 for p in pts])
    e = np.array([2.0 * abs(p.value) * p.err + p.err ** 2 for p in pts])
    h = (T - 1.0) / n
    full = h * (quad.fsum(v) - 0.5 * (v[0] + v[-1]))
    half = 2 * h * (quad.fsum(v[::2]) - 0.5 * (v[0] + v[-1]))
    ev = h * quad.fsum(e)
    return MeanSquare(sigma, T, full, abs(full - half) + ev, float(v.max()))


def z2_mean_square_scan(sigma: float, heights, step: float = 0.25, evaluator=None, cache=None,
                        threads: int = 1, xi: float = 0.5) -> list[MeanSquare]:
    """z2_mean_square at several heights from one grid reaching max(heights).

    Every height is snapped to the grid; the error is the change against the
    rule on every other grid point.
    """
    hs = np.sort(np.asarray(heights, dtype=float))
    if hs.size < 1 or hs[0] <= 1:
        raise DomainError("heights must exceed 1")
    if sigma <= 0.5:
        raise DomainError("sigma must exceed 1/2")
    if not 0 < step <= 0.25:
        raise DomainError("step must lie in (0, 0.25]")
    top = float(hs[-1])
    if evaluator is None:
        evaluator = default_evaluator(sigma, top, xi, cache, threads)
    n = 2 * math.ceil((top - 1.0) / (2.0 * step))
    t = np.linspace(1.0, top, n + 1)
    h = (top - 1.0) / n
    pts = evaluator.evaluate(sigma + 1j * t)
    v = np.array([abs(p.value) ** 2 for p in pts])
    e = np.array([2.0 * abs(p.value) * p.err + p.err ** 2 for p in pts])
    out = []
    for T in hs:
        k = 2 * int(round((T - 1.0) / (2.0 * h)))
        k = max(k, 2)
        seg, seg2, es = v[:k + 1], v[:k + 1:2], e[:k + 1]
        full = h * (quad.fsum(seg) - 0.5 * (seg[0] + seg[-1]))
        half = 2 * h * (quad.fsum(seg2) - 0.5 * (seg2[0] + seg2[-1]))
        out.append(MeanSquare(sigma, float(t[k]), full, abs(full - half) + h * quad.fsum(es),
                              float(seg.max())))
    return out


def loglog_slope(pairs) -> float:
    """Least-squares slope of log v against log T for two or more positive pairs."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2 or np.any(arr <= 0):
        raise DomainError("need at least two positive (T, v) pairs")
    return float(np.polyfit(np.log(arr[:, 0]), np.log(arr[:, 1]), 1)[0])
