"""Gaussian-smoothed fourth moment psi(T) and the spectral kernels.

psi(T) = (1 / (sqrt(pi) G)) int |zeta(1/2 + i(T+t))|^4 exp(-(t/G)^2) dt,  G = T^xi.

The spectral side is assembled from the kernels Xi(+-ir; T, G), their real
combination Lambda(r; T, G), the discrete sum over a user-supplied table of
(kappa_j, alpha_j H_j^3(1/2)) and the continuous integral against
|zeta(1/2+ir)|^6 / |zeta(1+2ir)|^2.  Spectral tables are external inputs and
only their structural invariants are checked here.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import quad, specfun
from .errors import DataError, DomainError, PrecisionError
from .zetacore import critical_abs, zeta4_array, zeta_em_array

GAUSS_SD = 6.0
GAUSS_TAIL = math.erfc(GAUSS_SD)       # relative Gaussian mass beyond 6 standard deviations
KERNEL_CUT = math.log(1e18)            # exp(-G^2 log^2(1+y) / 4) < 1e-18 beyond the cutoff
R_MIN = 1e-3

# |Xi(+-ir; x, x^xi)| <= XI_BOUND for r <= x log^2 x, from a scan over
# x in {50, 100, 200, 500}, xi in {0.25, 0.4, 0.5} and 28 values of r
# (observed max 0.93 at x = 50, falling roughly like x^-1/2)
XI_BOUND = 1.0
# |residual| <= RESIDUAL_K log^4 T + tail_bound for the smoothed-moment closure check
RESIDUAL_K = 1.0


# --------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class SpectralDatum:
    kappa: float
    weight: float

    def __post_init__(self):
        if not (math.isfinite(self.kappa) and math.isfinite(self.weight)):
            raise DataError("spectral data must be finite")
        if not self.kappa > 0:
            raise DataError(f"kappa must be positive, got {self.kappa}")
        if not self.weight >= 0:
            raise DataError(f"weights must be non-negative, got {self.weight} at kappa={self.kappa}")


def validate_spectral(data: Sequence[SpectralDatum]) -> tuple[SpectralDatum, ...]:
    data = tuple(data)
    for a, b in zip(data, data[1:]):
        if not b.kappa > a.kappa:
            raise DataError(f"kappa must be strictly increasing ({a.kappa} then {b.kappa})")
    return data


def spectral_from_arrays(kappa, weight) -> tuple[SpectralDatum, ...]:
    return validate_spectral(SpectralDatum(float(k), float(w)) for k, w in zip(kappa, weight))


def load_spectral(path) -> tuple[SpectralDatum, ...]:
    """Read a ``kappa,weight`` CSV; lines starting with '#' are comments."""
    rows = []
    with open(path, newline="") as fh:
        lines = (ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#"))
        reader = csv.reader(lines)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["kappa", "weight"]:
            raise DataError(f"{path}: expected header kappa,weight")
        for row in reader:
            if len(row) != 2:
                raise DataError(f"{path}: malformed row {row}")
            try:
                k, w = float(row[0]), float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}: non-numeric row {row}") from exc
            rows.append(SpectralDatum(k, w))
    return validate_spectral(rows)


@dataclass(frozen=True)
class SmoothedMomentParams:
    T: float
    xi: float = 0.5

    def __post_init__(self):
        if not self.T >= 10:
            raise DomainError("T must be >= 10")
        if not 0 < self.xi <= 0.5:
            raise DomainError("xi must lie in (0, 1/2]")

    @property
    def G(self) -> float:
        return self.T ** self.xi

    @property
    def decay_r(self) -> float:
        """2 T^(1-xi) log^5 T, beyond which Xi(-ir) is negligible."""
        return 2.0 * self.T ** (1.0 - self.xi) * math.log(self.T) ** 5


# --------------------------------------------------------------------------
# psi


def _zeta4_integrand(cache):
    def f(x):
        return zeta4_array(x, cache)
    return f


def _as_pair(out, x):
    if isinstance(out, tuple):
        return np.asarray(out[0], dtype=float), np.asarray(out[1], dtype=float)
    return np.asarray(out, dtype=float) * np.ones_like(x), np.zeros_like(x)


def _cap_width(edges: np.ndarray, width: float) -> np.ndarray:
    """Split panels wider than ``width`` into equal parts."""
    pieces = [edges[:1]]
    for a, b in zip(edges[:-1], edges[1:]):
        n = max(1, math.ceil((b - a) / width))
        pieces.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(pieces)


def _smoothing_edges(lo: float, hi: float, g_min: float, refine: int = 1) -> np.ndarray:
    return _cap_width(quad.critical_edges(lo, hi, refine=refine), g_min / (4.0 * refine))


def psi_eval(p: SmoothedMomentParams, cache=None, integrand: Callable | None = None,
             threads: int = 1, refine: int = 1):
    """psi(T) with an error estimate (quadrature + evaluation + Gaussian truncation).

    ``integrand`` replaces |zeta|^4; it receives an array of heights and
    returns values or (values, errors).
    """
    T, G = p.T, p.G
    lo, hi = T - GAUSS_SD * G, T + GAUSS_SD * G
    if lo < 1:
        raise DomainError("T - 6 T^xi must be >= 1")
    fn = integrand or _zeta4_integrand(cache)
    edges = _smoothing_edges(lo, hi, G, refine)
    xc, wc = quad.panel_nodes(edges, 8)
    xf, wf = quad.panel_nodes(quad.halve(edges), 8)
    norm = 1.0 / (math.sqrt(math.pi) * G)
    vc, _ = _as_pair(quad.eval_chunked(fn, xc, threads), xc)
    vf, ef = _as_pair(quad.eval_chunked(fn, xf, threads), xf)
    gc = np.exp(-((xc - T) / G) ** 2) * norm
    gf = np.exp(-((xf - T) / G) ** 2) * norm
    coarse = quad.fsum(vc * gc * wc)
    fine = quad.fsum(vf * gf * wf)
    trunc = GAUSS_TAIL * float(np.max(np.abs(vf)))
    err = abs(fine - coarse) + quad.fsum(ef * gf * wf) + trunc
    return fine, err


def psi_direct(p: SmoothedMomentParams, tol: float = 1e-8, cache=None,
               integrand: Callable | None = None, threads: int = 1, with_error: bool = False):
    """psi(T) by Gaussian-weighted quadrature; ``tol`` is relative to max(1, psi)."""
    val, err = psi_eval(p, cache, integrand, threads)
    if err > tol * max(1.0, abs(val)):
        val, err = psi_eval(p, cache, integrand, threads, refine=2)
        if err > tol * max(1.0, abs(val)):
            raise PrecisionError(f"psi error {err:.3g} exceeds tolerance")
    return (val, err) if with_error else val


def psi_grid(xs, xi: float, cache=None, integrand: Callable | None = None, threads: int = 1,
             block: int = 256):
    """psi(x) with G = x^xi at every point of a sorted grid; returns (values, errors).

    One node set covers all windows, so the |zeta|^4 samples are shared;
    each block of grid points is a dense Gaussian-weight product against
    the nodes inside its windows.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        return np.zeros(0), np.zeros(0)
    if np.any(np.diff(xs) <= 0):
        raise ValueError("grid must be strictly increasing")
    if not 0 < xi <= 0.5:
        raise DomainError("xi must lie in (0, 1/2]")
    G = xs ** xi
    lo = float(np.min(xs - GAUSS_SD * G))
    hi = float(np.max(xs + GAUSS_SD * G))
    if lo < 1:
        raise DomainError("grid windows must stay above height 1")
    fn = integrand or _zeta4_integrand(cache)
    edges = _smoothing_edges(lo, hi, float(G.min()))
    xc, wc = quad.panel_nodes(edges, 8)
    xf, wf = quad.panel_nodes(quad.halve(edges), 8)
    vc, _ = _as_pair(quad.eval_chunked(fn, xc, threads), xc)
    vf, ef = _as_pair(quad.eval_chunked(fn, xf, threads), xf)
    ac, af, ae = vc * wc, vf * wf, ef * wf

    def run(start):
        x = xs[start:start + block]
        g = G[start:start + block]
        out = []
        for nodes, a in ((xc, ac), (xf, af), (xf, ae)):
            i0 = np.searchsorted(nodes, float(np.min(x - GAUSS_SD * g)))
            i1 = np.searchsorted(nodes, float(np.max(x + GAUSS_SD * g)), side="right")
            u = (nodes[None, i0:i1] - x[:, None]) / g[:, None]
            k = np.where(np.abs(u) <= GAUSS_SD, np.exp(-u * u), 0.0)
            out.append(k @ a[i0:i1] / (math.sqrt(math.pi) * g))
        return out

    parts = quad.pmap(run, range(0, xs.size, block), threads)
    coarse = np.concatenate([q[0] for q in parts])
    fine = np.concatenate([q[1] for q in parts])
    ev = np.concatenate([q[2] for q in parts])
    trunc = GAUSS_TAIL * float(np.max(np.abs(vf)))
    return fine, np.abs(fine - coarse) + ev + trunc


# --------------------------------------------------------------------------
# kernels


def _xi_parts(sign: int, r: float, p: SmoothedMomentParams, tol: float):
    """Integrand of the y-integral after y = e^w, and its integration range."""
    T, G = p.T, p.G
    a = 0.5 + sign * 1j * r
    v_max = 2.0 * math.sqrt(KERNEL_CUT) / G
    w_hi = math.log(math.expm1(v_max))
    # Below w0 the integrand is e^(a w) phi(e^w) with phi(0) = 1 and |dphi/dy| <= M;
    # one integration by parts leaves a remainder <= M e^(3 w0 / 2) / (1.5 |a|).
    M = abs(-0.5 + 1j * T) + abs(a) + 1.0
    w0 = min(w_hi - 1.0, (2.0 / 3.0) * math.log(1.5 * abs(a) * 1e-2 * tol / M))

    def phi(y):
        lv = np.log1p(y)
        return (np.exp((-0.5 + 1j * T) * lv - 0.25 * G * G * lv * lv)
                * specfun.hyp2f1_quadratic(a, -y, 1e-16))

    def integrand(w):
        y = np.exp(w)
        return np.exp(a * w) * phi(y)

    def freq(w):
        y = np.exp(w)
        s1 = np.sqrt(1.0 + y)
        return (r + T * y / (1.0 + y) + r * y / (s1 * (1.0 + s1))
                + 0.5 * G * G * np.log1p(y) * y / (1.0 + y) + 1.0)

    boundary = complex(np.exp(a * w0) * phi(np.array([math.exp(w0)]))[0] / a)
    remainder = M * math.exp(1.5 * w0) / (1.5 * abs(a))
    return integrand, freq, w0, w_hi, boundary, remainder


def xi_kernel_eval(sign: int, r: float, p: SmoothedMomentParams, tol: float = 1e-10,
                   threads: int = 1):
    """Xi(sign * ir; T, T^xi) and an absolute error estimate."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if r < 0:
        raise DomainError("r must be non-negative")
    integrand, freq, w0, w1, boundary, remainder = _xi_parts(sign, r, p, tol)
    edges = quad.oscillatory_edges(w0, w1, freq)
    val, qerr = quad.gl_integrate(integrand, edges, order=8, threads=threads)
    a = 0.5 + sign * 1j * r
    pref = complex(np.exp(2.0 * specfun.loggamma(a) - specfun.loggamma(2.0 * a)))
    return pref * (val + boundary), abs(pref) * (qerr + remainder)


def xi_kernel(sign: int, r: float, p: SmoothedMomentParams, tol: float = 1e-10,
              threads: int = 1) -> complex:
    val, err = xi_kernel_eval(sign, r, p, tol, threads)
    if err > max(tol, 1e-13):
        raise PrecisionError(f"kernel error {err:.3g} above tolerance {tol:.3g}")
    return val


def _csch_pi(r: float) -> float:
    x = math.pi * abs(r)
    e = math.exp(-x)
    v = 2.0 * e / (1.0 - e * e) if x > 0.5 else 1.0 / math.sinh(x)
    return math.copysign(v, r)


def lambda_assemble(r: float, xi_plus: complex, xi_minus: complex) -> complex:
    """(1/2) [(1 + i/sinh(pi r)) Xi(ir) + (1 - i/sinh(pi r)) Xi(-ir)] before taking Re."""
    c = 1j * _csch_pi(r)
    return 0.5 * ((1.0 + c) * xi_plus + (1.0 - c) * xi_minus)


def lambda_eval(r: float, p: SmoothedMomentParams, tol: float = 1e-10, threads: int = 1):
    """Lambda(r; T, T^xi) and its error estimate; even in r."""
    if abs(r) <= R_MIN:
        raise DomainError(f"|r| must exceed {R_MIN}")
    ar = abs(r)
    xp, ep = xi_kernel_eval(1, ar, p, tol, threads)
    xm, em = xi_kernel_eval(-1, ar, p, tol, threads)
    # evenness: r -> -r swaps the two kernels and flips the sign of csch
    lam = lambda_assemble(ar, xp, xm)
    scale = math.sqrt(1.0 + _csch_pi(ar) ** 2)
    return float(lam.real), 0.5 * scale * (ep + em)


def lambda_kernel(r: float, p: SmoothedMomentParams, tol: float = 1e-10, threads: int = 1) -> float:
    return lambda_eval(r, p, tol, threads)[0]


# --------------------------------------------------------------------------
# spectral sums


def synthetic_spectrum(k_max: float, seed: int = 0, k_min: float = 9.5):
    """A fabricated (kappa, weight) table for exercising the pipeline.

    kappa_j follow the Weyl law N(K) ~ K^2 / 12 with jitter and the weights
    are exponential variates scaled by log kappa, so window sums grow like
    G K^(1 + eps).  The values are NOT eigenvalues or L-values of any form.
    """
    rng = np.random.default_rng(seed)
    j0 = math.ceil(k_min ** 2 / 12.0)
    j1 = math.floor(k_max ** 2 / 12.0)
    j = np.arange(j0, j1 + 1, dtype=float)
    kappa = np.sqrt(12.0 * (j + rng.uniform(-0.3, 0.3, j.size)))
    kappa = np.round(np.maximum.accumulate(kappa), 12)
    keep = np.concatenate([[True], np.diff(kappa) > 0])
    kappa = kappa[keep]
    weight = np.round(rng.exponential(1.0, kappa.size) * np.log(kappa), 12)
    return spectral_from_arrays(kappa, weight)


def short_interval_sum(K: float, G: float, data: Sequence[SpectralDatum]) -> float:
    """Sum of weights with K - G <= kappa_j <= K + G."""
    if G < 1:
        raise DomainError("G must be >= 1")
    if G > K:
        raise DomainError("G must not exceed K")
    kap = np.array([d.kappa for d in data])
    w = np.array([d.weight for d in data])
    i0, i1 = np.searchsorted(kap, K - G, side="left"), np.searchsorted(kap, K + G, side="right")
    return quad.fsum(w[i0:i1])


def short_interval_ratios(data: Sequence[SpectralDatum], G: float | None = None,
                          exponent: float = 1.05, n: int = 20):
    """(K, window sum / (G K^exponent)) on a grid of K inside the data range.

    With ``G=None`` the window half-width is K/4.
    """
    if not data:
        return []
    k_lo, k_hi = data[0].kappa, data[-1].kappa
    out = []
    for K in np.linspace(k_lo, k_hi, n + 2)[1:-1]:
        g = max(1.0, K / 4.0) if G is None else G
        if g > K or K + g > k_hi:
            continue
        out.append((float(K), short_interval_sum(K, g, data) / (g * K ** exponent)))
    return out


def density_constant(data: Sequence[SpectralDatum], exponent: float = 1.05) -> float:
    """Largest observed window ratio, used to extrapolate beyond the table."""
    ratios = [v for _, v in short_interval_ratios(data, exponent=exponent)]
    return max(ratios) if ratios else math.inf


def i2d(p: SmoothedMomentParams, data: Sequence[SpectralDatum], tol: float = 1e-10,
        threads: int = 1, tail_margin: float = 2.0, max_windows: int = 40):
    """Truncated discrete spectral sum and a bound for the omitted tail.

    The tail beyond the last kappa is bounded window by window: on
    [K, 2K] the weight sum is at most C K (2K)^1.05 with C the largest
    observed window ratio (times ``tail_margin``), and |Lambda| is bounded
    by ``tail_margin`` times its largest value at three sample points.
    Windows are added until they pass the decay point 2 T^(1-xi) log^5 T or
    three consecutive contributions fall below tol / 1000.
    """
    data = validate_spectral(data)
    if not data:
        warnings.warn("empty spectral data: the tail bound is infinite", RuntimeWarning)
        return 0.0, math.inf
    terms = quad.pmap(lambda d: d.weight * lambda_eval(d.kappa, p, tol)[0], data, threads)
    value = quad.fsum(terms)
    C = tail_margin * density_constant(data)
    if not math.isfinite(C):
        return value, math.inf
    tail = 0.0
    K = data[-1].kappa
    quiet = 0
    for _ in range(max_windows):
        rs = (K, 1.5 * K, 2.0 * K)
        lam = max(abs(v) + e for v, e in (lambda_eval(r, p, tol) for r in rs))
        piece = C * K * (2.0 * K) ** 1.05 * tail_margin * lam
        tail += piece
        quiet = quiet + 1 if piece < 1e-3 * tol else 0
        K *= 2.0
        if K > p.decay_r or quiet >= 3:
            break
    else:
        return value, math.inf
    return float(value), float(tail)


def _i2c_density(r):
    r = np.asarray(r, dtype=float)
    za, _ = critical_abs(r)
    z1, _ = zeta_em_array(1.0 + 2j * r)
    return za ** 6 / np.abs(z1) ** 2


class LambdaTable:
    """Piecewise Chebyshev interpolant of Lambda(r) on [R_MIN, r_max].

    Lambda is smooth on the unit scale (its zero crossings are about one apart
    away from r = 0) while the continuous-spectrum density is sharply
    peaked, so the kernel is tabulated once and the product is integrated on finer panels.
    The error of each piece is its two trailing Chebyshev coefficients plus
    the largest kernel error at its nodes.
    """

    def __init__(self, p: SmoothedMomentParams, r_max: float, degree: int = 20,
                 tol: float = 1e-12, threads: int = 1):
        self.p = p
        head = [R_MIN, 0.125, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0]
        body = np.arange(4.0, 2.0 * math.ceil(r_max / 2.0) + 1.0, 2.0)
        self.edges = np.concatenate([head, body]) if r_max > 1 else np.array([R_MIN, r_max])
        self.edges = self.edges[self.edges <= r_max + 1e-12]
        if self.edges[-1] < r_max:
            self.edges = np.append(self.edges, r_max)
        k = np.arange(degree + 1)
        cheb = np.cos(np.pi * (k + 0.5) / (degree + 1))
        lo, hi = self.edges[:-1], self.edges[1:]
        nodes = (0.5 * (lo + hi))[:, None] + (0.5 * (hi - lo))[:, None] * cheb[None, :]
        vals = quad.pmap(lambda r: lambda_eval(float(r), p, tol), nodes.ravel(), threads)
        v = np.array([a for a, _ in vals]).reshape(nodes.shape)
        self.kernel_err = np.array([e for _, e in vals]).reshape(nodes.shape).max(axis=1)
        self.coef = np.array([np.polynomial.chebyshev.chebfit(cheb, row, degree) for row in v])
        self.piece_err = np.abs(self.coef[:, -1]) + np.abs(self.coef[:, -2]) + self.kernel_err

    @property
    def r_max(self) -> float:
        return float(self.edges[-1])

    def __call__(self, r, with_error: bool = False):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any((r < self.edges[0]) | (r > self.edges[-1])):
            raise DomainError("r outside the tabulated range")
        i = np.clip(np.searchsorted(self.edges, r, side="right") - 1, 0, self.edges.size - 2)
        lo, hi = self.edges[i], self.edges[i + 1]
        u = (2.0 * r - lo - hi) / (hi - lo)
        out = np.empty_like(r)
        for j in np.unique(i):
            m = i == j
            out[m] = np.polynomial.chebyshev.chebval(u[m], self.coef[j])
        if with_error:
            return out, self.piece_err[i]
        return out


def i2c_eval(p: SmoothedMomentParams, tol: float = 1e-8, r_cut: float | None = None,
             table: LambdaTable | None = None, threads: int = 1):
    """(1/pi) int |zeta(1/2+ir)|^6 / |zeta(1+2ir)|^2 Lambda(r) dr and its error.

    Evenness reduces the integral to 2/pi times the half line; [0, R_MIN]
    is dropped (the integrand vanishes like r^2 there).  The cut defaults to
    the point where |Lambda| has stayed below tol / 100 for four unit steps.
    """
    if r_cut is None:
        r_cut = table.r_max if table is not None else lambda_cutoff(p, tol / 100.0)
    if table is None or table.r_max < r_cut:
        table = LambdaTable(p, r_cut, threads=threads)
    edges = _cap_width(quad.critical_edges(R_MIN, r_cut), 0.25)

    def f(r):
        return _i2c_density(r) * table(r)

    val, qerr = quad.gl_integrate(f, edges, order=8, threads=threads)
    x, w = quad.panel_nodes(edges, 8)
    _, terr = table(x, with_error=True)
    ierr = quad.fsum(_i2c_density(x) * terr * w)
    return 2.0 / math.pi * val, 2.0 / math.pi * (qerr + ierr)


def i2c(p: SmoothedMomentParams, tol: float = 1e-8, r_cut: float | None = None,
        threads: int = 1) -> float:
    val, err = i2c_eval(p, tol, r_cut, threads=threads)
    if err > tol * max(1.0, abs(val)):
        raise PrecisionError(f"continuous spectrum error {err:.3g} above tolerance")
    return val


def lambda_cutoff(p: SmoothedMomentParams, level: float, step: float = 1.0,
                  r_max: float | None = None) -> float:
    """Smallest r (on a unit grid) after which |Lambda| stays below ``level`` for 4 steps."""
    r_max = r_max or p.decay_r
    r, quiet = 1.0, 0
    while r < r_max:
        if abs(lambda_eval(r, p, 1e-12)[0]) < level:
            quiet += 1
            if quiet >= 4:
                return r
        else:
            quiet = 0
        r += step
    return r_max


@dataclass(frozen=True)
class ResidualReport:
    T: float
    xi: float
    psi: float
    i2c: float
    i2d: float
    tail_bound: float
    residual: float
    bound: float

    @property
    def ok(self) -> bool:
        return abs(self.residual) <= self.bound


def residual_main_term(p: SmoothedMomentParams, data: Sequence[SpectralDatum],
                       psi: Callable | None = None, continuous: Callable | None = None,
                       discrete: Callable | None = None, K: float = RESIDUAL_K,
                       cache=None, tol: float = 1e-10) -> ResidualReport:
    """psi - I_c - I_d, which should reproduce the explicit main term plus a tiny holomorphic part.

    The three components can be replaced by callables taking ``p`` (the
    discrete one also takes ``data`` and returns (value, tail_bound)).
    """
    data = validate_spectral(data)
    psi_v = psi(p) if psi else psi_direct(p, cache=cache)
    ic = continuous(p) if continuous else i2c(p)
    idv, tb = discrete(p, data) if discrete else i2d(p, data, tol)
    if not math.isfinite(tb):
        warnings.warn("spectral data do not cover the kernel decay range", RuntimeWarning)
    res = psi_v - ic - idv
    return ResidualReport(p.T, p.xi, psi_v, ic, idv, tb, res, K * math.log(p.T) ** 4 + tb)
