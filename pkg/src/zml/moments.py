"""Power moments of zeta on the critical line and the fourth-moment error term.

Integrals over [0, T] are assembled from unit cells [k, k+1] (plus one
partial cell).  Each cell is integrated with Gauss-Legendre panels no wider
than a quarter of the local zero spacing, and the error estimate is the
difference against the halved-panel rule.  Cells can be cached, so a scan
over many heights costs one sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quad
from .errors import DomainError, IllConditionedError, InfeasibleError, PrecisionError
from .zetacore import EvalCache, critical_abs, critical_power

A4 = 1.0 / (2.0 * math.pi ** 2)
GL_ORDER = 8
CELL_CHUNK = 64
MAX_REFINE = 16
DEFAULT_RTOL = 1e-7


@dataclass(frozen=True)
class MomentPolynomial:
    """P_4(L) = a[0] + a[1] L + ... + a[4] L^4, with the leading coefficient fixed."""

    a: tuple[float, float, float, float, float]

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        if len(a) != 5:
            raise ValueError("P_4 needs exactly five coefficients")
        if a[4] != A4:
            raise ValueError(f"leading coefficient must be 1/(2 pi^2), got {a[4]!r}")
        object.__setattr__(self, "a", a)

    @classmethod
    def from_lower(cls, lower):
        return cls(tuple(lower) + (A4,))

    def q_coefficients(self) -> np.ndarray:
        """Coefficients of Q_4 = P_4 + P_4'."""
        a = np.array(self.a)
        q = a.copy()
        q[:-1] += a[1:] * np.arange(1, 5)
        return q

    def p4(self, L):
        return np.polynomial.polynomial.polyval(L, np.array(self.a))

    def q4(self, L):
        return np.polynomial.polynomial.polyval(L, self.q_coefficients())

    def main(self, T):
        T = np.asarray(T, dtype=float)
        return T * self.p4(np.log(T))

    def q4_max(self, lo: float, hi: float) -> float:
        """max of Q_4(log x) for x in [lo, hi]."""
        L = np.log(np.linspace(lo, hi, 257))
        crit = np.polynomial.polynomial.polyroots(np.polynomial.polynomial.polyder(self.q_coefficients()))
        crit = crit[np.isreal(crit)].real
        crit = crit[(crit >= L[0]) & (crit <= L[-1])]
        return float(np.max(self.q4(np.concatenate([L, crit]))))


@dataclass(frozen=True)
class MomentRecord:
    T: float
    i4: float
    main: float
    e2: float
    quad_err: float

    def __post_init__(self):
        if self.e2 != self.i4 - self.main:
            raise ValueError("e2 must equal i4 - main")
        if self.i4 < 0:
            raise ValueError("i4 must be non-negative")

    @classmethod
    def build(cls, T, i4, poly: MomentPolynomial, quad_err):
        main = float(poly.main(T))
        return cls(float(T), float(i4), main, float(i4) - main, float(quad_err))


@dataclass(frozen=True)
class BoundHypothesis:
    rho: float
    r: float
    c: float

    def __post_init__(self):
        if self.rho < 0 or self.r < 0:
            raise ValueError("rho and r must be non-negative")
        if not 0 <= self.c <= 1:
            raise ValueError("c must lie in [0, 1]")


@dataclass
class FreeFit:
    """Unconstrained least-squares fit of all five coefficients (validation only)."""

    a: np.ndarray
    condition: float
    residuals: np.ndarray = field(repr=False)
    kind: str = "cesaro"

    @property
    def a4_rel_err(self) -> float:
        return float(self.a[4] / A4 - 1.0)


def default_tol(T: float, rtol: float = DEFAULT_RTOL) -> float:
    """A tolerance proportional to the expected size of the fourth moment."""
    L = math.log(max(T, math.e))
    return rtol * max(1.0, T) * max(1.0, A4 * L ** 4 + L ** 3)


# --------------------------------------------------------------------------
# unit-cell integrals


def _cell_edges(k: int, hi: float, refine: int) -> np.ndarray:
    return quad.critical_edges(float(k), hi, refine=refine)


def _eval_cells(cells, power: float, refine: int):
    """Integrate |zeta|^power over each (k, hi) cell; returns (values, errors)."""
    xs_c, ws_c, xs_f, ws_f, cnt_c, cnt_f = [], [], [], [], [], []
    for k, hi in cells:
        edges = _cell_edges(k, hi, refine)
        xc, wc = quad.panel_nodes(edges, GL_ORDER)
        xf, wf = quad.panel_nodes(quad.halve(edges), GL_ORDER)
        xs_c.append(xc), ws_c.append(wc), xs_f.append(xf), ws_f.append(wf)
        cnt_c.append(xc.size), cnt_f.append(xf.size)
    x = np.concatenate(xs_c + xs_f)
    vals, errs = critical_power(x, power)
    nc = sum(cnt_c)
    wc = np.concatenate(ws_c)
    wf = np.concatenate(ws_f)
    coarse = np.add.reduceat(vals[:nc] * wc, np.cumsum([0] + cnt_c[:-1]))
    fine = np.add.reduceat(vals[nc:] * wf, np.cumsum([0] + cnt_f[:-1]))
    eval_err = np.add.reduceat(errs[nc:] * wf, np.cumsum([0] + cnt_f[:-1]))
    return fine, np.abs(fine - coarse), eval_err


def _integrate_cells(cells, power, refine, threads):
    groups = [cells[i:i + CELL_CHUNK] for i in range(0, len(cells), CELL_CHUNK)]
    parts = quad.pmap(lambda g: _eval_cells(g, power, refine), groups, threads)
    if not parts:
        return np.zeros(0), np.zeros(0), np.zeros(0)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def cell_table(n_cells: int, power: float = 4.0, tol_cell: float = math.inf,
               cache: EvalCache | None = None, threads: int = 1):
    """Integrals of |zeta(1/2+it)|^power over [k, k+1] for k < n_cells.

    Cells whose discretisation estimate exceeds ``tol_cell`` are recomputed on
    finer panels; the returned errors also include the propagated evaluation
    error of the zeta values, which refinement cannot reduce.
    """
    values = np.empty(n_cells)
    errors = np.empty(n_cells)
    todo = []
    key = float(power)
    for k in range(n_cells):
        hit = cache.cells.get((key, k)) if cache is not None else None
        if hit is not None and hit[1] <= tol_cell:
            values[k], errors[k] = hit
        else:
            todo.append(k)
    refine = 1
    while todo:
        v, dq, de = _integrate_cells([(k, k + 1.0) for k in todo], power, refine, threads)
        e = dq + de
        values[todo] = v
        errors[todo] = e
        if cache is not None:
            cache.put_cells(key, zip(todo, v, e))
        todo = [k for k, dk in zip(todo, dq) if dk > tol_cell]
        refine *= 2
        if todo and refine > MAX_REFINE:
            worst = float(errors[todo].max())
            raise PrecisionError(f"cell tolerance {tol_cell:.3g} unattainable (best {worst:.3g})")
    return values, errors


def _partial_cell(k: int, T: float, power: float, tol_cell: float):
    refine = 1
    while True:
        v, dq, de = _eval_cells([(k, T)], power, refine)
        if dq[0] <= tol_cell:
            return float(v[0]), float(dq[0] + de[0])
        refine *= 2
        if refine > MAX_REFINE:
            raise PrecisionError(f"partial cell tolerance {tol_cell:.3g} unattainable")


class _Prefix:
    """Exact running sums; each prefix is the correctly rounded total."""

    def __init__(self):
        self.partials: list[float] = []

    def add(self, x: float) -> float:
        i = 0
        for y in self.partials:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo:
                self.partials[i] = lo
                i += 1
            x = hi
        self.partials[i:] = [x]
        return math.fsum(self.partials)


def moment_integral(T: float, power: float = 4.0, tol: float | None = None,
                    cache: EvalCache | None = None, threads: int = 1):
    """int_0^T |zeta(1/2+it)|^power dt and its error estimate."""
    if T < 0:
        raise DomainError("T must be non-negative")
    if power == 0:
        return float(T), 0.0
    if T == 0:
        return 0.0, 0.0
    if tol is None:
        tol = default_tol(T) if power == 4 else math.inf
    if tol <= 0:
        raise ValueError("tol must be positive")
    n_full = int(math.floor(T))
    tol_cell = tol / (n_full + 1)
    vals, errs = cell_table(n_full, power, tol_cell, cache, threads)
    pv, pe = (0.0, 0.0)
    if T > n_full:
        pv, pe = _partial_cell(n_full, T, power, tol_cell)
    total = math.fsum(list(vals) + [pv])
    err = math.fsum(list(errs) + [pe])
    if err > tol:
        raise PrecisionError(f"error estimate {err:.3g} exceeds tol {tol:.3g}")
    return total, err


def fourth_moment(T: float, tol: float | None = None, cache: EvalCache | None = None,
                  threads: int = 1) -> float:
    """int_0^T |zeta(1/2+it)|^4 dt by panel quadrature (see ``moment_integral``)."""
    return moment_integral(T, 4.0, tol, cache, threads)[0]


def moment_power(T: float, p: float, tol: float | None = None, cache: EvalCache | None = None,
                 threads: int = 1) -> float:
    """int_0^T |zeta(1/2+it)|^p dt for p in [2, 12] (p = 0 gives T)."""
    if p != 0 and not 2 <= p <= 12:
        raise DomainError("p must lie in [2, 12]")
    if T < 2 and p != 0:
        raise DomainError("T must be >= 2")
    return moment_integral(T, p, tol, cache, threads)[0]


def fourth_moment_table(heights, tol: float | None = None, cache: EvalCache | None = None,
                        threads: int = 1):
    """(T, i4, err) for many heights from a single sweep of unit cells."""
    hs = np.sort(np.asarray(heights, dtype=float))
    if hs.size == 0:
        return []
    if hs[0] < 0:
        raise DomainError("heights must be non-negative")
    top = float(hs[-1])
    if tol is None:
        tol = default_tol(top)
    n_cells = int(math.floor(top))
    tol_cell = tol / (n_cells + 1)
    vals, errs = cell_table(n_cells, 4.0, tol_cell, cache, threads)
    prefix_v, prefix_e = [0.0], [0.0]
    acc_v, acc_e = _Prefix(), _Prefix()
    for v, e in zip(vals, errs):
        prefix_v.append(acc_v.add(float(v)))
        prefix_e.append(acc_e.add(float(e)))
    out = []
    for T in hs:
        k = int(math.floor(T))
        v, e = prefix_v[k], prefix_e[k]
        if T > k:
            pv, pe = _partial_cell(k, float(T), 4.0, tol_cell)
            v, e = math.fsum([v, pv]), math.fsum([e, pe])
        if e > tol:
            raise PrecisionError(f"error estimate {e:.3g} exceeds tol {tol:.3g} at T={T:g}")
        out.append((float(T), v, e))
    return out


def cesaro_table(heights, tol: float | None = None, cache: EvalCache | None = None,
                 threads: int = 1):
    """(T, int_0^T I_4(t) dt, err) for many heights.

    The outer integral uses the trapezoid rule on the integer lattice, where
    I_4 is known exactly from the cell prefix sums, with the first
    Euler-Maclaurin correction -(f(n) - f(0)) / 12, f = |zeta|^4.  The size
    of that correction is reported as part of the error, which is
    conservative.  A trailing fraction [n, T] is integrated directly as
    (T - n) I_4(n) + int_n^T (T - x) |zeta|^4 dx.
    """
    hs = np.sort(np.asarray(heights, dtype=float))
    if hs.size == 0:
        return []
    if hs[0] < 1:
        raise DomainError("heights must be >= 1")
    top = float(hs[-1])
    if tol is None:
        tol = default_tol(top)
    n_cells = int(math.floor(top))
    vals, errs = cell_table(n_cells, 4.0, tol / (n_cells + 1), cache, threads)
    i4 = np.concatenate([[0.0], np.cumsum(vals)])
    ie = np.concatenate([[0.0], np.cumsum(errs)])
    trap = np.concatenate([[0.0], np.cumsum(0.5 * (i4[1:] + i4[:-1]))])
    # sum_k ie[k] over k <= n bounds the propagated cell error of the trapezoid sum
    trap_e = np.concatenate([[0.0], np.cumsum(0.5 * (ie[1:] + ie[:-1]))])
    ints = np.unique(np.floor(hs).astype(int))
    f_end = dict(zip(ints.tolist(), critical_power(ints.astype(float), 4.0)[0]))
    f0 = float(critical_power(np.array([0.0]), 4.0)[0][0])
    out = []
    for T in hs:
        n = int(math.floor(T))
        corr = -(f_end[n] - f0) / 12.0
        v = [trap[n], corr]
        e = [trap_e[n], abs(corr)]
        if T > n:
            edges = quad.critical_edges(float(n), float(T))
            pv, pe = quad.gl_integrate(lambda x: (T - x) * critical_power(x, 4.0)[0], edges, GL_ORDER)
            v += [(T - n) * i4[n], pv]
            e += [(T - n) * ie[n], pe]
        out.append((float(T), math.fsum(v), math.fsum(e)))
    return out


def cesaro_main(T, poly_a) -> np.ndarray:
    """int_0^T t P(log t) dt for P with coefficients ``poly_a``."""
    T = np.asarray(T, dtype=float)
    return T * T * (_cesaro_design(np.log(T)) @ np.asarray(poly_a, dtype=float))


def _cesaro_design(L):
    # int_0^T t log^j t dt = T^2/2 sum_k (-1)^k j!/(j-k)! log^(j-k) T / 2^k
    L = np.asarray(L, dtype=float)
    cols = []
    for j in range(5):
        c = np.zeros_like(L)
        for k in range(j + 1):
            c += 0.5 * (-1) ** k * math.factorial(j) / math.factorial(j - k) * L ** (j - k) / 2 ** k
        cols.append(c)
    return np.stack(cols, axis=-1)


# --------------------------------------------------------------------------
# P_4 and E_2


def e2(T: float, poly: MomentPolynomial, cache: EvalCache | None = None, tol=None,
       threads: int = 1) -> MomentRecord:
    """The error term E_2(T) = I_4(T) - T P_4(log T) as a MomentRecord."""
    if T < 2:
        raise DomainError("e2 requires T >= 2")
    i4, err = moment_integral(T, 4.0, tol, cache, threads)
    return MomentRecord.build(T, i4, poly, err)


def e2_scan(heights, poly: MomentPolynomial, cache: EvalCache | None = None, tol=None,
            threads: int = 1) -> list[MomentRecord]:
    if np.any(np.asarray(heights) < 2):
        raise DomainError("e2 requires T >= 2")
    rows = fourth_moment_table(heights, tol, cache, threads)
    return [MomentRecord.build(T, i4, poly, err) for T, i4, err in rows]


def sign_changes(records) -> int:
    s = np.sign([r.e2 for r in records])
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def envelope_ratio(records) -> float:
    """max |E_2(T)| / (sqrt(T) log^4 T) over the records."""
    return max(abs(r.e2) / (math.sqrt(r.T) * math.log(r.T) ** 4) for r in records)


def _check_heights(T, min_n=20, min_top=1e4):
    if T.size < min_n:
        raise DomainError(f"need at least {min_n} heights")
    if T.min() <= 0 or T.max() / T.min() < 100:
        raise DomainError("heights must span at least two decades")
    if T.max() < min_top:
        raise DomainError(f"largest height must be >= {min_top:g}")


def _lstsq_scaled(A, y):
    scale = np.linalg.norm(A, axis=0)
    As = A / scale
    cond = float(np.linalg.cond(As))
    if not np.isfinite(cond) or cond > 1e12:
        raise IllConditionedError(f"design matrix condition number {cond:.3g} exceeds 1e12")
    coef, *_ = np.linalg.lstsq(As, y, rcond=None)
    return coef / scale, cond


def fit_p4(T, i4, min_top=1e4) -> MomentPolynomial:
    """Least squares for a_0..a_3 with a_4 pinned, from (T, I_4(T)) pairs."""
    T = np.asarray(T, dtype=float)
    i4 = np.asarray(i4, dtype=float)
    _check_heights(T, min_top=min_top)
    L = np.log(T)
    A = np.stack([T * L ** j for j in range(4)], axis=1)
    y = i4 - A4 * T * L ** 4
    coef, _ = _lstsq_scaled(A, y)
    return MomentPolynomial.from_lower(coef)


def fit_free(T, values, min_top=1e4, kind: str = "cesaro") -> FreeFit:
    """Least squares for all of a_0..a_4 (used to validate the pinned value).

    ``kind="cesaro"`` expects ``values[i] = int_0^T_i I_4(t) dt`` (see
    ``cesaro_table``); ``kind="pointwise"`` expects I_4(T_i).  The Cesaro
    form averages out most of the oscillation of E_2, which otherwise moves
    the free leading coefficient by tens of percent between sample grids.
    Both are fitted in relative form (divided by T^2 or T).
    """
    T = np.asarray(T, dtype=float)
    y = np.asarray(values, dtype=float)
    _check_heights(T, min_top=min_top)
    L = np.log(T)
    if kind == "cesaro":
        A, scale = _cesaro_design(L), T * T
    elif kind == "pointwise":
        A, scale = np.stack([L ** j for j in range(5)], axis=1), T
    else:
        raise ValueError("kind must be 'cesaro' or 'pointwise'")
    coef, cond = _lstsq_scaled(A, y / scale)
    return FreeFit(coef, cond, y - scale * (A @ coef), kind)


def calibrate_p4(heights, cache: EvalCache | None = None, tol=None, threads: int = 1,
                 free: bool = False):
    """Fit P_4 to computed fourth moments at ``heights``.

    Returns a MomentPolynomial (a_4 pinned) or, with ``free=True``, a FreeFit
    of the Cesaro means.
    """
    T = np.sort(np.asarray(heights, dtype=float))
    _check_heights(T)
    if free:
        rows = cesaro_table(T, tol, cache, threads)
        return fit_free(T, [r[1] for r in rows])
    rows = fourth_moment_table(T, tol, cache, threads)
    return fit_p4(T, [r[1] for r in rows])


# --------------------------------------------------------------------------
# Hoelder interpolation


@dataclass(frozen=True)
class HolderReport:
    T: float
    C: float
    A: float
    p: float
    q: float
    lhs: float
    rhs: float
    holds: bool


def holder_exponents(C: float, A: float):
    """Solve C p = 4, (8 - C) q = 4 + 4A, 1/p + 1/q = 1 for (p, q)."""
    if not (0 <= C <= 8 and 1 <= A <= 2):
        raise InfeasibleError("need 0 <= C <= 8 and 1 <= A <= 2")
    if C == 0:
        raise InfeasibleError("C = 0 forces p = infinity")
    p = 4.0 / C
    q = (4.0 + 4.0 * A) / (8.0 - C)
    if not (p > 1 and q > 1) or abs(1.0 / p + 1.0 / q - 1.0) > 1e-12:
        raise InfeasibleError(f"no admissible (p, q) for C={C}, A={A}; need C = 4(A-1)/A")
    return p, q


def holder_c(A: float) -> float:
    return 4.0 * (A - 1.0) / A


def holder_check(T: float, C: float, A: float, unit_integrand: bool = False) -> HolderReport:
    """Compare int |zeta|^8 with the Hoelder bound through the |zeta|^4 and |zeta|^(4+4A) moments.

    All three integrals share one node set, so the discrete inequality
    holds exactly up to rounding.  ``unit_integrand`` replaces |zeta| by 1.
    """
    p, q = holder_exponents(C, A)
    if T <= 0:
        raise DomainError("T must be positive")
    x, w = quad.panel_nodes(quad.critical_edges(0.0, T), GL_ORDER)
    z = np.ones_like(x) if unit_integrand else critical_abs(x)[0]
    lhs = quad.fsum(w * z ** 8)
    i1 = quad.fsum(w * z ** (C * p))
    i2 = quad.fsum(w * z ** ((8.0 - C) * q))
    rhs = i1 ** (1.0 / p) * i2 ** (1.0 / q)
    return HolderReport(T, C, A, p, q, lhs, rhs, lhs <= rhs * (1.0 + 1e-9))


# --------------------------------------------------------------------------
# exponent fits


def exponent_fit(values) -> float:
    """Least-squares slope of log v against log T."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("values must be a sequence of (T, v) pairs")
    T, v = arr[:, 0], arr[:, 1]
    if np.any(v <= 0) or np.any(T <= 0):
        raise DomainError("T and v must be positive")
    if np.ptp(T) == 0:
        raise DomainError("all T are equal")
    if T.size < 10 or T.max() / T.min() < 100:
        raise DomainError("need >= 10 points spanning >= 2 decades")
    slope, _ = np.polyfit(np.log(T), np.log(v), 1)
    return float(slope)


def running_max(records):
    """(T, max_{T' <= T} |E_2(T')|) pairs, for exponent fits."""
    out, best = [], 0.0
    for r in sorted(records, key=lambda r: r.T):
        best = max(best, abs(r.e2))
        out.append((r.T, best))
    return out
