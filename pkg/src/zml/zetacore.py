"""Riemann zeta on and near the critical line, plus the |zeta|^4 sample cache.

Two evaluators are provided: Euler-Maclaurin summation (any height, cost
O(|t|)) and the Riemann-Siegel formula with up to ten correction terms
(t >= 10, cost O(sqrt(t))).  They are independent and serve as oracles for
each other.
"""

from __future__ import annotations

import csv
import math
import os
import tempfile
import threading
from bisect import bisect_left
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .errors import DataError, DomainError, PoleError, PrecisionError

TWO_PI = 2.0 * math.pi
RS_MIN_T = 10.0
RS_MAX_TERMS = 10
RS_DEFAULT_TERMS = 9
CHEB_TABLE = os.path.join(os.path.dirname(__file__), "data", "rs_chebyshev.txt")

# Empirical Riemann-Siegel error model
# |zeta_rs(t, k) - zeta(1/2 + it)| <= RS_ERR_CONST[k] * t**(-(2k+3)/4) + RS_ROUND * t log t,
# fitted against Euler-Maclaurin on t in [10, 5000] with a factor 2 margin.
RS_ERR_CONST = (0.25, 0.12, 0.03, 0.06, 0.03, 0.03, 0.03, 0.02, 0.04, 0.02, 0.06)
RS_ROUND = 1.6e-15
EM_MAX_T = 1e4

# Bernoulli numbers B_2k / (2k)! for k = 1..30
_EM_COEF = np.array([float(mpmath.bernoulli(2 * k) / mpmath.factorial(2 * k)) for k in range(1, 31)])


# --------------------------------------------------------------------------
# Euler-Maclaurin


def _em_block(s, tol):
    """Euler-Maclaurin for a block of s with similar |s|. Returns (value, err)."""
    smax = float(np.abs(s).max())
    n_cut = max(12, int(math.ceil(smax / math.pi)) + 2)
    n = np.arange(1, n_cut, dtype=float)
    logn = np.log(n)
    head = np.exp(-np.outer(s, logn)).sum(axis=1)
    big_n = float(n_cut)
    log_n = math.log(big_n)
    npow = np.exp(-s * log_n)
    val = head + 0.5 * npow + big_n * npow / (s - 1.0)
    poch = s.copy()  # rising factorial s (s+1) ... (s+2k-2)
    npow_k = npow / big_n  # N^(-s-1)
    err = np.full(s.shape, np.inf)
    for k in range(len(_EM_COEF)):
        term = _EM_COEF[k] * poch * npow_k
        val = val + term
        mag = np.abs(term)
        err = mag
        if float(mag.max()) <= 0.05 * tol:
            break
        poch = poch * (s + 2 * k + 1) * (s + 2 * k + 2)
        npow_k = npow_k / (big_n * big_n)
    else:
        raise PrecisionError("Euler-Maclaurin tail did not reach tolerance")
    rounding = 4e-16 * (1.0 + np.sum(n ** -float(s.real.min())))
    return val, err + rounding


def zeta_em_array(s, tol=1e-12):
    """Vectorised Euler-Maclaurin zeta(s); returns (values, error bounds)."""
    s = np.atleast_1d(np.asarray(s, dtype=complex))
    if np.any(s == 1.0):
        raise PoleError("zeta has a pole at s = 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if np.any(s.real < -1.0) or np.any(np.abs(s.imag) > EM_MAX_T + 1e-9):
        raise DomainError("Euler-Maclaurin path supports Re s >= -1 and |Im s| <= 1e4")
    order = np.argsort(np.abs(s), kind="stable")
    vals = np.empty_like(s)
    errs = np.empty(s.shape)
    block = 256
    for lo in range(0, s.size, block):
        idx = order[lo:lo + block]
        v, e = _em_block(s[idx], tol)
        vals[idx] = v
        errs[idx] = e
    if np.any(errs > tol):
        raise PrecisionError(f"Euler-Maclaurin cannot reach tol={tol:g} (floor {errs.max():.2e})")
    return vals, errs


def zeta_em(s: complex, tol: float = 1e-12) -> complex:
    """zeta(s) by Euler-Maclaurin summation with absolute error <= tol."""
    vals, _ = zeta_em_array([s], tol)
    return complex(vals[0])


# --------------------------------------------------------------------------
# Riemann-Siegel


def rs_theta(t):
    """Riemann-Siegel theta function by its asymptotic series (5 correction terms)."""
    t = np.asarray(t, dtype=float)
    it = 1.0 / t
    it2 = it * it
    corr = it * (1.0 / 48 + it2 * (7.0 / 5760 + it2 * (31.0 / 80640 + it2 * (127.0 / 430080 + it2 * 511.0 / 1216512))))
    return 0.5 * t * np.log(t / TWO_PI) - 0.5 * t - math.pi / 8 + corr


@lru_cache(maxsize=1)
def _rs_chebyshev():
    """Chebyshev coefficients (in x = 2p - 1) of C_0 .. C_10, see ``rscoef``."""
    return np.loadtxt(CHEB_TABLE)


def rs_coefficients(p, terms=RS_MAX_TERMS):
    """Correction coefficients C_0(p) .. C_terms(p) of the Riemann-Siegel remainder."""
    coefs = _rs_chebyshev()
    x = 2.0 * np.asarray(p, dtype=float) - 1.0
    return [np.polynomial.chebyshev.chebval(x, coefs[k]) for k in range(terms + 1)]


def hardy_z(t, terms=RS_DEFAULT_TERMS):
    """Hardy's Z(t) = exp(i theta(t)) zeta(1/2 + it) by Riemann-Siegel (t >= 10)."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < RS_MIN_T):
        raise DomainError("Riemann-Siegel requires t >= 10; use zeta_em below")
    if not 0 <= terms <= RS_MAX_TERMS:
        raise ValueError(f"terms must be in 0..{RS_MAX_TERMS}")
    out = np.empty_like(t)
    order = np.argsort(t, kind="stable")
    block = 2048
    for lo in range(0, t.size, block):
        idx = order[lo:lo + block]
        out[idx] = _hardy_block(t[idx], terms)
    return out[0] if scalar else out


def _hardy_block(t, terms):
    a = np.sqrt(t / TWO_PI)
    n_t = np.floor(a)
    nmax = int(n_t.max())
    theta = rs_theta(t)
    n = np.arange(1, nmax + 1, dtype=float)
    phase = theta[:, None] - np.outer(t, np.log(n))
    amp = n ** -0.5
    terms_mat = np.cos(phase) * amp
    if nmax > int(n_t.min()):
        terms_mat[n[None, :] > n_t[:, None]] = 0.0
    main = 2.0 * terms_mat.sum(axis=1)
    p = a - n_t
    cs = rs_coefficients(p, terms)
    w = 1.0 / a
    rem = np.zeros_like(t)
    for c in reversed(cs):
        rem = rem * w + c
    sign = np.where(n_t % 2 == 1, 1.0, -1.0)  # (-1)^(N-1)
    return main + sign * np.sqrt(w) * rem


def zeta_rs(t: float, terms: int = RS_DEFAULT_TERMS) -> complex:
    """zeta(1/2 + it) by the Riemann-Siegel formula with ``terms`` corrections."""
    z = hardy_z(float(t), terms)
    return complex(np.exp(-1j * rs_theta(float(t))) * z)


def rs_error_bound(t, terms=RS_MAX_TERMS):
    t = np.asarray(t, dtype=float)
    return RS_ERR_CONST[terms] * t ** (-(2 * terms + 3) / 4.0) + RS_ROUND * t * np.log(t)


# --------------------------------------------------------------------------
# |zeta|^4 samples


def critical_abs(x, terms=RS_DEFAULT_TERMS, tol=1e-12):
    """|zeta(1/2 + ix)| with an absolute error bound, vectorised.

    Riemann-Siegel is used wherever its error model is below 1e-9 (and
    always above EM_MAX_T); Euler-Maclaurin covers the rest, including x < 10.
    """
    x = np.abs(np.atleast_1d(np.asarray(x, dtype=float)))
    out = np.empty_like(x)
    err = np.empty_like(x)
    use_rs = x >= RS_MIN_T
    use_rs[use_rs] = (rs_error_bound(x[use_rs], terms) <= 1e-9) | (x[use_rs] > EM_MAX_T)
    if use_rs.any():
        out[use_rs] = np.abs(hardy_z(x[use_rs], terms))
        err[use_rs] = rs_error_bound(x[use_rs], terms)
    if (~use_rs).any():
        v, e = zeta_em_array(0.5 + 1j * x[~use_rs], tol)
        out[~use_rs] = np.abs(v)
        err[~use_rs] = e
    return out, err


def critical_power(x, power=4.0):
    """|zeta(1/2 + ix)|^power and its propagated absolute error."""
    a, e = critical_abs(x)
    val = a ** power
    perr = power * np.maximum(a, e) ** (power - 1) * e if power else np.zeros_like(a)
    return val, perr


@dataclass(frozen=True)
class CriticalSample:
    x: float
    z4: float
    err: float

    def __post_init__(self):
        if not (self.x >= 0 and self.z4 >= 0 and self.err >= 0):
            raise DataError(f"invalid critical sample {self}")
        if self.err > 1e-6 * max(1.0, self.z4):
            raise DataError(f"sample error too large at x={self.x}")


class EvalCache:
    """Ordered map x -> CriticalSample with CSV persistence.

    Reads are lock-free snapshots; inserts are serialised by a lock and
    publish a fully built sample.
    """

    def __init__(self, path: str | os.PathLike | None = None, resolution: float = 0.0):
        self.path = os.fspath(path) if path else None
        self.resolution = resolution
        self._keys: list[float] = []
        self._samples: dict[float, CriticalSample] = {}
        # integrals of |zeta|^p over unit cells [k, k+1], keyed by (p, k)
        self.cells: dict[tuple[float, int], tuple[float, float]] = {}
        self._lock = threading.Lock()
        self.dirty = False
        if self.path and os.path.exists(self.path):
            self.load(self.path)
        if self.path and os.path.exists(self.cells_path):
            self.load_cells(self.cells_path)

    @property
    def cells_path(self):
        return self.path + ".cells" if self.path else None

    def __len__(self):
        return len(self._keys)

    def __contains__(self, x):
        return float(x) in self._samples

    @property
    def range(self):
        return (self._keys[0], self._keys[-1]) if self._keys else (math.nan, math.nan)

    def get(self, x: float) -> CriticalSample | None:
        return self._samples.get(float(x))

    def put_cells(self, power: float, items) -> None:
        with self._lock:
            for k, value, err in items:
                self.cells[(float(power), int(k))] = (float(value), float(err))
            self.dirty = True

    def put(self, sample: CriticalSample) -> None:
        with self._lock:
            key = float(sample.x)
            if key not in self._samples:
                self._keys.insert(bisect_left(self._keys, key), key)
            self._samples[key] = sample
            self.dirty = True

    def samples(self):
        return [self._samples[k] for k in list(self._keys)]

    def load(self, path) -> None:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["x", "z4", "err"]:
                raise DataError(f"{path}: expected header x,z4,err")
            prev = -math.inf
            for row in reader:
                if not row:
                    continue
                x, z4, err = (float(v) for v in row)
                if not x > prev:
                    raise DataError(f"{path}: rows must be strictly increasing in x")
                prev = x
                s = CriticalSample(x, z4, err)
                self._keys.append(x)
                self._samples[x] = s

    def load_cells(self, path) -> None:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            if next(reader, None) != ["power", "cell", "value", "err"]:
                raise DataError(f"{path}: expected header power,cell,value,err")
            for row in reader:
                if row:
                    p, k, v, e = row
                    v, e = float(v), float(e)
                    if not (v >= 0 and e >= 0):
                        raise DataError(f"{path}: invalid cell row {row}")
                    self.cells[(float(p), int(k))] = (v, e)

    def save(self, path=None) -> None:
        path = os.fspath(path or self.path)
        if not path:
            raise ValueError("no cache path")
        rows = [[repr(s.x), f"{s.z4:.17g}", f"{s.err:.17g}"] for s in self.samples()]
        atomic_write_csv(path, ["x", "z4", "err"], rows)
        if self.cells:
            cells = [[repr(p), str(k), f"{v:.17g}", f"{e:.17g}"] for (p, k), (v, e) in sorted(self.cells.items())]
            atomic_write_csv(path + ".cells", ["power", "cell", "value", "err"], cells)
        self.dirty = False


def atomic_write_csv(path, header, rows) -> None:
    """Write a CSV through a temporary file and rename it into place."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".zml-tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def zeta4(x: float, cache: EvalCache | None = None) -> float:
    """|zeta(1/2 + ix)|^4, served from ``cache`` when present."""
    if x < 1:
        raise DomainError("zeta4 requires x >= 1")
    if cache is not None:
        hit = cache.get(x)
        if hit is not None:
            return hit.z4
    v, e = critical_power(np.array([x]), 4.0)
    sample = CriticalSample(float(x), float(v[0]), float(e[0]))
    if cache is not None:
        cache.put(sample)
    return sample.z4


def zeta4_array(x, cache: EvalCache | None = None):
    """Vectorised |zeta(1/2 + ix)|^4 with error; cache is consulted but not filled."""
    x = np.asarray(x, dtype=float)
    if cache is None or len(cache) == 0:
        return critical_power(x, 4.0)
    val = np.empty_like(x)
    err = np.empty_like(x)
    miss = np.ones(x.shape, dtype=bool)
    for i, xi in enumerate(x.flat):
        hit = cache.get(xi)
        if hit is not None:
            val.flat[i] = hit.z4
            err.flat[i] = hit.err
            miss.flat[i] = False
    if miss.any():
        v, e = critical_power(x[miss], 4.0)
        val[miss] = v
        err[miss] = e
    return val, err
