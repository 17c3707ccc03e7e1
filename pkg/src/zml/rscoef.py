"""Generator for the Riemann-Siegel correction coefficients C_0 .. C_K.

The coefficients are built in extended precision from the Taylor series of
Psi(u) = -cos(2 pi u^2 - 5 pi / 8) / cos(2 pi u) (u = p - 1/2) together with
the rational recursion of Arias de Reyna for the critical line.  That
recursion expands the remainder of zeta itself, so the theta-correction
phase exp(i (1/48t + 7/5760t^3 + ...)) is multiplied back in to obtain the
real coefficients of Hardy's Z.

Running this module as a script regenerates ``data/rs_chebyshev.txt``:

    python3 -m zml.rscoef
"""

from __future__ import annotations

import math
from fractions import Fraction
from pathlib import Path

import mpmath
import numpy as np

TABLE_PATH = Path(__file__).with_name("data") / "rs_chebyshev.txt"

# theta(t) = ... + sum_j THETA_CORR[j] / t^(2j+1)
THETA_CORR = (Fraction(1, 48), Fraction(7, 5760), Fraction(31, 80640),
              Fraction(127, 430080), Fraction(511, 1216512))


def _psi_taylor(n_terms):
    """Taylor coefficients of Psi about u = 0 by power-series division."""
    pi = mpmath.pi
    c58, s58 = mpmath.cos(5 * pi / 8), mpmath.sin(5 * pi / 8)
    num = [mpmath.mpf(0)] * n_terms
    den = [mpmath.mpf(0)] * n_terms
    for d in range(0, n_terms, 2):
        m = d // 2
        if m % 2 == 0:
            j = m // 2
            num[d] = -((-1) ** j) * (2 * pi) ** (2 * j) / mpmath.factorial(2 * j) * c58
        else:
            j = (m - 1) // 2
            num[d] = -((-1) ** j) * (2 * pi) ** (2 * j + 1) / mpmath.factorial(2 * j + 1) * s58
        den[d] = (-1) ** m * (2 * pi) ** d / mpmath.factorial(d)
    q = [mpmath.mpf(0)] * n_terms
    for n in range(n_terms):
        acc = num[n]
        for k in range(2, n + 1, 2):
            acc -= den[k] * q[n - k]
        q[n] = acc / den[0]
    return q


def _d_table(kmax):
    d = {(0, 0): Fraction(1)}

    def get(n, k):
        return d.get((n, k), Fraction(0))

    for n in range(1, kmax + 1):
        for k in range(0, 3 * n // 2 + 1):
            m = 3 * n - 2 * k
            if m:
                d[n, k] = -(m + 1) * get(n - 1, k - 2) + Fraction(1, 4 * m) * get(n - 1, k)
            else:
                acc = Fraction(0)
                for r in range(k):
                    acc -= (-1) ** (k - r) * get(n, r) * Fraction(
                        math.factorial(2 * k - 2 * r), math.factorial(k - r))
                d[n, k] = acc
    return d


def _phase_series(kmax):
    """Coefficients in 1/a of exp(i * theta correction), with t = 2 pi a^2."""
    pi = mpmath.pi
    c = [mpmath.mpc(0)] * (kmax + 1)
    for j, cj in enumerate(THETA_CORR):
        p = 2 * (2 * j + 1)
        if p <= kmax:
            c[p] = mpmath.mpf(cj.numerator) / cj.denominator / (2 * pi) ** (2 * j + 1)
    e = [mpmath.mpc(0)] * (kmax + 1)
    e[0] = mpmath.mpc(1)
    for n in range(1, kmax + 1):
        e[n] = sum(k * 1j * c[k] * e[n - k] for k in range(1, n + 1)) / n
    return e


class CoefficientGenerator:
    def __init__(self, kmax=10, n_taylor=320, dps=250):
        self.kmax = kmax
        self.n_taylor = n_taylor
        self.dps = dps
        with mpmath.workdps(dps):
            self.q = _psi_taylor(n_taylor)
            self.phase = _phase_series(kmax)
        self.d = _d_table(kmax)

    def __call__(self, u):
        """C_0(p) .. C_kmax(p) at p = 1/2 + u, as mpmath reals."""
        with mpmath.workdps(self.dps):
            u = mpmath.mpf(u)
            pi = mpmath.pi
            nd = 3 * self.kmax
            derivs = []
            for j in range(nd + 1):
                tot = mpmath.mpf(0)
                up = mpmath.mpf(1)
                for k in range(j, self.n_taylor):
                    tot += self.q[k] * mpmath.ff(k, j) * up
                    up *= u
                # the recursion works in z = 1 - 2p = -2u
                derivs.append(tot * mpmath.mpf(-0.5) ** j)
            partial = []
            for k in range(self.kmax + 1):
                acc = mpmath.mpc(0)
                for ell in range(3 * k // 2 + 1):
                    dk = self.d[k, ell]
                    if dk:
                        acc += (mpmath.mpf(dk.numerator) / dk.denominator
                                * derivs[3 * k - 2 * ell] / pi ** (2 * k - ell) / (2j) ** ell)
                partial.append(acc)
            out = []
            for k in range(self.kmax + 1):
                c = sum(partial[j] * self.phase[k - j] for j in range(k + 1))
                out.append(c.real)
            return out


def chebyshev_table(kmax=10, degree=80):
    """Chebyshev coefficients in x = 2u on [-1, 1], one row per C_k."""
    gen = CoefficientGenerator(kmax)
    with mpmath.workdps(gen.dps):
        nodes = [mpmath.cos(mpmath.pi * (k + 0.5) / (degree + 1)) / 2 for k in range(degree + 1)]
    vals = np.array([[float(v) for v in gen(u)] for u in nodes])
    x = np.array([float(2 * u) for u in nodes])
    return np.array([np.polynomial.chebyshev.chebfit(x, vals[:, k], degree) for k in range(kmax + 1)])


def write_table(path=TABLE_PATH, kmax=10, degree=80):
    table = chebyshev_table(kmax, degree)
    header = f"Chebyshev coefficients of C_0..C_{kmax} in x = 2(p - 1/2); one row per k"
    np.savetxt(path, table, fmt="%.17e", header=header)
    return table


if __name__ == "__main__":
    write_table()
    print(f"wrote {TABLE_PATH}")
