"""Panel quadrature shared by the moment, Mellin and spectral code.

Everything here is deterministic: node sets depend only on the integration
limits and the panel rule, work is split into fixed-size chunks whose
composition never depends on the number of workers, and reductions use
``math.fsum`` in index order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np

TWO_PI = 2.0 * math.pi
CHUNK = 4096


@lru_cache(maxsize=32)
def gl_rule(n: int):
    """Gauss-Legendre nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def zero_spacing(t):
    """Mean gap between consecutive zeta zeros near height t (floored for small t)."""
    t = np.asarray(t, dtype=float)
    return TWO_PI / np.maximum(np.log(np.maximum(t, 1.0) / TWO_PI), 1.0)


def critical_edges(a: float, b: float, fraction: float = 0.25, refine: int = 1) -> np.ndarray:
    """Panel edges on [a, b] with widths <= fraction * local zero spacing / refine.

    The edges are built on the fixed lattice of unit intervals so that any
    sub-range of a larger integral reuses exactly the same panels.
    """
    if b <= a:
        return np.array([a, b], dtype=float)
    out = [np.array([a])]
    lo = math.floor(a)
    for k in range(lo, math.ceil(b)):
        left, right = max(a, float(k)), min(b, float(k + 1))
        if right <= left:
            continue
        width = fraction * float(zero_spacing(k + 1.0)) / refine
        n = max(1, math.ceil(1.0 / width))
        # uniform split of the full unit cell, clipped to [a, b]
        cell = k + np.arange(1, n + 1) / n
        inner = cell[(cell > left) & (cell < right)]
        out.append(inner)
        out.append(np.array([right]))
    return np.concatenate(out)


def uniform_edges(a: float, b: float, width: float) -> np.ndarray:
    n = max(1, math.ceil((b - a) / width))
    return np.linspace(a, b, n + 1)


def panel_nodes(edges: np.ndarray, order: int):
    """Flattened Gauss-Legendre nodes and weights for consecutive panels."""
    x, w = gl_rule(order)
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def halve(edges: np.ndarray) -> np.ndarray:
    mids = 0.5 * (edges[:-1] + edges[1:])
    out = np.empty(2 * edges.size - 1)
    out[0::2] = edges
    out[1::2] = mids
    return out


def fsum(values) -> float:
    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())


def csum(values) -> complex:
    v = np.asarray(values, dtype=complex).ravel()
    return complex(math.fsum(v.real.tolist()), math.fsum(v.imag.tolist()))


def pmap(fn, items, threads: int = 1):
    """Order-preserving map; ``threads > 1`` uses a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def eval_chunked(fn, x: np.ndarray, threads: int = 1, chunk: int = CHUNK):
    """Apply a vectorised ``fn`` on fixed-size chunks of ``x``.

    ``fn`` may return an array or a tuple of arrays; results are concatenated
    in chunk order.
    """
    x = np.asarray(x)
    if x.size == 0:
        out = fn(x)
        return out
    pieces = [x[i:i + chunk] for i in range(0, x.size, chunk)]
    results = pmap(fn, pieces, threads)
    if isinstance(results[0], tuple):
        return tuple(np.concatenate([r[k] for r in results]) for k in range(len(results[0])))
    return np.concatenate(results)


def panel_sums(values: np.ndarray, weights: np.ndarray, order: int) -> np.ndarray:
    """Per-panel weighted sums (panels are consecutive blocks of ``order`` nodes)."""
    prod = (values * weights).reshape(-1, order)
    return prod.sum(axis=1)


def gl_integrate(fn, edges: np.ndarray, order: int = 8, threads: int = 1):
    """Integrate a vectorised ``fn`` over the panels and estimate the error.

    The estimate is the difference against the same rule on halved panels;
    the finer value is returned.
    """
    coarse_x, coarse_w = panel_nodes(edges, order)
    fine_x, fine_w = panel_nodes(halve(edges), order)
    fc = eval_chunked(fn, coarse_x, threads)
    ff = eval_chunked(fn, fine_x, threads)
    if np.iscomplexobj(fc) or np.iscomplexobj(ff):
        c, f = csum(fc * coarse_w), csum(ff * fine_w)
    else:
        c, f = fsum(fc * coarse_w), fsum(ff * fine_w)
    return f, abs(f - c)


def oscillatory_edges(a: float, b: float, freq, fraction: float = 0.25, min_panels: int = 1):
    """Panel edges on [a, b] whose widths stay below ``fraction`` of 2*pi/freq(x).

    ``freq`` is a vectorised local angular frequency; the construction
    marches a cumulative phase so the number of panels tracks the total
    phase swept.
    """
    probe = np.linspace(a, b, 4097)
    f = np.maximum(np.asarray(freq(probe), dtype=float), 1e-300)
    # cumulative phase by trapezoid on the probe grid
    phase = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(probe))])
    step = fraction * TWO_PI
    n = max(min_panels, math.ceil(phase[-1] / step))
    targets = np.linspace(0.0, phase[-1], n + 1)
    edges = np.interp(targets, phase, probe)
    edges[0], edges[-1] = a, b
    return np.unique(edges)
