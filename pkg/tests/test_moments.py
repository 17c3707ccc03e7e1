import math

import numpy as np
import pytest

from zml import quad
from zml.errors import DomainError, InfeasibleError
from zml.moments import (A4, MomentPolynomial, MomentRecord, calibrate_p4, e2, e2_scan,
                         envelope_ratio, exponent_fit, fit_free, fit_p4, fourth_moment,
                         fourth_moment_table, holder_c, holder_check, holder_exponents,
                         moment_integral, moment_power, running_max, sign_changes)
from zml.zetacore import critical_power


def brute_moment(a, b, power=4.0, width=0.02, order=10):
    """Independent reference: uniform narrow panels, no shared lattice."""
    x, w = quad.panel_nodes(quad.uniform_edges(a, b, width), order)
    return quad.fsum(critical_power(x, power)[0] * w)


def test_a4_pinned():
    assert A4 == 1.0 / (2.0 * math.pi ** 2)
    with pytest.raises(ValueError):
        MomentPolynomial((1, 2, 3, 4, 0.05))
    p = MomentPolynomial.from_lower((1, 2, 3, 4))
    assert p.a[4] == A4


def test_q4_is_p4_plus_derivative(poly):
    L = np.linspace(0, 12, 7)
    d = np.polynomial.polynomial.polyder(np.array(poly.a))
    assert np.allclose(poly.q4(L), poly.p4(L) + np.polynomial.polynomial.polyval(L, d), rtol=1e-14)


def test_fourth_moment_basics(cache):
    assert fourth_moment(0) == 0.0
    a = fourth_moment(50.0, cache=cache)
    b = fourth_moment(80.0, cache=cache)
    assert b >= a >= 0


def test_fourth_moment_against_fine_panels(cache):
    ref = brute_moment(0.0, 100.0)
    assert abs(fourth_moment(100.0, cache=cache) - ref) <= 1e-6 * ref


def test_additivity(cache):
    t1, t2 = 123.4, 345.6
    a, ea = moment_integral(t1, cache=cache)
    b, eb = moment_integral(t2, cache=cache)
    mid = brute_moment(t1, t2)
    assert abs((b - a) - mid) <= ea + eb + 1e-7 * mid


def test_moment_power(cache):
    assert moment_power(37.5, 0.0) == 37.5
    a = moment_power(300.0, 4.0, cache=cache)
    b = fourth_moment(300.0, cache=cache)
    assert abs(a - b) <= 1e-10 * b
    eight = moment_power(500.0, 8.0)
    ref = brute_moment(0.0, 500.0, 8.0, width=0.01)
    assert abs(eight - ref) <= 1e-5 * ref


def test_record_invariants(poly, cache):
    r = e2(100.0, poly, cache)
    assert r.i4 == r.main + r.e2
    with pytest.raises(ValueError):
        MomentRecord(10.0, 1.0, 0.5, 0.4, 0.0)
    with pytest.raises(DomainError):
        e2(1.0, poly)


def test_fit_p4_recovers_synthetic():
    true = MomentPolynomial.from_lower((1.3, -0.4, 0.7, 0.11))
    T = np.geomspace(100, 1e5, 60)
    got = fit_p4(T, true.main(T))
    assert np.allclose(got.a[:4], true.a[:4], atol=1e-8, rtol=0)
    assert got.a[4] == A4


def test_free_fit_recovers_synthetic_cesaro():
    true = MomentPolynomial.from_lower((1.3, -0.4, 0.7, 0.11))
    T = np.geomspace(1e3, 1e5, 40)
    from zml.moments import cesaro_main
    fit = fit_free(T, cesaro_main(T, true.a))
    assert np.allclose(fit.a, true.a, rtol=1e-6, atol=1e-8)


def test_fit_rejects_narrow_ranges():
    T = np.geomspace(1e3, 5e4, 30)
    with pytest.raises(DomainError):
        fit_p4(T, T)


def test_calibrated_defaults_fit_quality(poly, cache):
    heights = np.geomspace(10, 1e5, 400)
    heights = heights[heights >= 100]
    recs = e2_scan(heights, poly, cache)
    e = np.array([r.e2 for r in recs])
    assert abs(e.mean()) <= 0.1 * math.sqrt(np.mean(e ** 2))
    refit = calibrate_p4(heights, cache)
    assert np.allclose(refit.a, poly.a, rtol=1e-9, atol=1e-12)


def test_e2_sign_and_envelope(poly, cache):
    recs = e2_scan(np.geomspace(10, 2000, 150), poly, cache)
    assert sign_changes(recs) >= 1
    recs = e2_scan(np.geomspace(10, 1e4, 300), poly, cache)
    assert envelope_ratio(recs) <= 5.0


def test_exponent_fit():
    T = np.geomspace(10, 1e4, 20)
    assert abs(exponent_fit(list(zip(T, T ** 2))) - 2.0) < 1e-12
    noise = 1 + 0.01 * np.sin(np.arange(T.size) * 1.7)
    assert abs(exponent_fit(list(zip(T, 3 * T ** 1.5 * noise))) - 1.5) < 0.05
    with pytest.raises(DomainError):
        exponent_fit([(10.0, 1.0)] * 12)
    with pytest.raises(DomainError):
        exponent_fit(list(zip(T[:5], T[:5])))


def test_running_max_exponent_reported(poly, cache):
    recs = e2_scan(np.geomspace(100, 1e5, 200), poly, cache)
    slope = exponent_fit(running_max(recs))
    assert 0 < slope < 1.5


def test_holder_exponent_algebra():
    for r in (0.0, 0.25, 0.5):
        A = 1 + 2 * r
        assert abs((2 * A - 1) / A - (4 * r + 1) / (2 * r + 1)) < 1e-15
    with pytest.raises(InfeasibleError):
        holder_exponents(2.0, 1.5)
    p, q = holder_exponents(holder_c(1.5), 1.5)
    assert abs(1 / p + 1 / q - 1) < 1e-12


def test_holder_unit_integrand_is_equality():
    rep = holder_check(120.0, holder_c(1.5), 1.5, unit_integrand=True)
    assert abs(rep.lhs - rep.rhs) <= 1e-12 * rep.rhs


def test_holder_holds_on_random_triples(rng):
    for _ in range(100):
        T = rng.uniform(50, 500)
        A = rng.uniform(1.05, 2.0)
        rep = holder_check(T, holder_c(A), A)
        assert rep.holds and rep.lhs <= rep.rhs * (1 + 1e-9)


def test_table_matches_single_calls(cache):
    rows = fourth_moment_table([50.0, 150.5, 400.0], cache=cache)
    for T, v, _ in rows:
        assert abs(v - moment_integral(T, cache=cache)[0]) <= 1e-14 * v
