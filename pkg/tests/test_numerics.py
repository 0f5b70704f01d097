import math
import threading

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from archcopula import numerics as nm
from archcopula.errors import (
    ArgumentError,
    BracketError,
    CapacityError,
    DomainError,
    EvaluationError,
)

finite_logs = st.lists(st.floats(-500, 500), min_size=1, max_size=40)


# lsum ----------------------------------------------------------------------

def test_lsum_examples():
    assert nm.lsum([0.0, 0.0]) == pytest.approx(math.log(2), rel=1e-15)
    assert nm.lsum([-np.inf, 0.0]) == 0.0
    assert nm.lsum([1000.0, 1000.0]) == pytest.approx(1000 + math.log(2), rel=1e-15)
    assert nm.lsum([-np.inf, -np.inf]) == -np.inf


def test_lsum_empty_and_bad():
    with pytest.raises(ArgumentError):
        nm.lsum([])
    with pytest.raises(DomainError):
        nm.lsum([np.inf, 0.0])
    with pytest.raises(DomainError):
        nm.lsum([np.nan])


def test_lsum_axis():
    b = np.array([[0.0, 0.0], [1.0, -np.inf]])
    np.testing.assert_allclose(nm.lsum(b, axis=1), [math.log(2), 1.0])


@given(finite_logs)
@settings(max_examples=200, deadline=None)
def test_lsum_matches_naive(b):
    b = np.array(b)
    naive = math.log(math.fsum(math.exp(x) for x in b))
    assert nm.lsum(b) == pytest.approx(naive, rel=1e-13, abs=1e-13)


@given(finite_logs, st.floats(-300, 300))
@settings(max_examples=200, deadline=None)
def test_lsum_shift_invariance(b, c):
    b = np.array(b)
    assert nm.lsum(b + c) == pytest.approx(c + nm.lsum(b), rel=1e-14, abs=1e-12)


# lssum ---------------------------------------------------------------------

def test_lssum_examples():
    assert nm.lssum([math.log(3), 0.0], [1, -1]) == pytest.approx(math.log(2), rel=1e-15)
    assert nm.lssum([math.log(2), 0.0, 0.0], [1, -1, 1]) == pytest.approx(math.log(2), rel=1e-15)


def test_lssum_nonpositive_raises_with_residual():
    with pytest.raises(DomainError) as info:
        nm.lssum([0.0, 0.0], [1, -1])
    assert info.value.residual is not None
    assert info.value.residual.sign == 0
    with pytest.raises(DomainError) as info:
        nm.lssum([0.0, math.log(2)], [1, -1])
    assert info.value.residual.sign == -1
    assert info.value.residual.value() == pytest.approx(-1.0)


def test_lssum_length_mismatch():
    with pytest.raises(ArgumentError):
        nm.lssum([0.0, 1.0], [1, 1, 1])


@given(finite_logs)
@settings(max_examples=200, deadline=None)
def test_lssum_positive_equals_lsum(b):
    assert nm.lssum(b, 1) == pytest.approx(nm.lsum(b), rel=1e-13, abs=1e-13)


def test_lssum_presorted_agrees():
    b = np.sort(np.random.default_rng(0).normal(size=30))
    s = np.ones(30)
    assert nm.lssum(b, s, presorted=True) == pytest.approx(nm.lssum(b[::-1], s), rel=1e-14)


def test_lssum_checked_flags_cancellation():
    value, lre = nm.lssum_checked(np.array([40.0, 40.0 + 1e-12]), np.array([-1.0, 1.0]))
    assert lre > math.log(1e-6)
    value, lre = nm.lssum_checked(np.array([0.0, -1.0]), np.array([1.0, -1.0]))
    assert value == pytest.approx(math.log(1 - math.exp(-1)), rel=1e-14)
    assert lre < math.log(1e-14)


def test_signed_log_value_sign_zero():
    v = nm.SignedLogValue(0, -math.inf)
    assert v.value() == 0.0


# log1mexp ------------------------------------------------------------------

def test_log1mexp_examples():
    assert nm.log1mexp(math.log(2)) == pytest.approx(-math.log(2), rel=1e-15)
    # 128-bit oracle values
    assert nm.log1mexp(1e-10) == pytest.approx(-23.025850929990456840, rel=1e-14)
    assert nm.log1mexp(50.0) == pytest.approx(-1.9287498479639177912e-22, rel=1e-14)


def test_log1mexp_domain():
    for a in (0.0, -1.0):
        with pytest.raises(DomainError):
            nm.log1mexp(a)


def test_log1mexp_continuous_at_cutoff():
    a = math.log(2)
    left = math.log(-math.expm1(-a))
    right = math.log1p(-math.exp(-a))
    assert abs(left - right) < 1e-14
    below, above = nm.log1mexp(np.nextafter(a, 0)), nm.log1mexp(np.nextafter(a, 1))
    assert abs(below - above) < 1e-14


def test_log1mexp_increasing_and_negative():
    a = np.logspace(-12, np.log10(700), 500)
    v = nm.log1mexp(a)
    assert np.all(np.diff(v) > 0)
    assert np.all(v < 0)


def test_log_expm1():
    y = np.array([1e-8, 1.0, 29.0, 31.0, 800.0])
    mp.mp.prec = 128
    expected = [float(mp.log(mp.expm1(mp.mpf(float(x))))) for x in y]
    np.testing.assert_allclose(nm.log_expm1(y), expected, rtol=1e-14)


# Stirling / Eulerian tables -------------------------------------------------

def test_stirling_examples():
    assert nm.stirling1(0, 0) == (1, 0.0)
    s = nm.stirling1(3, 1)
    assert s.sign == 1 and math.exp(s.logabs) == pytest.approx(2)
    assert math.exp(nm.stirling2(3, 2)) == pytest.approx(3)
    for n in range(1, 10):
        assert nm.stirling1(n, 0).sign == 0
        assert nm.stirling2(n, 0) == -math.inf


def test_stirling1_signs():
    for n in range(1, 15):
        for k in range(1, n + 1):
            assert nm.stirling1(n, k).sign == (-1) ** (n - k)


def _bell(n):
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


def test_stirling2_row_sums_are_bell_numbers():
    for n in range(0, 21):
        total = math.fsum(math.exp(nm.stirling2(n, k)) for k in range(n + 1))
        assert total == pytest.approx(_bell(n), rel=1e-13)


def test_stirling_large_magnitudes():
    # |s(100, 1)| = 99!
    s = nm.stirling1(100, 1)
    assert s.logabs == pytest.approx(math.lgamma(100), rel=1e-14)
    assert s.sign == (-1) ** 99


def test_table_capacity():
    with pytest.raises(CapacityError):
        nm.stirling1(nm.TABLE_BOUND + 1, 1)
    with pytest.raises(CapacityError):
        nm.stirling2(5, nm.TABLE_BOUND + 1)


def test_table_init_is_race_free():
    nm._tables.clear()
    results = []

    def work():
        results.append(nm.stirling2_table())

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r is results[0] for r in results)


# polylogarithm ----------------------------------------------------------------

def test_polylog_examples():
    lz = math.log(0.5)
    assert nm.polylog_neg(0, lz) == pytest.approx(0.0, abs=1e-15)
    assert nm.polylog_neg(1, lz) == pytest.approx(math.log(2), rel=1e-15)
    assert nm.polylog_neg(2, lz) == pytest.approx(math.log(6), rel=1e-15)


def test_polylog_domain():
    with pytest.raises(DomainError):
        nm.polylog_neg(2, 0.0)
    with pytest.raises(CapacityError):
        nm.polylog_neg(nm.TABLE_BOUND + 1, -1.0)


def test_polylog_against_mpmath():
    mp.mp.prec = 128
    for n in (3, 7, 20):
        for z in (1e-5, 0.3, 0.99, 1 - 1e-9):
            expected = float(mp.log(mp.polylog(-n, mp.mpf(z))))
            assert nm.polylog_neg(n, math.log(z)) == pytest.approx(expected, rel=1e-12)


def test_polylog_derivative_recurrence():
    # Li_{-n-1}(z) = z d/dz Li_{-n}(z)
    for n in range(0, 6):
        for z in np.linspace(0.05, 0.9, 12):
            h = 1e-5 * z
            f = lambda x: math.exp(nm.polylog_neg(n, math.log(x)))  # noqa: E731
            deriv = z * (f(z + h) - f(z - h)) / (2 * h)
            assert deriv == pytest.approx(math.exp(nm.polylog_neg(n + 1, math.log(z))), rel=1e-6)


# Debye, incomplete gamma, normal quantile --------------------------------------

def test_debye1():
    assert nm.debye1(1e-12) == pytest.approx(1.0, abs=1e-12)
    assert nm.debye1(1.0) == pytest.approx(0.77750463411224827642, rel=1e-12)
    d10 = nm.debye1(10.0)
    assert 0 < d10 < 0.2
    assert d10 == pytest.approx(0.16444346567994602563, rel=1e-12)
    assert d10 < nm.debye1(1.0)
    # continuity across the small-argument series
    c = 1e-4
    assert nm.debye1(np.nextafter(c, 0)) == pytest.approx(nm.debye1(c), abs=1e-13)
    assert 0 < nm.debye1(5000.0) < 1


def test_inc_gamma_examples():
    assert nm.inc_gamma_reg(1.0, 1.0) == pytest.approx(1 - math.exp(-1), rel=1e-14)
    assert nm.inc_gamma_reg(3.0, 0.0) == 0.0
    assert nm.inc_gamma_reg(3.0, np.inf) == 1.0
    assert nm.inc_gamma_reg(2.5, 2.3) == pytest.approx(0.53338372588466935820, abs=1e-12)


@given(st.floats(0.05, 200), st.floats(0, 500))
@settings(max_examples=200, deadline=None)
def test_inc_gamma_complement(a, x):
    assert abs(nm.inc_gamma_reg(a, x) + nm.inc_gamma_reg_upper(a, x) - 1) < 1e-12


def test_inc_gamma_monotone():
    x = np.linspace(0, 60, 2000)
    for a in (0.5, 2.5, 20.0):
        assert np.all(np.diff(nm.inc_gamma_reg(a, x)) >= 0)


def test_derived_cdfs():
    assert nm.chi2_cdf(3.841458820694124, 1) == pytest.approx(0.95, rel=1e-12)
    assert nm.gamma_cdf(1.0, 1) == pytest.approx(1 - math.exp(-1), rel=1e-14)
    assert nm.poisson_cdf(0, 2.0) == pytest.approx(math.exp(-2), rel=1e-14)
    assert nm.poisson_cdf(2, 2.0) == pytest.approx(math.exp(-2) * 5, rel=1e-14)


def test_norm_quantile():
    assert nm.norm_quantile(0.5) == 0.0
    assert nm.norm_quantile(0.975) == pytest.approx(1.959963984540054, rel=1e-13)
    p = np.random.default_rng(1).uniform(1e-10, 1 - 1e-10, 1000)
    np.testing.assert_allclose(nm.norm_quantile(1 - p), -nm.norm_quantile(p), rtol=1e-9, atol=1e-9)
    from scipy.special import ndtr
    assert np.max(np.abs(ndtr(nm.norm_quantile(p)) - p)) < 1e-12
    with pytest.raises(DomainError):
        nm.norm_quantile(1.0)


# solvers ---------------------------------------------------------------------

def test_brent_root():
    assert nm.brent_root(lambda x: x * x - 2, 0, 2) == pytest.approx(math.sqrt(2), abs=1e-9)
    clayton_tau = lambda th: th / (th + 2) - 0.5  # noqa: E731
    assert nm.brent_root(clayton_tau, 1e-6, 100) == pytest.approx(2.0, abs=1e-9)


def test_brent_root_errors():
    with pytest.raises(BracketError):
        nm.brent_root(lambda x: x * x + 1, -1, 1)
    with pytest.raises(EvaluationError):
        nm.brent_root(lambda x: math.nan, 0, 1)


def test_brent_min():
    res = nm.brent_min(lambda x: (x - 1) ** 2, 0, 3)
    assert res.x == pytest.approx(1.0, abs=1e-8)
    assert res.fun == pytest.approx(0.0, abs=1e-15)
    assert res.converged


def test_brent_min_nan_treated_as_inf():
    res = nm.brent_min(lambda x: math.nan if x > 2 else (x - 1) ** 2, 0, 3)
    assert res.x == pytest.approx(1.0, abs=1e-6)


def test_brent_deterministic():
    f = lambda x: math.cos(3 * x) + x * x / 10  # noqa: E731
    assert nm.brent_min(f, -2, 2) == nm.brent_min(f, -2, 2)


def test_log_neg_log1mexp():
    mp.mp.prec = 128
    for x in (1e-8, 0.5, 30.0, 699.0, 701.0, 5000.0):
        xm = mp.mpf(x)
        expected = float(mp.log(-mp.log1p(-mp.exp(-xm))))
        assert nm.log_neg_log1mexp(x) == pytest.approx(expected, rel=1e-14)


def test_log1mexp_exp():
    mp.mp.prec = 128
    for ell in (-800.0, -31.0, -29.0, -1.0, 0.0, 3.0):
        a = mp.exp(mp.mpf(ell))
        expected = float(mp.log(-mp.expm1(-a)))
        assert nm.log1mexp_exp(ell) == pytest.approx(expected, rel=1e-14, abs=1e-300)


def test_polylog_with_supplied_complement():
    # z = exp(-1e-300): log(1 - z) is not recoverable from log z in double
    logz, log1mz = -1e-300, math.log(1e-300)
    got = nm.polylog_neg(2, logz, log1mz)
    # Li_{-2}(z) = z (1 + z) / (1 - z)^3
    assert got == pytest.approx(math.log(2) - 3 * log1mz, rel=1e-14)
    assert nm.polylog_neg(3, math.log(0.3), math.log(0.7)) == pytest.approx(nm.polylog_neg(3, math.log(0.3)), rel=1e-14)
