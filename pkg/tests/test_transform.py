import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from archcopula.errors import ArgumentError, DomainError, RowError
from archcopula.families import FAMILIES, FamilySpec, psi, psi_inv
from archcopula.sampling import RngStream, sample_copula
from archcopula.transform import (
    CLAMP_EPS,
    cvm_distance,
    hh_transform,
    kendall_K,
    ks_distance,
    reference_cdf,
)

KS_CRIT_01 = 1.9495  # asymptotic 0.1% point of sqrt(n) D_n
CVM_CRIT_1 = 0.7435  # asymptotic 1% point of the CvM statistic

UNIFORMITY_GRID = [("C", 2.0), ("G", 4 / 3), ("F", 7.93), ("J", 2.0)]
# 1% family-wise level over both reductions of every grid cell (Bonferroni)
CVM_LEVEL = 0.01 / (2 * 2 * len(UNIFORMITY_GRID))


def _rng(*tags):
    return RngStream(777, tags)


# Kendall distribution --------------------------------------------------------

def test_kendall_d1():
    t = np.array([0.1, 0.5, 0.9])
    np.testing.assert_array_equal(kendall_K(FamilySpec("C", 2.0), 1, t), t)


def test_kendall_independence():
    assert kendall_K(FamilySpec("G", 1.0), 2, 0.5) == pytest.approx(0.5 - 0.5 * math.log(0.5), rel=1e-14)


def test_kendall_monte_carlo():
    spec = FamilySpec("C", 2.0)
    u = sample_copula(spec, 10**6, 5, _rng("K"))
    w = psi(spec, psi_inv(spec, u).sum(axis=1))
    for t in np.quantile(w, [0.1, 0.3, 0.5, 0.7, 0.9]):
        p = np.mean(w <= t)
        se = math.sqrt(p * (1 - p) / len(w))
        assert abs(kendall_K(spec, 5, t) - p) < 3 * se


@pytest.mark.parametrize("family", FAMILIES)
def test_kendall_monotone_and_dominates(family):
    spec = FamilySpec.from_tau(family, 0.25)
    t = np.linspace(1e-4, 1 - 1e-4, 400)
    for d in (2, 5, 20):
        k = kendall_K(spec, d, t)
        assert np.all(np.diff(k) >= -1e-15)
        assert np.all(k >= t - 1e-14)
        assert np.all((k > 0) & (k <= 1))


def test_kendall_domain():
    with pytest.raises(DomainError):
        kendall_K(FamilySpec("C", 2.0), 3, 1.0)
    with pytest.raises(DomainError):
        kendall_K(FamilySpec("C", 2.0), 0, 0.5)


# transform -------------------------------------------------------------------

def test_hh_example():
    u = np.full((1, 2), math.exp(-1))
    out = hh_transform(FamilySpec("G", 1.0), u, include_k=False)
    assert out.uprime[0, 0] == pytest.approx(0.5, rel=1e-15)
    assert out.y_l[0] == pytest.approx(math.log(2), rel=1e-15)


@pytest.mark.parametrize("family,theta", UNIFORMITY_GRID)
@pytest.mark.parametrize("d", [2, 5])
def test_uniformity_under_true_parameter(family, theta, d):
    spec = FamilySpec(family, theta)
    n = 10**4
    u = sample_copula(spec, n, d, _rng("hh", family, d))
    out = hh_transform(spec, u, include_k=True)
    assert out.uprime.shape == (n, d)
    for j in range(d):
        assert stats.kstest(out.uprime[:, j], "uniform").statistic < KS_CRIT_01 / math.sqrt(n)
    for y, kind in ((out.y_n, "chi"), (out.y_l, "gamma")):
        ref = reference_cdf(kind, d)
        w = cvm_distance(np.sort(y), ref)
        assert w == pytest.approx(stats.cramervonmises(y, ref).statistic, rel=1e-10)
        assert stats.cramervonmises(y, ref).pvalue > CVM_LEVEL


def test_wrong_parameter_detected():
    u = sample_copula(FamilySpec("C", 2.0), 5000, 5, _rng("wrong"))
    out = hh_transform(FamilySpec("C", 6.0), u)
    assert cvm_distance(np.sort(out.y_n), reference_cdf("chi", 5)) > CVM_CRIT_1


def test_include_k_default_and_columns():
    spec = FamilySpec("G", 2.0)
    u5 = sample_copula(spec, 50, 5, _rng("k5"))
    u6 = sample_copula(spec, 50, 6, _rng("k6"))
    assert hh_transform(spec, u5).include_k and hh_transform(spec, u5).uprime.shape[1] == 5
    assert not hh_transform(spec, u6).include_k and hh_transform(spec, u6).uprime.shape[1] == 5


def test_omitting_k_leaves_other_columns_unchanged():
    spec = FamilySpec("J", 3.0)
    u = sample_copula(spec, 200, 4, _rng("bitwise"))
    on = hh_transform(spec, u, include_k=True)
    off = hh_transform(spec, u, include_k=False)
    assert on.uprime[:, :3].tobytes() == off.uprime.tobytes()


@given(st.sampled_from([("A", 0.9), ("C", 50.0), ("F", 300.0), ("G", 50.0), ("J", 50.0), ("C", 0.01)]),
       st.integers(2, 12), st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_output_in_unit_cube(ft, d, seed):
    spec = FamilySpec(*ft)
    u = sample_copula(spec, 30, d, RngStream(seed))
    out = hh_transform(spec, u, include_k=True)
    assert np.all((out.uprime >= 0) & (out.uprime <= 1))
    assert np.all(np.isfinite(out.y_n)) and np.all(out.y_n >= 0)
    assert np.all(np.isfinite(out.y_l)) and np.all(out.y_l >= 0)
    # the reductions never exceed what the clamp allows
    assert np.all(out.y_l <= -d * math.log(CLAMP_EPS) + 1e-9)


def test_row_error():
    u = np.array([[0.2, 0.3], [0.4, 1.0], [0.0, 0.5]])
    with pytest.raises(RowError) as info:
        hh_transform(FamilySpec("C", 1.0), u)
    assert info.value.row == 1


def test_bad_shape():
    with pytest.raises(ArgumentError):
        hh_transform(FamilySpec("C", 1.0), np.full((3, 1), 0.5))


# distances ------------------------------------------------------------------------

def test_cvm_at_plug_in_minimiser():
    n = 50
    ref = reference_cdf("chi", 3)
    y = stats.chi2.ppf((2 * np.arange(1, n + 1) - 1) / (2 * n), 3)
    assert cvm_distance(y, ref) == pytest.approx(1 / (12 * n), rel=1e-9)


def test_ks_single_point():
    y = np.array([stats.gamma.ppf(0.5, 2)])
    assert ks_distance(y, reference_cdf("gamma", 2)) == pytest.approx(0.5, rel=1e-12)


def test_cvm_single_point():
    y = np.array([1.0])
    f = stats.chi2.cdf(1.0, 2)
    assert cvm_distance(y, reference_cdf("chi", 2)) == pytest.approx(1 / 12 + (0.5 - f) ** 2, rel=1e-12)


@given(st.lists(st.floats(0, 50), min_size=1, max_size=60), st.integers(1, 10))
@settings(max_examples=100, deadline=None)
def test_distance_bounds(y, dof):
    y = np.sort(np.array(y))
    n = len(y)
    ref = reference_cdf("gamma", dof)
    assert cvm_distance(y, ref) >= 1 / (12 * n) - 1e-15
    assert 1 / (2 * n) - 1e-15 <= ks_distance(y, ref) <= 1


def test_ks_matches_scipy():
    y = np.sort(stats.chi2.rvs(4, size=300, random_state=1))
    assert ks_distance(y, reference_cdf("chi", 4)) == pytest.approx(
        stats.kstest(y, stats.chi2(4).cdf).statistic, rel=1e-12)


def test_distance_errors():
    with pytest.raises(ArgumentError):
        cvm_distance(np.array([2.0, 1.0]), reference_cdf("chi", 2))
    with pytest.raises(ArgumentError):
        ks_distance(np.array([]), reference_cdf("chi", 2))
    with pytest.raises(ArgumentError):
        reference_cdf("normal", 2)
