import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cf_certify.distributions import Kind, LimitDistribution
from cf_certify.errors import DomainError

NORMAL = LimitDistribution.normal()
CHI2 = LimitDistribution.chi2(2)
CHI4 = LimitDistribution.chi2(4)

DISTS = [NORMAL, LimitDistribution.chi2(1), CHI2, CHI4, LimitDistribution.chi2(6), LimitDistribution.chi2(25)]
P_GRID = [1e-6, 1e-4, 0.001, 0.01, 0.05, 0.2, 0.5, 0.8, 0.95, 0.99, 0.999, 1 - 1e-4, 1 - 1e-6]


def _bisect_quantile(f, p, lo, hi):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _normal_cdf_erfc(x):
    return 0.5 * math.erfc(-x / math.sqrt(2))


def test_construction_checks():
    with pytest.raises(DomainError):
        LimitDistribution(Kind.CHI_SQUARED, 0)
    with pytest.raises(DomainError):
        LimitDistribution(Kind.CHI_SQUARED, 2.5)
    with pytest.raises(DomainError):
        LimitDistribution(Kind.STD_NORMAL, 3)
    assert LimitDistribution("ChiSquared", 3).dof == 3


def test_density_examples():
    assert NORMAL.density(0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)
    assert CHI2.density(0.6) == pytest.approx(math.exp(-0.3) / 2, rel=1e-14)
    assert CHI4.density(-1.0) == 0.0


def test_cdf_examples():
    assert NORMAL.cdf(0.0) == 0.5
    assert CHI2.cdf(2 * math.log(2)) == pytest.approx(0.5, abs=1e-15)
    assert CHI4.cdf(3.0) == pytest.approx(1 - math.exp(-1.5) * 2.5, abs=1e-15)


def test_normal_cdf_matches_erfc():
    xs = np.linspace(-30, 30, 601)
    expected = np.array([_normal_cdf_erfc(x) for x in xs])
    assert np.max(np.abs(NORMAL.cdf(xs) - expected)) <= 1e-15


def test_quantile_examples():
    assert NORMAL.quantile(0.5) == pytest.approx(0.0, abs=1e-14)
    assert CHI2.quantile(0.5) == pytest.approx(2 * math.log(2), abs=1e-12)
    # bisection oracle on the erfc form of Phi
    oracle = _bisect_quantile(_normal_cdf_erfc, 0.95, -10, 10)
    assert oracle == pytest.approx(1.6448536269514722, abs=1e-12)
    assert NORMAL.quantile(0.95) == pytest.approx(oracle, abs=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, math.nan])
def test_quantile_domain(p):
    with pytest.raises(DomainError):
        NORMAL.quantile(p)


def test_log_density_slope_examples():
    assert NORMAL.log_density_slope(0.0) == 0.0
    assert CHI2.log_density_slope(5.0) == -0.5
    assert CHI4.log_density_slope(2.0) == 0.0
    with pytest.raises(DomainError):
        CHI4.log_density_slope(0.0)


def test_density_min_examples():
    assert NORMAL.density_min_on_interval(-1, 1) == pytest.approx(0.24197072451914337, rel=1e-14)
    assert NORMAL.density_min_on_interval(2, 2) == NORMAL.density(2.0)
    assert CHI2.density_min_on_interval(1, 3) == pytest.approx(math.exp(-1.5) / 2, rel=1e-14)
    with pytest.raises(DomainError):
        CHI2.density_min_on_interval(-1, 3)
    with pytest.raises(DomainError):
        NORMAL.density_min_on_interval(2, 1)


def test_vectorized_shapes():
    xs = np.array([0.5, 1.0, 2.0])
    for d in DISTS:
        assert d.cdf(xs).shape == (3,)
        assert isinstance(d.cdf(1.0), float)


# -- invariants ---------------------------------------------------------------


@pytest.mark.parametrize("dist", DISTS, ids=str)
def test_cdf_nondecreasing(dist):
    xs = np.linspace(-10 if dist.is_normal else 0, 80, 5001)
    assert np.all(np.diff(dist.cdf(xs)) >= 0)


@pytest.mark.parametrize("dist", DISTS, ids=str)
@pytest.mark.parametrize("p", P_GRID)
def test_quantile_round_trip(dist, p):
    x = dist.quantile(p)
    assert abs(dist.cdf(x) - p) <= 1e-10


def test_chi2_even_dof_poisson_sums():
    xs = np.linspace(0, 50, 2001)
    closed2 = 1 - np.exp(-xs / 2)
    closed4 = 1 - np.exp(-xs / 2) * (1 + xs / 2)
    assert np.max(np.abs(CHI2.cdf(xs) - closed2)) <= 1e-12
    assert np.max(np.abs(CHI4.cdf(xs) - closed4)) <= 1e-12


@pytest.mark.parametrize("dist", DISTS, ids=str)
def test_density_min_is_below_interior(dist):
    rng = np.random.default_rng(7)
    for _ in range(20):
        a, b = np.sort(rng.uniform(0.05 if not dist.is_normal else -4, 6, 2))
        m = rng.uniform(a, b, 100)
        assert np.all(dist.density_min_on_interval(a, b) <= dist.density(m) * (1 + 1e-14))


@pytest.mark.parametrize("dist", DISTS, ids=str)
def test_log_density_slope_matches_finite_difference(dist):
    h = 1e-6
    for x in [0.3, 1.0, 2.5, 7.0]:
        fd = (math.log(dist.density(x + h)) - math.log(dist.density(x - h))) / (2 * h)
        assert dist.log_density_slope(x) == pytest.approx(fd, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(dof=st.integers(1, 60), p=st.floats(1e-6, 1 - 1e-6))
def test_chi2_quantile_round_trip_property(dof, p):
    d = LimitDistribution.chi2(dof)
    x = d.quantile(p)
    assert x > 0
    assert abs(d.cdf(x) - p) <= 1e-10


def test_serialization_round_trip():
    for d in DISTS:
        assert LimitDistribution.from_dict(d.to_dict()) == d
