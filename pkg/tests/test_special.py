import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threearm.errors import DomainError, UnderdispersedInput
from threearm.special import (
    NBParams,
    betainc,
    nb_expected_counts,
    nb_logpmf,
    nb_moment_match,
    nb_pmf,
    round_half_up,
    std_normal_cdf,
    std_normal_quantile,
    student_t_cdf,
    student_t_quantile,
)

# 50-digit mpmath evaluations, frozen
NORMAL_QUANTILES = [
    (0.025, -1.9599639845400542355),
    (0.975, 1.9599639845400542355),
    (1e-6, -4.7534243088228989482),
    (1e-3, -3.0902323061678135415),
    (0.3, -0.52440051270804078404),
]
T_QUANTILES = [
    (0.025, 2.0, -4.3026527297494638523),
    (0.025, 2.7, -3.3921483831737523264),
    (0.05, 5.3, -1.9901242563283064824),
    (0.001, 1.0, -318.30883898555044592),
    (0.025, 30.0, -2.04227245630123831),
    (0.9, 3.5, 1.576576605136405068),
    (0.025, 1e6, -1.9599663568141070353),
    (0.0001, 0.6, -673128.64961906130622),
]
T_CDFS = [
    (-1.234426799696735, 2.0, 0.17120202538928545314),
    (-3.0, 4.5, 0.017190433944379811929),
    (0.7, 11.2, 0.75089513315733608184),
    (-10.0, 1.5, 0.011829677556810778562),
]
BETAINC = [
    (0.5, 1.5, 0.3, 0.66074594914354514634),
    (3.0, 4.5, 0.7, 0.95468615969908101195),
    (20.0, 0.5, 0.95, 0.15459078143343811257),
    (0.1, 50.0, 1e-3, 0.77490718360952187889),
]
# n * P(X = 0..3) and n * P(X >= 4) for the moment-matched negative binomial
NB_COUNTS = {
    (54, 5.5, 12.5): [27.589138647894732, 5.3412572422324201, 3.0936561947010177,
                      2.1894836108630669, 15.786464304308763],
    (51, 0.6, 1.5): [38.223195384901201, 6.1157112615841921, 2.7316843635076058,
                     1.4811799659907907, 2.4482290240162108],
    (52, 0.2, 0.7): [45.954205608361798, 3.7513637231315753, 1.2632143149320611,
                     0.53278426888291012, 0.49843208469165547],
    (52, 6.9, 16.0): [26.06445862529398, 4.84737841855565, 2.8091125987688416,
                      1.9964085254349238, 16.282641831946604],
}

probabilities = st.floats(1e-10, 1 - 1e-10).filter(lambda p: p != 0.5)
dofs = st.floats(0.5, 1e4)


@pytest.mark.parametrize("p,expected", NORMAL_QUANTILES)
def test_normal_quantile_oracle(p, expected):
    assert std_normal_quantile(p) == pytest.approx(expected, rel=1e-14, abs=1e-15)


def test_normal_quantile_median_and_domain():
    assert std_normal_quantile(0.5) == 0.0
    for p in (0.0, 1.0, -0.1, float("nan")):
        with pytest.raises(DomainError):
            std_normal_quantile(p)


@pytest.mark.parametrize("p,nu,expected", T_QUANTILES)
def test_t_quantile_oracle(p, nu, expected):
    # absolute 1e-9 only matters for nu = 1e6, where x = nu / (nu + t^2) sits near 1
    assert student_t_quantile(p, nu) == pytest.approx(expected, rel=1e-10, abs=1e-9)


@pytest.mark.parametrize("t,nu,expected", T_CDFS)
def test_t_cdf_oracle(t, nu, expected):
    assert student_t_cdf(t, nu) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("a,b,x,expected", BETAINC)
def test_betainc_oracle(a, b, x, expected):
    assert betainc(a, b, x) == pytest.approx(expected, rel=1e-12)


def test_t_quantile_basics():
    assert student_t_quantile(0.5, 3.3) == 0.0
    assert abs(student_t_quantile(0.025, 1e6) - std_normal_quantile(0.025)) < 1e-4
    # closed form at two degrees of freedom
    q = 0.025
    assert student_t_quantile(q, 2) == pytest.approx(-math.sqrt(2 * (1 / (4 * q * (1 - q)) - 1)), rel=1e-14)
    with pytest.raises(DomainError):
        student_t_quantile(0.5, 0)
    with pytest.raises(DomainError):
        student_t_quantile(1.5, 3)
    with pytest.raises(DomainError):
        student_t_cdf(0.0, -1)


def test_round_trip_grids():
    grid = np.concatenate([np.logspace(-6, -1, 20), np.linspace(0.12, 0.88, 10),
                           1 - np.logspace(-1, -6, 20)])
    assert grid.size == 50
    for p in grid:
        assert abs(std_normal_cdf(std_normal_quantile(p)) - p) < 1e-8
        for nu in (1.0, 2.0, 2.37, 7.9, 58.1):
            assert abs(student_t_cdf(student_t_quantile(p, nu), nu) - p) < 1e-8


@settings(max_examples=60, deadline=None)
@given(st.floats(-40, 40), st.floats(0.3, 500))
def test_t_cdf_matches_mpmath(t, nu):
    mpmath.mp.dps = 30
    x = mpmath.mpf(nu) / (nu + mpmath.mpf(t) ** 2)
    tail = mpmath.betainc(mpmath.mpf(nu) / 2, 0.5, 0, x, regularized=True) / 2
    expected = float(tail if t < 0 else 1 - tail)
    assert student_t_cdf(t, nu) == pytest.approx(expected, rel=1e-10, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(probabilities)
def test_normal_quantile_matches_mpmath(p):
    mpmath.mp.dps = 30
    expected = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))
    assert std_normal_quantile(p) == pytest.approx(expected, rel=1e-12, abs=1e-14)


@given(probabilities, probabilities, dofs)
def test_quantiles_increasing(p1, p2, nu):
    if p1 == p2:
        return
    lo, hi = sorted((p1, p2))
    assert std_normal_quantile(lo) <= std_normal_quantile(hi)
    assert student_t_quantile(lo, nu) <= student_t_quantile(hi, nu)


@given(probabilities, dofs)
def test_t_quantile_round_trip(p, nu):
    q = student_t_quantile(p, nu)
    assert student_t_cdf(q, nu) == pytest.approx(p, rel=1e-8, abs=1e-12)


def test_moment_match_examples():
    assert nb_moment_match(5.5, 5.5) == NBParams(5.5, 0.0)
    assert nb_moment_match(5.5, 12.5**2).phi == pytest.approx(150.75 / 30.25, rel=1e-15)
    assert nb_moment_match(1.0, 3.0).phi == 2.0
    with pytest.raises(UnderdispersedInput):
        nb_moment_match(5.0, 1.0)
    with pytest.raises(DomainError):
        nb_moment_match(0.0, 1.0)


def test_nb_pmf_at_zero():
    params = nb_moment_match(5.5, 12.5**2)
    assert nb_pmf(0, params) == pytest.approx((1 + 5.5 * params.phi) ** (-1 / params.phi), rel=1e-13)
    assert nb_pmf(0, params) == pytest.approx(0.5109, abs=5e-5)
    assert 54 * nb_pmf(0, params) == pytest.approx(27.6, abs=0.05)


def test_nb_pmf_domain():
    with pytest.raises(DomainError):
        nb_logpmf(-1, NBParams(1.0, 1.0))
    with pytest.raises(DomainError):
        nb_logpmf(1.5, NBParams(1.0, 1.0))
    with pytest.raises(DomainError):
        NBParams(1.0, -0.1)


@pytest.mark.parametrize("lam", [0.2, 1.0, 5.5, 10.0])
@pytest.mark.parametrize("phi", [0.0, 0.3, 2.0, 10.0])
def test_nb_pmf_normalizes_and_reproduces_moments(lam, phi):
    params = NBParams(lam, phi)
    p = np.array([nb_pmf(k, params) for k in range(5001)])
    x = np.arange(5001, dtype=float)
    assert np.all(p >= 0)
    assert math.fsum(p) == pytest.approx(1.0, abs=1e-10)
    mean = math.fsum(x * p)
    var = math.fsum(x * x * p) - mean * mean
    assert mean == pytest.approx(params.mean, rel=1e-6)
    assert var == pytest.approx(params.variance, rel=1e-6)


def test_nb_pmf_matches_mpmath():
    mpmath.mp.dps = 40
    for lam, phi, k in ((5.5, 4.98, 0), (5.5, 4.98, 17), (0.6, 3.6, 3), (2.0, 0.01, 40)):
        r = mpmath.mpf(1) / phi
        q = 1 / (1 + lam * mpmath.mpf(phi))
        expected = mpmath.gamma(k + r) / (mpmath.gamma(r) * mpmath.factorial(k)) * q**r * (1 - q) ** k
        assert nb_pmf(k, NBParams(lam, phi)) == pytest.approx(float(expected), rel=1e-11)


@pytest.mark.parametrize("column", sorted(NB_COUNTS))
def test_expected_counts_oracle(column):
    n, mean, sd = column
    got = nb_expected_counts(n, mean, sd * sd)
    assert got == pytest.approx(NB_COUNTS[column], rel=1e-11, abs=1e-12)


def test_expected_counts_poisson_limit():
    got = nb_expected_counts(100, 1.0, 1.0)
    assert got == pytest.approx([36.787944117144232, 36.787944117144232, 18.393972058572116,
                                 6.1313240195240387, 1.8988156876153809], rel=1e-13)
    assert math.fsum(got) == pytest.approx(100.0, rel=1e-14)


def test_round_half_up():
    assert [round_half_up(v) for v in (0.5, 1.5, 2.5, 2.4999, -0.5)] == [1, 2, 3, 2, 0]
