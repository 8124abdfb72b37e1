"""Normal and Student-t quantiles, negative binomial probabilities.

Only the standard library is used here.  The normal quantile starts from
Acklam's rational approximation and is polished with two Halley steps
against ``math.erfc``; the t distribution goes through the regularized
incomplete beta function (modified Lentz continued fraction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .errors import DomainError, UnderdispersedInput

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)

_EPS = 1e-16
_TINY = 1e-300
_MAX_CF_ITER = 20_000

# Acklam's coefficients
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _check_probability(p):
    if not (0.0 < p < 1.0):
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / SQRT2)


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if p > 1.0 - _P_LOW:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
        (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)


def std_normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF on (0, 1)."""
    _check_probability(p)
    if p == 0.5:
        return 0.0
    # work in the lower tail where erfc keeps relative accuracy
    lower = p < 0.5
    pl = p if lower else 1.0 - p
    x = _acklam(pl)
    for _ in range(2):
        e = std_normal_cdf(x) - pl
        u = e * SQRT2PI * math.exp(0.5 * x * x)
        x = x - u / (1.0 + 0.5 * x * u)
    return x if lower else -x


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_CF_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, y: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``y`` may carry an accurately computed ``1 - x``.
    """
    if a <= 0 or b <= 0:
        raise DomainError("betainc requires a > 0 and b > 0")
    if y is None:
        y = 1.0 - x
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"betainc requires 0 <= x <= 1, got {x}")
    if x == 0.0:
        return 0.0
    if y == 0.0:
        return 1.0
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(y)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def _t_lower_tail(t: float, nu: float) -> float:
    """P(T <= t) for t <= 0."""
    t2 = t * t
    denom = nu + t2
    return 0.5 * betainc(0.5 * nu, 0.5, nu / denom, t2 / denom)


def student_t_cdf(t: float, nu: float) -> float:
    if not nu > 0:
        raise DomainError(f"degrees of freedom must be positive, got {nu!r}")
    if math.isnan(t):
        raise DomainError("t is NaN")
    if math.isinf(t):
        return 0.0 if t < 0 else 1.0
    if t <= 0:
        return _t_lower_tail(t, nu)
    return 1.0 - _t_lower_tail(-t, nu)


def student_t_pdf(t: float, nu: float) -> float:
    log_c = math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)
    return math.exp(log_c - 0.5 * (nu + 1.0) * math.log1p(t * t / nu))


def _t_start(p: float, nu: float) -> float:
    # Cornish-Fisher expansion around the normal quantile, p < 0.5
    z = std_normal_quantile(p)
    z2 = z * z
    g1 = (z2 + 1.0) * z / 4.0
    g2 = ((5.0 * z2 + 16.0) * z2 + 3.0) * z / 96.0
    return z + g1 / nu + g2 / (nu * nu)


def student_t_quantile(p: float, nu: float) -> float:
    """Quantile of the t distribution with real-valued ``nu`` degrees of freedom."""
    _check_probability(p)
    if not (nu > 0 and math.isfinite(nu)):
        raise DomainError(f"degrees of freedom must be positive and finite, got {nu!r}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -student_t_quantile(1.0 - p, nu)
    if nu == 1.0:
        return -1.0 / math.tan(math.pi * p)
    if nu == 2.0:
        return (2.0 * p - 1.0) / math.sqrt(2.0 * p * (1.0 - p))

    # safeguarded Newton on [lo, hi] with lo < root <= hi = 0
    x = _t_start(p, nu)
    if not (math.isfinite(x) and x < 0):
        x = -1.0
    lo = x
    while student_t_cdf(lo, nu) > p:
        lo *= 2.0
    hi = 0.0
    for _ in range(200):
        f = student_t_cdf(x, nu) - p
        if f > 0:
            hi = x
        else:
            lo = x
        step = f / student_t_pdf(x, nu)
        nxt = x - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if abs(nxt - x) <= 1e-15 * max(1.0, abs(x)):
            return nxt
        x = nxt
    return x


# -- negative binomial ------------------------------------------------------


@dataclass(frozen=True)
class NBParams:
    """Negative binomial with mean ``lam`` and variance ``lam * (1 + lam * phi)``.

    ``phi == 0`` is the Poisson limit.
    """

    lam: float
    phi: float

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be positive, got {self.lam!r}")
        if not (self.phi >= 0 and math.isfinite(self.phi)):
            raise DomainError(f"phi must be non-negative, got {self.phi!r}")

    @property
    def mean(self) -> float:
        return self.lam

    @property
    def variance(self) -> float:
        return self.lam * (1.0 + self.lam * self.phi)

    @property
    def kappa(self) -> float:
        """Variance-to-mean ratio."""
        return 1.0 + self.lam * self.phi


def nb_moment_match(mean: float, variance: float) -> NBParams:
    if not mean > 0:
        raise DomainError(f"mean must be positive, got {mean!r}")
    if variance < mean:
        raise UnderdispersedInput(
            f"variance {variance} is below the mean {mean}; no negative binomial fits"
        )
    return NBParams(mean, (variance - mean) / (mean * mean))


def nb_logpmf(x: int, params: NBParams) -> float:
    if x < 0 or int(x) != x:
        raise DomainError(f"x must be a non-negative integer, got {x!r}")
    lam, phi = params.lam, params.phi
    if phi == 0.0:
        return x * math.log(lam) - lam - math.lgamma(x + 1.0)
    r = 1.0 / phi
    lp = math.log1p(lam * phi)
    return (
        math.lgamma(x + r) - math.lgamma(r) - math.lgamma(x + 1.0)
        - r * lp + x * (math.log(lam * phi) - lp)
    )


def nb_pmf(x: int, params: NBParams) -> float:
    return math.exp(nb_logpmf(x, params))


def round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


def nb_expected_counts(n: int, mean: float, variance: float,
                       bins: Sequence[int] = (0, 1, 2, 3)) -> list[float]:
    """Expected counts ``n * P(X = k)`` for each k in ``bins`` plus the tail
    ``n * P(X > max(bins))``, under the moment-matched negative binomial."""
    params = nb_moment_match(mean, variance)
    bins = sorted(int(b) for b in bins)
    point = [n * nb_pmf(k, params) for k in bins]
    below = math.fsum(nb_pmf(k, params) for k in range(bins[-1] + 1))
    tail = n * max(0.0, 1.0 - below)
    return point + [tail]
