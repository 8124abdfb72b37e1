"""Wald-type statistic for the retention-of-effect hypothesis.

The statistic is

    T_n = sqrt(n) * (mean_E - delta*mean_R + (delta - 1)*mean_P) / sigma_hat

with ``sigma_hat**2 = s_E**2/w_E + delta**2 s_R**2/w_R + (1-delta)**2 s_P**2/w_P``
and ``w_k = n_k / n``.  With these weights ``sigma_hat**2 / n`` is the
squared standard error of the numerator, which is how it is evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DegenerateVariance, ThreeArmError
from .special import std_normal_cdf, std_normal_quantile, student_t_cdf, student_t_quantile
from .trial import ArmSummary, TestConfig, TestOutcome, TrialData, Variant, column_moments, summarize


def arm_coefficients(delta: float) -> tuple[float, float, float]:
    """Coefficients of the arm means in the effect estimate; they sum to zero."""
    return (1.0, -delta, delta - 1.0)


def weights(sizes: Sequence[int]) -> tuple[float, float, float]:
    n = sum(sizes)
    return tuple(k / n for k in sizes)


def batch_statistic(block_e: np.ndarray, block_r: np.ndarray, block_p: np.ndarray,
                    delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Numerators and squared standard errors for many relabeled trials.

    Each argument is an ``(n_k, M)`` array whose columns are the
    observations of one arm in one relabeling.  Returns ``(numerator, se_sq)``; the statistic
    is ``numerator / sqrt(se_sq)`` wherever ``se_sq > 0``.
    """
    n_e, n_r, n_p = block_e.shape[0], block_r.shape[0], block_p.shape[0]
    m_e, v_e = column_moments(block_e)
    m_r, v_r = column_moments(block_r)
    m_p, v_p = column_moments(block_p)
    numerator = m_e - delta * m_r + (delta - 1.0) * m_p
    se_sq = v_e / n_e + delta**2 * v_r / n_r + (1.0 - delta) ** 2 * v_p / n_p
    return numerator, se_sq


def sigma_hat_sq(summaries: Sequence[ArmSummary], delta: float) -> float:
    s_e, s_r, s_p = summaries
    w_e, w_r, w_p = weights((s_e.n, s_r.n, s_p.n))
    value = (
        s_e.variance / w_e
        + delta**2 * s_r.variance / w_r
        + (1.0 - delta) ** 2 * s_p.variance / w_p
    )
    if not value > 0:
        raise DegenerateVariance("estimated variance is zero: every arm entering it is constant")
    return value


def welch_df(summaries: Sequence[ArmSummary], delta: float) -> float:
    """Welch-Satterthwaite degrees of freedom for the linear contrast.

    Evaluated on exact rationals and rounded once, so closed-form cases
    such as ``2 * (m - 1)`` for delta = 1 and equal arms come out exact.
    """
    terms = [
        Fraction(a) ** 2 * Fraction(s.variance) / s.n
        for a, s in zip(arm_coefficients(delta), summaries)
    ]
    den = sum(t * t / (s.n - 1) for t, s in zip(terms, summaries))
    if den == 0:
        raise DegenerateVariance("Welch denominator is zero")
    return float(sum(terms) ** 2 / den)


def wald_statistic(trial: TrialData, delta: float) -> float:
    num, se_sq = batch_statistic(
        trial.arm_E[:, None], trial.arm_R[:, None], trial.arm_P[:, None], delta
    )
    if not se_sq[0] > 0:
        raise DegenerateVariance("estimated variance is zero: every arm entering it is constant")
    return float(num[0] / np.sqrt(se_sq[0]))


@dataclass(frozen=True)
class WaldDiagnostics:
    numerator: float
    sigma_hat_sq: float
    welch_df: float
    weights: tuple[float, float, float]


def wald_diagnostics(trial: TrialData, delta: float) -> WaldDiagnostics:
    summaries = summarize(trial)
    s_e, s_r, s_p = summaries
    return WaldDiagnostics(
        numerator=s_e.mean - delta * s_r.mean + (delta - 1.0) * s_p.mean,
        sigma_hat_sq=sigma_hat_sq(summaries, delta),
        welch_df=welch_df(summaries, delta),
        weights=weights(trial.sizes),
    )


def wald_decision(statistic: float, alpha: float, variant: Variant,
                  df: float | None = None) -> TestOutcome:
    """Compare an already computed statistic with its reference quantile."""
    if variant is Variant.WALD_NORMAL:
        critical = std_normal_quantile(alpha)
        p_value = std_normal_cdf(statistic)
        df = None
    elif variant is Variant.WALD_T:
        if df is None:
            raise ThreeArmError("the t reference distribution needs degrees of freedom")
        critical = student_t_quantile(alpha, df)
        p_value = student_t_cdf(statistic, df)
    else:
        raise ThreeArmError(f"{variant.value} is not a Wald-type test")
    return TestOutcome(
        variant=variant,
        statistic=statistic,
        critical_value=critical,
        p_value=p_value,
        reject=statistic < critical,
        df=df,
    )


def wald_test(trial: TrialData, config: TestConfig) -> TestOutcome:
    statistic = wald_statistic(trial, config.delta)
    df = None
    if config.variant is Variant.WALD_T:
        df = welch_df(summarize(trial), config.delta)
    return wald_decision(statistic, config.alpha, config.variant, df)

