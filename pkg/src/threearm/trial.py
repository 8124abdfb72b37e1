"""Three-arm trial data model and per-arm summaries.

Arms are labelled ``E`` (experimental), ``R`` (reference) and ``P``
(placebo).  Smaller outcomes are better, so the null hypothesis of the
retention-of-effect problem is

    mu_E - delta * mu_R + (delta - 1) * mu_P >= 0

and every test in this package rejects in the lower tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import (
    EmptyArm,
    InvalidTrial,
    NonFiniteInput,
    ThreeArmError,
    TooFewObservations,
)

ARMS = ("E", "R", "P")

DEFAULT_PERMUTATIONS = 15_000
DEFAULT_EXACT_THRESHOLD = 200_000


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


def _arm_problems(arm: str, values: np.ndarray) -> list:
    if values.size == 0:
        return [EmptyArm(arm)]
    problems = []
    if values.size < 2:
        problems.append(TooFewObservations(arm, int(values.size)))
    bad = np.flatnonzero(~np.isfinite(values))
    problems.extend(NonFiniteInput(arm, int(i), float(values[i])) for i in bad)
    return problems


@dataclass(frozen=True)
class TrialData:
    """Observations of the three arms, validated on construction."""

    arm_E: np.ndarray
    arm_R: np.ndarray
    arm_P: np.ndarray

    def __post_init__(self):
        problems = []
        for arm in ARMS:
            values = _frozen_array(getattr(self, f"arm_{arm}"))
            object.__setattr__(self, f"arm_{arm}", values)
            problems.extend(_arm_problems(arm, values))
        if problems:
            raise InvalidTrial(problems)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return (self.arm_E.size, self.arm_R.size, self.arm_P.size)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def arm(self, label: str) -> np.ndarray:
        return getattr(self, f"arm_{label}")

    def pooled(self) -> np.ndarray:
        """Observations stacked in E, R, P order."""
        return np.concatenate([self.arm_E, self.arm_R, self.arm_P])

    @classmethod
    def from_pooled(cls, pooled, sizes) -> "TrialData":
        pooled = np.asarray(pooled, dtype=np.float64)
        n_e, n_r, _ = sizes
        if pooled.size != sum(sizes):
            raise ThreeArmError(
                f"pooled vector has {pooled.size} values, sizes sum to {sum(sizes)}"
            )
        return cls(pooled[:n_e], pooled[n_e : n_e + n_r], pooled[n_e + n_r :])

    def __eq__(self, other):
        if not isinstance(other, TrialData):
            return NotImplemented
        return all(np.array_equal(self.arm(a), other.arm(a)) for a in ARMS)

    __hash__ = None


def validate_trial(raw) -> TrialData:
    """Validate raw arm data and return a :class:`TrialData`.

    ``raw`` may be a ``TrialData``, a mapping with keys ``E``, ``R``, ``P``
    or a sequence of three arrays.  Raises :class:`InvalidTrial` carrying
    every violated invariant, not just the first one.
    """
    if isinstance(raw, TrialData):
        return raw
    if isinstance(raw, Mapping):
        missing = [a for a in ARMS if a not in raw]
        if missing:
            raise InvalidTrial([EmptyArm(a) for a in missing])
        arms = [raw[a] for a in ARMS]
    else:
        arms = list(raw)
        if len(arms) != 3:
            raise ThreeArmError(f"expected three arms, got {len(arms)}")
    return TrialData(*arms)


@dataclass(frozen=True)
class ArmSummary:
    n: int
    mean: float
    variance: float


def pairwise_sum(block: np.ndarray) -> np.ndarray:
    """Column sums of a 2-D array by pairwise (tree) summation over axis 0."""
    a = block
    while a.shape[0] > 1:
        half = a.shape[0] // 2
        s = a[:half] + a[half : 2 * half]
        if a.shape[0] % 2:
            s[half - 1] += a[2 * half]
        a = s
    return a[0].copy() if a is block else a[0]


def column_moments(block: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Means and unbiased variances of each column of an ``(n_k, M)`` array.

    Each column holds one arm of one (re)labeled trial.  The arithmetic per
    column does not depend on M, so a single trial and a batch containing
    it give bit-identical results.  Constant columns get variance exactly 0.
    """
    k = block.shape[0]
    means = pairwise_sum(block) / k
    dev = block - means
    np.multiply(dev, dev, out=dev)
    var = pairwise_sum(dev) / (k - 1)
    constant = np.maximum.reduce(block, axis=0) == np.minimum.reduce(block, axis=0)
    var[constant] = 0.0
    return means, var


def summarize_arm(observations: Sequence[float], arm: str = "?") -> ArmSummary:
    """Sample size, mean and (n - 1)-divisor variance of one arm."""
    values = np.asarray(observations, dtype=np.float64).reshape(-1)
    problems = _arm_problems(arm, values)
    if problems:
        raise problems[0]
    means, var = column_moments(values[:, None])
    return ArmSummary(int(values.size), float(means[0]), float(var[0]))


def summarize(trial: TrialData) -> tuple[ArmSummary, ArmSummary, ArmSummary]:
    return tuple(summarize_arm(trial.arm(a), a) for a in ARMS)


def effect_estimate(summaries: Sequence[ArmSummary], delta: float) -> float:
    """Plug-in estimate of mu_E - delta*mu_R + (delta - 1)*mu_P."""
    s_e, s_r, s_p = summaries
    return s_e.mean - delta * s_r.mean + (delta - 1.0) * s_p.mean


class Variant(str, Enum):
    PERMUTATION = "permutation"
    WALD_NORMAL = "wald-normal"
    WALD_T = "wald-t"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"perm": cls.PERMUTATION, "wtn": cls.WALD_NORMAL, "wtt": cls.WALD_T}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ThreeArmError(f"unknown test variant {value!r}") from None


@dataclass(frozen=True)
class TestConfig:
    """Margin, level and resampling settings for one test."""

    __test__ = False

    delta: float
    alpha: float = 0.025
    variant: Variant = Variant.PERMUTATION
    permutations: int = DEFAULT_PERMUTATIONS
    seed: int = 0
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD
    workers: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ThreeArmError(f"margin delta must be positive, got {self.delta}")
        if not 0 < self.alpha < 1:
            raise ThreeArmError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.permutations < 1:
            raise ThreeArmError("at least one permutation is required")
        if self.exact_threshold < 0:
            raise ThreeArmError("exact_threshold must be non-negative")

    @property
    def is_superiority(self) -> bool:
        return self.delta >= 1


@dataclass(frozen=True)
class TestOutcome:
    """Result of one test.  ``reject`` is ``statistic < critical_value``."""

    __test__ = False

    variant: Variant
    statistic: float
    critical_value: float
    p_value: float
    reject: bool
    df: Optional[float] = None
    distribution_meta: Optional[dict] = field(default=None)

    def to_dict(self) -> dict:
        return {
            "test": self.variant.value,
            "statistic": self.statistic,
            "critical_value": self.critical_value,
            "p_value": self.p_value,
            "reject": self.reject,
            "df": self.df,
            "distribution": self.distribution_meta,
        }
