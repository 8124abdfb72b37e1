"""Tests for three-arm non-inferiority and superiority trials.

Smaller outcomes are better.  With margin ``delta`` the null hypothesis is
``mu_E - delta*mu_R + (delta - 1)*mu_P >= 0``.  Three tests are provided:
a studentized permutation test and Wald-type tests with normal or Welch t
reference quantiles.  A Monte-Carlo harness estimates their type-I error.
"""

__version__ = "0.1.0"

from .errors import (
    AllocationMismatch,
    AllPermutationsDegenerate,
    DegeneratePermutation,
    DegenerateVariance,
    DomainError,
    EmptyArm,
    EnumerationTooLarge,
    InvalidFamilyParams,
    InvalidTrial,
    NonFiniteInput,
    ParseError,
    ThreeArmError,
    TooFewObservations,
    UnderdispersedInput,
    UnknownSelector,
)
from .permutation import (
    PermDistribution,
    coefficient_scheme,
    exact_perm_distribution,
    mc_perm_distribution,
    perm_distribution,
    perm_quantile,
    perm_statistic,
    perm_test,
    sigma_decomposition,
)
from .simulation import (
    ArmSpec,
    ScenarioSpec,
    SimulationResult,
    boundary_mean,
    builtin_grids,
    continuous_grid,
    count_grid,
    draw_arm,
    level_vs_n_sweep,
    run_scenario,
)
from .special import (
    betainc,
    nb_expected_counts,
    nb_logpmf,
    nb_moment_match,
    std_normal_cdf,
    std_normal_quantile,
    student_t_cdf,
    student_t_quantile,
)
from .trial import (
    ArmSummary,
    TestConfig,
    TestOutcome,
    TrialData,
    Variant,
    effect_estimate,
    summarize_arm,
    validate_trial,
)
from .wald import wald_decision, wald_statistic, wald_test, welch_df
