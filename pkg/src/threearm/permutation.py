"""Studentized permutation test for the retention-of-effect hypothesis.

The Wald statistic is recomputed, variance estimate included, on every
relabeling of the pooled sample.  Only the induced group assignment
matters (within-arm order does not change the statistic), so a relabeling
is stored canonically as three sorted index arrays.  Exact mode enumerates
all ``n! / (n_E! n_R! n_P!)`` assignments; Monte-Carlo mode draws uniform
random permutations in fixed-size blocks, each block seeded from
``(seed, block index)`` so the result does not depend on the worker count.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import streams
from .errors import (
    AllPermutationsDegenerate,
    DegeneratePermutation,
    EnumerationTooLarge,
    ThreeArmError,
)
from .trial import (
    DEFAULT_EXACT_THRESHOLD,
    TestConfig,
    TestOutcome,
    TrialData,
    Variant,
    summarize,
)
from .wald import arm_coefficients, batch_statistic, wald_statistic

BLOCK_SIZE = 1024
MONTE_CARLO = "monte-carlo"
EXACT = "exact"


@dataclass(frozen=True)
class PermDistribution:
    """Permutation statistics of one trial.

    ``values`` excludes degenerate relabelings; ``skipped`` counts them.
    ``permutations`` is B in Monte-Carlo mode and the number of distinct
    assignments in exact mode.
    """

    values: np.ndarray
    mode: str
    permutations: int
    skipped: int = 0
    seed: Optional[int] = None

    @property
    def size(self) -> int:
        return int(self.values.size)

    def meta(self) -> dict:
        return {
            "mode": self.mode,
            "permutations": self.permutations,
            "used": self.size,
            "skipped": self.skipped,
            "seed": self.seed,
        }


def multinomial_count(sizes: Sequence[int]) -> int:
    n_e, n_r, n_p = sizes
    return math.comb(n_e + n_r + n_p, n_e) * math.comb(n_r + n_p, n_r)


@lru_cache(maxsize=32)
def enumerate_assignments(sizes: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Every distinct assignment as three ``(n_k, M)`` index arrays.

    Column j lists, in increasing order, the pooled positions that
    assignment j puts into each arm.
    """
    n_e, n_r, n_p = sizes
    n = n_e + n_r + n_p
    rest_patterns = np.array(list(itertools.combinations(range(n - n_e), n_r)), dtype=np.intp)
    rest_patterns = rest_patterns.reshape(-1, n_r)
    p_patterns = np.array(
        [sorted(set(range(n - n_e)) - set(row)) for row in rest_patterns.tolist()], dtype=np.intp
    ).reshape(-1, n_p)
    all_idx = np.arange(n)
    e_rows, r_rows, p_rows = [], [], []
    for combo in itertools.combinations(range(n), n_e):
        remaining = np.delete(all_idx, combo)
        e_rows.append(np.broadcast_to(np.array(combo, dtype=np.intp), (len(rest_patterns), n_e)))
        r_rows.append(remaining[rest_patterns])
        p_rows.append(remaining[p_patterns])
    out = tuple(np.ascontiguousarray(np.concatenate(rows).T) for rows in (e_rows, r_rows, p_rows))
    for arr in out:
        arr.setflags(write=False)
    return out


def random_assignments(sizes: Sequence[int], count: int, rng: np.random.Generator):
    """``count`` uniformly random assignments in the layout of
    :func:`enumerate_assignments` (sorted within arms)."""
    n_e, n_r, _ = sizes
    perm = rng.random((count, sum(sizes))).argsort(axis=1)
    return tuple(
        np.ascontiguousarray(np.sort(perm[:, lo:hi], axis=1).T)
        for lo, hi in ((0, n_e), (n_e, n_e + n_r), (n_e + n_r, perm.shape[1]))
    )


def _statistics(pooled: np.ndarray, idx_e, idx_r, idx_p, delta: float):
    num, se_sq = batch_statistic(pooled[idx_e], pooled[idx_r], pooled[idx_p], delta)
    ok = se_sq > 0
    if ok.all():
        return num / np.sqrt(se_sq), 0
    return num[ok] / np.sqrt(se_sq[ok]), int((~ok).sum())


def _labels_to_indices(labels, sizes=None):
    labels = list(labels)
    names = {"E": 0, "R": 1, "P": 2, 0: 0, 1: 1, 2: 2}
    try:
        codes = np.array([names[x] for x in labels])
    except KeyError as exc:
        raise ThreeArmError(f"unknown group label {exc.args[0]!r}") from None
    groups = tuple(np.flatnonzero(codes == k)[:, None] for k in range(3))
    got = tuple(g.shape[0] for g in groups)
    if sizes is not None and got != tuple(sizes):
        raise ThreeArmError(f"labeling has arm sizes {got}, expected {tuple(sizes)}")
    return groups


def perm_statistic(pooled, labels, delta: float, sizes=None) -> float:
    """Wald statistic of ``pooled`` relabeled by ``labels``.

    ``labels`` gives the arm (``"E"``, ``"R"``, ``"P"`` or 0, 1, 2) of each
    pooled observation.
    """
    pooled = np.asarray(pooled, dtype=np.float64)
    if len(labels) != pooled.size:
        raise ThreeArmError("labeling and pooled vector differ in length")
    idx_e, idx_r, idx_p = _labels_to_indices(labels, sizes)
    values, skipped = _statistics(pooled, idx_e, idx_r, idx_p, delta)
    if skipped:
        raise DegeneratePermutation("relabeled trial has zero estimated variance")
    return float(values[0])


def _mc_block(pooled, sizes, delta, seed, block, count):
    rng = streams.generator(seed, block)
    return _statistics(pooled, *random_assignments(sizes, count, rng), delta)


def mc_perm_distribution(trial: TrialData, delta: float, permutations: int, seed=0,
                         workers: Optional[int] = None) -> PermDistribution:
    """Statistics of ``permutations`` uniformly random relabelings.

    Deterministic in ``(seed, permutations)``; ``workers`` only changes
    how the fixed blocks are scheduled.
    """
    if permutations < 1:
        raise ThreeArmError("at least one permutation is required")
    pooled = trial.pooled()
    sizes = trial.sizes
    blocks = [
        (b, min(BLOCK_SIZE, permutations - b * BLOCK_SIZE))
        for b in range(-(-permutations // BLOCK_SIZE))
    ]
    workers = min(streams.resolve_workers(workers), len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda bc: _mc_block(pooled, sizes, delta, seed, *bc), blocks))
    else:
        parts = [_mc_block(pooled, sizes, delta, seed, b, c) for b, c in blocks]
    values = np.concatenate([v for v, _ in parts])
    skipped = sum(s for _, s in parts)
    if values.size == 0:
        raise AllPermutationsDegenerate(f"all {permutations} sampled relabelings are degenerate")
    values.setflags(write=False)
    seed_out = seed if isinstance(seed, (int, np.integer)) else None
    return PermDistribution(values, MONTE_CARLO, permutations, skipped, seed_out)


def exact_perm_distribution(trial: TrialData, delta: float,
                            threshold: int = DEFAULT_EXACT_THRESHOLD) -> PermDistribution:
    """Statistics of every distinct group assignment, each with equal weight."""
    count = multinomial_count(trial.sizes)
    if count > threshold:
        raise EnumerationTooLarge(count, threshold)
    values, skipped = _statistics(trial.pooled(), *enumerate_assignments(trial.sizes), delta)
    if values.size == 0:
        raise AllPermutationsDegenerate("every group assignment is degenerate")
    values.setflags(write=False)
    return PermDistribution(values, EXACT, count, skipped)


def perm_quantile(dist, alpha: float) -> float:
    """Largest c with (share of values strictly below c) <= alpha.

    That is the (floor(alpha * M) + 1)-th smallest of the M values; ties
    cannot break the bound because only strictly smaller values count.
    """
    values = dist.values if isinstance(dist, PermDistribution) else np.asarray(dist, dtype=float)
    m = values.size
    if m == 0:
        raise ThreeArmError("empty permutation distribution")
    if not 0 <= alpha < 1:
        raise ThreeArmError(f"alpha must lie in [0, 1), got {alpha}")
    k = math.floor(Fraction(alpha) * m)
    return float(np.partition(values, k)[k])


def perm_p_value(dist, statistic: float) -> float:
    values = dist.values if isinstance(dist, PermDistribution) else np.asarray(dist, dtype=float)
    return (1 + int(np.count_nonzero(values <= statistic))) / (values.size + 1)


def perm_distribution(trial: TrialData, config: TestConfig, seed=None) -> PermDistribution:
    """Exact distribution when the enumeration fits the threshold, else Monte-Carlo."""
    if multinomial_count(trial.sizes) <= config.exact_threshold:
        return exact_perm_distribution(trial, config.delta, config.exact_threshold)
    return mc_perm_distribution(
        trial, config.delta, config.permutations,
        config.seed if seed is None else seed, config.workers,
    )


def perm_test(trial: TrialData, config: TestConfig, seed=None,
              statistic: Optional[float] = None) -> TestOutcome:
    """Studentized permutation test; rejects when T_n < c_n(alpha)."""
    if statistic is None:
        statistic = wald_statistic(trial, config.delta)
    dist = perm_distribution(trial, config, seed)
    critical = perm_quantile(dist, config.alpha)
    meta = dist.meta()
    meta["assignments"] = multinomial_count(trial.sizes)
    return TestOutcome(
        variant=Variant.PERMUTATION,
        statistic=statistic,
        critical_value=critical,
        p_value=perm_p_value(dist, statistic),
        reject=statistic < critical,
        distribution_meta=meta,
    )


def kolmogorov_distance(sample, reference) -> float:
    """Sup-distance between the empirical CDFs of two samples."""
    a = np.sort(np.asarray(sample, dtype=float))
    b = np.sort(np.asarray(reference, dtype=float))
    grid = np.union1d(a, b)
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


# -- linear-statistic representation used in the asymptotic argument ---------


@dataclass(frozen=True)
class CoefficientScheme:
    """Regression coefficients ``c`` and studentization weights ``d``.

    ``c`` carries the opposite sign of the effect estimate, so
    ``sum(c * x) == -numerator * sqrt(scale)``.  It is only used for
    identity checks, never to compute the test statistic.  The ``d``
    weights are positive except in the placebo block when delta == 1.
    """

    sizes: tuple[int, int, int]
    delta: float
    scale: float
    c: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)

    @property
    def c_sum(self) -> float:
        return math.fsum(self.c)

    @property
    def c_sq_sum(self) -> float:
        return math.fsum(self.c * self.c)

    @property
    def d_total(self) -> float:
        return math.fsum(self.d)


def coefficient_scheme(n_e: int, n_r: int, n_p: int, delta: float) -> CoefficientScheme:
    if min(n_e, n_r, n_p) < 2:
        raise ThreeArmError("every arm needs at least two observations")
    # 1 / (1/n_E + delta^2/n_R + (1-delta)^2/n_P)
    scale = (n_e * n_r * n_p) / (
        n_r * n_p + delta**2 * n_e * n_p + (delta - 1.0) ** 2 * n_e * n_r
    )
    root = math.sqrt(scale)
    c = np.concatenate([
        np.full(n_e, -root / n_e),
        np.full(n_r, root * delta / n_r),
        np.full(n_p, root * (1.0 - delta) / n_p),
    ])
    d = np.concatenate([
        np.full(n_e, scale / (n_e * (n_e - 1))),
        np.full(n_r, scale * delta**2 / (n_r * (n_r - 1))),
        np.full(n_p, scale * (delta - 1.0) ** 2 / (n_p * (n_p - 1))),
    ])
    c.setflags(write=False)
    d.setflags(write=False)
    return CoefficientScheme((n_e, n_r, n_p), delta, scale, c, d)


def sigma_decomposition(trial: TrialData, delta: float) -> tuple[float, float, float, float]:
    """The four terms W1..W4 with ``W1 - W2**2 - W3**2 - W4**2`` equal to
    the d-weighted variance of an (already relabeled) trial."""
    n_e, n_r, n_p = trial.sizes
    scheme = coefficient_scheme(n_e, n_r, n_p, delta)
    x = trial.pooled()
    root_d = np.sqrt(scheme.d)
    w1 = math.fsum(scheme.d * x * x)
    w2 = math.fsum(root_d[:n_e] * x[:n_e]) / math.sqrt(n_e)
    w3 = math.fsum(root_d[n_e : n_e + n_r] * x[n_e : n_e + n_r]) / math.sqrt(n_r)
    w4 = math.fsum(root_d[n_e + n_r :] * x[n_e + n_r :]) / math.sqrt(n_p)
    return w1, w2, w3, w4


def weighted_variance(trial: TrialData, delta: float) -> float:
    """``scale * sum_k a_k**2 s_k**2 / n_k``, computed from arm summaries.

    The second route to the quantity returned by :func:`sigma_decomposition`.
    """
    scheme = coefficient_scheme(*trial.sizes, delta)
    summaries = summarize(trial)
    coefs = arm_coefficients(delta)
    return scheme.scale * math.fsum(
        a * a * s.variance / s.n for a, s in zip(coefs, summaries)
    )

