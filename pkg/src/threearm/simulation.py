"""Monte-Carlo estimation of type-I error at the null boundary.

Every replication draws its data and its permutations from streams keyed
by ``(seed, stream, replication, purpose)``, so results are identical for
any number of worker processes.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import streams
from .errors import AllocationMismatch, DegenerateVariance, InvalidFamilyParams, ThreeArmError
from .permutation import perm_test
from .trial import (
    ARMS,
    DEFAULT_EXACT_THRESHOLD,
    DEFAULT_PERMUTATIONS,
    TestConfig,
    TrialData,
    Variant,
    summarize,
)
from .wald import wald_decision, wald_statistic, welch_df

DEFAULT_REPLICATIONS = 25_000
DEFAULT_TESTS = (Variant.PERMUTATION, Variant.WALD_NORMAL, Variant.WALD_T)
CONTINUOUS_FAMILIES = ("normal", "lognormal-std", "chisq-std")
COUNT_FAMILIES = ("poisson", "negbin")
FAMILIES = CONTINUOUS_FAMILIES + COUNT_FAMILIES

MU_R_VALUES = tuple(0.5 * k for k in range(1, 11))
ALLOCATIONS = ((1, 1, 1), (2, 2, 1), (3, 2, 1))
VARIANCE_PATTERNS = ((1.0, 1.0, 1.0), (1.0, 2.0, 3.0))
KAPPAS = (1.0, 3.0)
PLACEBO_MEAN = 5.5
MARGIN = 0.8
ALPHA = 0.025

_CHUNK = 100

# moments of the base laws behind the standardized families
_LOGNORMAL_MEAN = math.exp(0.5)
_LOGNORMAL_SD = math.sqrt(math.e * (math.e - 1.0))
_CHISQ_DF = 2
_CHISQ_MEAN = 2.0
_CHISQ_SD = 2.0

CSV_COLUMNS = (
    "grid", "stream", "family", "kappa", "var_E", "var_R", "var_P",
    "allocation", "n", "n_E", "n_R", "n_P", "mu_E", "mu_R", "mu_P",
    "delta", "alpha", "test", "rejection_rate", "mc_error", "reps",
    "skipped", "permutations", "seed",
)


@dataclass(frozen=True)
class ArmSpec:
    """Distribution of one arm, parametrized by its mean and variance.

    Count families require ``sigma_sq == kappa * mu``; ``poisson`` needs
    ``kappa == 1`` and ``negbin`` ``kappa > 1``.
    """

    family: str
    mu: float
    sigma_sq: float
    kappa: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidFamilyParams(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma_sq) and self.sigma_sq > 0):
            raise InvalidFamilyParams(f"need finite mean and positive variance, got {self.mu}, {self.sigma_sq}")
        if self.family in COUNT_FAMILIES:
            if not self.mu > 0:
                raise InvalidFamilyParams(f"count families need a positive mean, got {self.mu}")
            if self.kappa < 1:
                raise InvalidFamilyParams(f"kappa must be >= 1, got {self.kappa}")
            if not math.isclose(self.sigma_sq, self.kappa * self.mu, rel_tol=1e-12):
                raise InvalidFamilyParams("count families need sigma_sq == kappa * mu")
            if self.family == "poisson" and self.kappa != 1:
                raise InvalidFamilyParams("poisson requires kappa == 1")
            if self.family == "negbin" and not self.kappa > 1:
                raise InvalidFamilyParams("negbin requires kappa > 1; use poisson for kappa == 1")

    @classmethod
    def counts(cls, mu: float, kappa: float) -> "ArmSpec":
        family = "poisson" if kappa == 1 else "negbin"
        return cls(family, mu, kappa * mu, kappa)

    @property
    def sd(self) -> float:
        return math.sqrt(self.sigma_sq)


def boundary_mean(mu_r: float, mu_p: float, delta: float) -> float:
    """Experimental mean that puts the scenario on the null boundary.

    Written as ``mu_p + delta * (mu_r - mu_p)``, which equals
    ``delta*mu_R + (1 - delta)*mu_P`` and returns ``mu`` exactly when both
    control means equal ``mu``.
    """
    return mu_p + delta * (mu_r - mu_p)


def standardize(base_draws, family: str, mu: float, sd: float) -> np.ndarray:
    """Map base lognormal(0, 1) or chi-squared(2) draws to mean ``mu``, sd ``sd``."""
    base_draws = np.asarray(base_draws, dtype=np.float64)
    if family == "lognormal-std":
        z = (base_draws - _LOGNORMAL_MEAN) / _LOGNORMAL_SD
    elif family == "chisq-std":
        z = (base_draws - _CHISQ_MEAN) / _CHISQ_SD
    else:
        raise InvalidFamilyParams(f"{family} is not a standardized family")
    return z * sd + mu


def draw_arm(spec: ArmSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    if spec.family == "normal":
        return rng.normal(spec.mu, spec.sd, n)
    if spec.family == "lognormal-std":
        return standardize(rng.lognormal(0.0, 1.0, n), spec.family, spec.mu, spec.sd)
    if spec.family == "chisq-std":
        return standardize(rng.chisquare(_CHISQ_DF, n), spec.family, spec.mu, spec.sd)
    if spec.family == "poisson":
        return rng.poisson(spec.mu, n).astype(np.float64)
    # gamma-Poisson mixture with mean mu and shape phi = (kappa - 1) / mu
    phi = (spec.kappa - 1.0) / spec.mu
    return rng.negative_binomial(1.0 / phi, 1.0 / (1.0 + spec.mu * phi), n).astype(np.float64)


def allocation_sizes(n_total: int, allocation: Sequence[int]) -> tuple[int, int, int]:
    parts = sum(allocation)
    if n_total % parts:
        ratio = ":".join(str(a) for a in allocation)
        raise AllocationMismatch(f"total size {n_total} is not divisible by allocation {ratio}")
    unit = n_total // parts
    return tuple(a * unit for a in allocation)


def parse_allocation(text) -> tuple[int, int, int]:
    if isinstance(text, (tuple, list)):
        parts = [int(v) for v in text]
    else:
        try:
            parts = [int(v) for v in str(text).split(":")]
        except ValueError:
            raise ThreeArmError(f"allocation must look like 2:2:1, got {text!r}") from None
    if len(parts) != 3 or min(parts) < 1:
        raise ThreeArmError(f"allocation must be three positive integers, got {text!r}")
    return tuple(parts)


@dataclass(frozen=True)
class ScenarioSpec:
    """One cell of a simulation grid."""

    arms: tuple[ArmSpec, ArmSpec, ArmSpec]
    n_total: int
    allocation: tuple[int, int, int] = (1, 1, 1)
    delta: float = MARGIN
    alpha: float = ALPHA
    tests: tuple[Variant, ...] = DEFAULT_TESTS
    replications: int = DEFAULT_REPLICATIONS
    permutations: int = DEFAULT_PERMUTATIONS
    seed: int = 0
    stream: int = 0
    exact_threshold: int = DEFAULT_EXACT_THRESHOLD
    grid: str = "custom"
    boundary_tol: float = 1e-9

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "allocation", parse_allocation(self.allocation))
        object.__setattr__(self, "tests", tuple(Variant.parse(t) for t in self.tests))
        if len(self.arms) != 3:
            raise ThreeArmError("a scenario needs exactly three arm specifications")
        if not self.tests:
            raise ThreeArmError("a scenario needs at least one test")
        if self.replications < 1 or self.permutations < 1:
            raise ThreeArmError("replications and permutations must be positive")
        if not 0 < self.alpha < 1 or not self.delta > 0:
            raise ThreeArmError("need alpha in (0, 1) and a positive margin")
        if min(allocation_sizes(self.n_total, self.allocation)) < 2:
            raise ThreeArmError(f"every arm needs at least two observations, got {self.sizes}")
        e, r, p = self.arms
        gap = e.mu - boundary_mean(r.mu, p.mu, self.delta)
        if abs(gap) > self.boundary_tol * max(1.0, abs(e.mu)):
            raise ThreeArmError(
                f"scenario is off the null boundary: mu_E={e.mu} but delta*mu_R+(1-delta)*mu_P="
                f"{boundary_mean(r.mu, p.mu, self.delta)}"
            )

    @property
    def sizes(self) -> tuple[int, int, int]:
        return allocation_sizes(self.n_total, self.allocation)

    @property
    def family(self) -> str:
        names = {a.family for a in self.arms}
        return names.pop() if len(names) == 1 else "mixed"

    @property
    def allocation_label(self) -> str:
        return ":".join(str(a) for a in self.allocation)

    def with_size(self, n_total: int) -> "ScenarioSpec":
        return replace(self, n_total=n_total)


@dataclass(frozen=True)
class SimulationResult:
    scenario: ScenarioSpec
    rejections: dict
    replications: int
    skipped: int

    @property
    def effective(self) -> int:
        return self.replications - self.skipped

    @property
    def rates(self) -> dict:
        if self.effective == 0:
            return {t: math.nan for t in self.rejections}
        return {t: c / self.effective for t, c in self.rejections.items()}

    def rate(self, test) -> float:
        return self.rates[Variant.parse(test)]

    @property
    def mc_error(self) -> float:
        """Binomial standard error at the nominal level."""
        a = self.scenario.alpha
        if self.effective == 0:
            return math.nan
        return math.sqrt(a * (1.0 - a) / self.effective)

    def rows(self) -> list[dict]:
        sc = self.scenario
        e, r, p = sc.arms
        counts = sc.family in COUNT_FAMILIES
        base = {
            "grid": sc.grid,
            "stream": sc.stream,
            "family": sc.family,
            "kappa": e.kappa if counts else "",
            "var_E": e.sigma_sq,
            "var_R": r.sigma_sq,
            "var_P": p.sigma_sq,
            "allocation": sc.allocation_label,
            "n": sc.n_total,
            "n_E": sc.sizes[0],
            "n_R": sc.sizes[1],
            "n_P": sc.sizes[2],
            "mu_E": e.mu,
            "mu_R": r.mu,
            "mu_P": p.mu,
            "delta": sc.delta,
            "alpha": sc.alpha,
        }
        out = []
        for test in sc.tests:
            row = dict(base)
            row.update(
                test=test.value,
                rejection_rate=self.rates[test],
                mc_error=self.mc_error,
                reps=self.replications,
                skipped=self.skipped,
                permutations=sc.permutations if test is Variant.PERMUTATION else "",
                seed=sc.seed,
            )
            out.append(row)
        return out


def draw_trial(scenario: ScenarioSpec, replication: int) -> TrialData:
    rng = streams.generator(scenario.seed, scenario.stream, replication, 0)
    return TrialData(*(draw_arm(spec, n, rng) for spec, n in zip(scenario.arms, scenario.sizes)))


def replicate(scenario: ScenarioSpec, replication: int) -> Optional[dict]:
    """Decisions of every configured test on one simulated trial.

    Returns ``None`` when any test cannot be evaluated (degenerate data).
    """
    trial = draw_trial(scenario, replication)
    delta, alpha = scenario.delta, scenario.alpha
    try:
        statistic = wald_statistic(trial, delta)
        decisions = {}
        for test in scenario.tests:
            if test is Variant.PERMUTATION:
                config = TestConfig(
                    delta, alpha, test, scenario.permutations, scenario.seed,
                    scenario.exact_threshold, workers=1,
                )
                seed = streams.seed_sequence(scenario.seed, scenario.stream, replication, 1)
                outcome = perm_test(trial, config, seed=seed, statistic=statistic)
            elif test is Variant.WALD_T:
                df = welch_df(summarize(trial), delta)
                outcome = wald_decision(statistic, alpha, test, df)
            else:
                outcome = wald_decision(statistic, alpha, test)
            decisions[test] = outcome.reject
    except (DegenerateVariance, ArithmeticError):
        return None
    return decisions


def _run_chunk(scenario: ScenarioSpec, start: int, stop: int):
    counts = {t: 0 for t in scenario.tests}
    skipped = 0
    for rep in range(start, stop):
        decisions = replicate(scenario, rep)
        if decisions is None:
            skipped += 1
            continue
        for t, rejected in decisions.items():
            counts[t] += int(rejected)
    return counts, skipped


def run_scenario(scenario: ScenarioSpec, workers: Optional[int] = None) -> SimulationResult:
    """Estimate the rejection rate of each configured test."""
    chunks = [
        (start, min(start + _CHUNK, scenario.replications))
        for start in range(0, scenario.replications, _CHUNK)
    ]
    workers = min(streams.resolve_workers(workers), len(chunks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [scenario] * len(chunks), *zip(*chunks)))
    else:
        parts = [_run_chunk(scenario, a, b) for a, b in chunks]
    totals = {t: 0 for t in scenario.tests}
    skipped = 0
    for counts, sk in parts:
        skipped += sk
        for t, c in counts.items():
            totals[t] += c
    return SimulationResult(scenario, totals, scenario.replications, skipped)


def run_many(scenarios: Iterable[ScenarioSpec], workers: Optional[int] = None,
             progress=None) -> list[SimulationResult]:
    results = []
    for sc in scenarios:
        results.append(run_scenario(sc, workers))
        if progress is not None:
            progress(results[-1])
    return results


# -- built-in grids ----------------------------------------------------------


def continuous_grid(mu_r_values=MU_R_VALUES, allocations=ALLOCATIONS,
                    families=CONTINUOUS_FAMILIES, variances=VARIANCE_PATTERNS,
                    **overrides) -> list[ScenarioSpec]:
    """Normal, standardized lognormal and chi-squared scenarios, n = 30."""
    out = []
    for family in families:
        for var in variances:
            for alloc in allocations:
                for mu_r in mu_r_values:
                    mu_e = boundary_mean(mu_r, PLACEBO_MEAN, MARGIN)
                    arms = tuple(
                        ArmSpec(family, mu, v)
                        for mu, v in zip((mu_e, mu_r, PLACEBO_MEAN), var)
                    )
                    out.append(ScenarioSpec(arms, 30, alloc, grid="continuous", **overrides))
    return [replace(sc, stream=i) for i, sc in enumerate(out)]


def count_grid(mu_r_values=MU_R_VALUES, allocations=ALLOCATIONS, kappas=KAPPAS,
               **overrides) -> list[ScenarioSpec]:
    """Poisson (kappa = 1) and negative binomial (kappa = 3) scenarios, n = 60."""
    out = []
    for kappa in kappas:
        for alloc in allocations:
            for mu_r in mu_r_values:
                mu_e = boundary_mean(mu_r, PLACEBO_MEAN, MARGIN)
                arms = tuple(ArmSpec.counts(mu, kappa) for mu in (mu_e, mu_r, PLACEBO_MEAN))
                out.append(ScenarioSpec(arms, 60, alloc, grid="count", **overrides))
    return [replace(sc, stream=i) for i, sc in enumerate(out)]


def builtin_grids(**overrides) -> list[ScenarioSpec]:
    """The continuous grid (180 cells) followed by the count grid (60 cells)."""
    return continuous_grid(**overrides) + count_grid(**overrides)


def sweep_scenario(kappa: float = 3.0, mu_r: float = 1.0, **overrides) -> ScenarioSpec:
    """Count scenario (1.9, 1, 5.5) with balanced allocation, used for level-vs-n."""
    mu_e = boundary_mean(mu_r, PLACEBO_MEAN, MARGIN)
    arms = tuple(ArmSpec.counts(mu, kappa) for mu in (mu_e, mu_r, PLACEBO_MEAN))
    overrides.setdefault("grid", "sweep")
    return ScenarioSpec(arms, overrides.pop("n_total", 30), (1, 1, 1), **overrides)


SWEEP_SIZES = (30, 60, 120, 240, 480)


def sweep_scenarios(base: ScenarioSpec, n_values: Sequence[int] = SWEEP_SIZES) -> list[ScenarioSpec]:
    """``base`` at each total size, one random stream per size."""
    return [replace(base.with_size(n), stream=i) for i, n in enumerate(n_values)]


def level_vs_n_sweep(base: ScenarioSpec, n_values: Sequence[int] = SWEEP_SIZES,
                     workers: Optional[int] = None) -> list[SimulationResult]:
    return [run_scenario(sc, workers) for sc in sweep_scenarios(base, n_values)]


# -- serialization ------------------------------------------------------------


def _csv_value(value):
    if isinstance(value, float):
        return repr(value)
    return value


def results_to_csv(results: Iterable[SimulationResult], handle=None) -> str:
    """Write one row per (scenario, test) in the column order of ``CSV_COLUMNS``."""
    buffer = handle if handle is not None else io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for res in results:
        for row in res.rows():
            writer.writerow({k: _csv_value(v) for k, v in row.items()})
    return buffer.getvalue() if handle is None else ""


def scenario_to_dict(sc: ScenarioSpec) -> dict:
    return {
        "arms": {
            label: {"family": a.family, "mu": a.mu, "sigma_sq": a.sigma_sq, "kappa": a.kappa}
            for label, a in zip(ARMS, sc.arms)
        },
        "n": sc.n_total,
        "allocation": sc.allocation_label,
        "delta": sc.delta,
        "alpha": sc.alpha,
        "tests": [t.value for t in sc.tests],
        "replications": sc.replications,
        "permutations": sc.permutations,
        "seed": sc.seed,
        "stream": sc.stream,
        "exact_threshold": sc.exact_threshold,
        "grid": sc.grid,
    }


def _arm_from_dict(raw: dict) -> ArmSpec:
    family = raw.get("family")
    if family in COUNT_FAMILIES and "sigma_sq" not in raw:
        kappa = float(raw.get("kappa", 1.0))
        return ArmSpec(family, float(raw["mu"]), kappa * float(raw["mu"]), kappa)
    try:
        return ArmSpec(family, float(raw["mu"]), float(raw["sigma_sq"]), float(raw.get("kappa", 1.0)))
    except KeyError as exc:
        raise ThreeArmError(f"arm specification is missing {exc.args[0]!r}") from None


def scenario_from_dict(raw: dict) -> ScenarioSpec:
    """Build a scenario from its JSON form.

    ``arms.E.mu`` may be omitted; it then defaults to the boundary mean.
    """
    try:
        arms_raw = raw["arms"]
        delta = float(raw.get("delta", MARGIN))
        arms_raw = {k: dict(arms_raw[k]) for k in ARMS}
        if "mu" not in arms_raw["E"]:
            arms_raw["E"]["mu"] = boundary_mean(
                float(arms_raw["R"]["mu"]), float(arms_raw["P"]["mu"]), delta
            )
        arms = tuple(_arm_from_dict(arms_raw[k]) for k in ARMS)
        return ScenarioSpec(
            arms,
            int(raw["n"]),
            raw.get("allocation", "1:1:1"),
            delta,
            float(raw.get("alpha", ALPHA)),
            tuple(raw.get("tests", [t.value for t in DEFAULT_TESTS])),
            int(raw.get("replications", DEFAULT_REPLICATIONS)),
            int(raw.get("permutations", DEFAULT_PERMUTATIONS)),
            int(raw.get("seed", 0)),
            int(raw.get("stream", 0)),
            int(raw.get("exact_threshold", DEFAULT_EXACT_THRESHOLD)),
            str(raw.get("grid", "custom")),
        )
    except (KeyError, TypeError) as exc:
        raise ThreeArmError(f"invalid scenario description: missing or malformed {exc}") from None


def load_scenarios(text: str) -> list[ScenarioSpec]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = data.get("scenarios", [data])
    return [replace(scenario_from_dict(item), stream=item.get("stream", i))
            for i, item in enumerate(data)]
