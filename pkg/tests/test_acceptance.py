"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Budgets are reduced from the full study defaults where noted; every
tolerance below is the stated acceptance tolerance.
"""

import csv
import io
import json
import math
import time

import numpy as np
import pytest

from threearm.cli import main
from threearm.fixtures import data_path, worked_example
from threearm.permutation import (
    coefficient_scheme,
    exact_perm_distribution,
    kolmogorov_distance,
    mc_perm_distribution,
    sigma_decomposition,
    weighted_variance,
)
from threearm.simulation import (
    CSV_COLUMNS,
    ArmSpec,
    ScenarioSpec,
    continuous_grid,
    count_grid,
    results_to_csv,
    run_scenario,
)
from threearm.special import (
    nb_expected_counts,
    round_half_up,
    std_normal_cdf,
    std_normal_quantile,
    student_t_cdf,
    student_t_quantile,
)
from threearm.trial import TrialData, summarize
from threearm.wald import wald_statistic, welch_df

ALPHA = 0.025


def band(reps):
    return 3 * math.sqrt(ALPHA * (1 - ALPHA) / reps)


def test_criterion_01_coefficient_identities(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_sum = worst_sq = 0.0
    for _ in range(200):
        n_e, n_r, n_p = (int(v) for v in rng.integers(2, 400, size=3))
        s = coefficient_scheme(n_e, n_r, n_p, float(rng.uniform(0.05, 3.0)))
        worst_sum = max(worst_sum, abs(s.c_sum))
        worst_sq = max(worst_sq, abs(s.c_sq_sum - 1))
    worst_rel = 0.0
    for _ in range(100):
        sizes = tuple(int(v) for v in rng.integers(2, 30, size=3))
        delta = float(rng.uniform(0.05, 3.0))
        pooled = rng.permutation(rng.gamma(2.0, 3.0, size=sum(sizes)))
        trial = TrialData.from_pooled(pooled, sizes)
        w1, w2, w3, w4 = sigma_decomposition(trial, delta)
        target = weighted_variance(trial, delta)
        worst_rel = max(worst_rel, abs((w1 - w2**2 - w3**2 - w4**2) - target) / target)
    elapsed = time.perf_counter() - start
    ok = worst_sum < 1e-12 and worst_sq < 1e-12 and worst_rel < 1e-10 and elapsed < 5
    criterion("1 coefficient identities", ok,
              f"max|sum c|={worst_sum:.1e} max|sum c^2-1|={worst_sq:.1e} "
              f"max rel W gap={worst_rel:.1e} time={elapsed:.2f}s")
    assert ok


def test_criterion_02_monte_carlo_matches_enumeration(criterion):
    start = time.perf_counter()
    rng = np.random.default_rng(202)
    distances = {}
    for sizes in ((2, 2, 2), (3, 3, 2)):
        trial = TrialData(*(rng.normal(size=k) for k in sizes))
        exact = exact_perm_distribution(trial, 0.8)
        mc = mc_perm_distribution(trial, 0.8, 100_000, seed=2024)
        distances[sizes] = kolmogorov_distance(mc.values, exact.values)
    elapsed = time.perf_counter() - start
    ok = max(distances.values()) < 0.02 and elapsed < 30
    detail = " ".join(f"KS{s}={d:.4f}" for s, d in distances.items())
    criterion("2 MC vs exact permutation distribution", ok, f"{detail} time={elapsed:.1f}s")
    assert ok


def test_criterion_03_finite_exactness(criterion):
    start = time.perf_counter()
    arms = tuple(ArmSpec("normal", 0.0, 1.0) for _ in range(3))
    sc = ScenarioSpec(arms, 12, (1, 1, 1), tests=("perm",), replications=10_000, seed=303)
    res = run_scenario(sc)
    elapsed = time.perf_counter() - start
    rate = res.rate("perm")
    limit = ALPHA + band(10_000)
    ok = rate <= limit and res.skipped == 0 and elapsed < 120
    criterion("3 exact permutation test at (4,4,4)", ok,
              f"rate={rate:.4f} <= {limit:.4f} time={elapsed:.1f}s")
    assert ok


def test_criterion_04_wald_t_normal_data(criterion):
    start = time.perf_counter()
    (sc,) = continuous_grid(mu_r_values=(3.0,), allocations=((1, 1, 1),), families=("normal",),
                            variances=((1.0, 1.0, 1.0),), tests=("wtt",),
                            replications=10_000, seed=404)
    rate = run_scenario(sc).rate("wtt")
    elapsed = time.perf_counter() - start
    ok = abs(rate - ALPHA) <= 3 * 0.00156 and elapsed < 60
    criterion("4 Wald-t level, normal data", ok,
              f"rate={rate:.4f} in 0.025 +/- 0.0047 time={elapsed:.1f}s")
    assert ok


def test_criterion_05_permutation_level_poisson(criterion):
    start = time.perf_counter()
    (sc,) = count_grid(mu_r_values=(1.0,), allocations=((1, 1, 1),), kappas=(1.0,),
                       tests=("perm",), replications=5_000, permutations=5_000, seed=505)
    assert sc.arms[0].mu == pytest.approx(1.9)
    rate = run_scenario(sc).rate("perm")
    elapsed = time.perf_counter() - start
    ok = abs(rate - ALPHA) <= band(5_000) and elapsed < 600
    criterion("5 permutation level, Poisson counts", ok,
              f"rate={rate:.4f} in 0.025 +/- {band(5_000):.4f} time={elapsed:.1f}s")
    assert ok


def test_criterion_06_wald_normal_liberal_overdispersed(criterion):
    start = time.perf_counter()
    (sc,) = count_grid(mu_r_values=(0.5,), allocations=((1, 1, 1),), kappas=(3.0,),
                       tests=("wtn",), replications=10_000, seed=606)
    res = run_scenario(sc)
    rate = res.rate("wtn")
    elapsed = time.perf_counter() - start
    limit = ALPHA + 3 * res.mc_error
    ok = rate > limit and elapsed < 60
    criterion("6 Wald-normal liberal, kappa=3", ok,
              f"rate={rate:.4f} > {limit:.4f} skipped={res.skipped} time={elapsed:.1f}s")
    assert ok


def test_criterion_07_expected_counts_table(criterion):
    published = {
        (54, 5.5, 12.5): (28, 5, 3, 2, 16),
        (51, 0.6, 1.5): (38, 6, 3, 2, 2),
        (52, 0.2, 0.7): (46, 4, 1, 1, 0),
        (52, 6.9, 16.0): (26, 5, 3, 2, 16),
    }
    worst = 0
    cells = []
    for (n, mean, sd), expected in published.items():
        got = [round_half_up(v) for v in nb_expected_counts(n, mean, sd * sd)]
        worst = max(worst, max(abs(a - b) for a, b in zip(got, expected)))
        cells.append("".join(str(tuple(got)).split()))
    ok = worst <= 1
    criterion("7 negative binomial expected counts", ok, f"max cell gap={worst} got {' '.join(cells)}")
    assert ok


def test_criterion_08_quantile_accuracy(criterion):
    # 50-digit evaluations; the 7-digit constants are these values rounded
    z_oracle, t_oracle = -1.9599639845400542355, -4.3026527297494638523
    assert round(z_oracle, 7) == -1.959964 and round(t_oracle, 7) == -4.3026527
    z_err = abs(std_normal_quantile(0.025) - z_oracle)
    t_err = abs(student_t_quantile(0.025, 2.0) - t_oracle)
    grid = np.concatenate([np.logspace(-6, -1, 20), np.linspace(0.12, 0.88, 10),
                           1 - np.logspace(-1, -6, 20)])
    trip = max(abs(std_normal_cdf(std_normal_quantile(p)) - p) for p in grid)
    for nu in (1.0, 2.0, 3.7, 19.4, 250.0):
        trip = max(trip, max(abs(student_t_cdf(student_t_quantile(p, nu), nu) - p) for p in grid))
    ok = z_err < 1e-8 and t_err < 1e-7 and trip < 1e-8 and grid.size == 50
    criterion("8 quantile accuracy", ok,
              f"|z err|={z_err:.1e} |t err|={t_err:.1e} max round trip={trip:.1e}")
    assert ok


def test_criterion_09_worked_example(criterion, capsys):
    trial = worked_example()
    t = wald_statistic(trial, 0.8)
    nu = welch_df(summarize(trial), 0.8)
    capsys.readouterr()
    code = main(["analyze", str(data_path("worked_example.csv")), "--format", "json"])
    record = json.loads(capsys.readouterr().out)
    reported = {x["test"]: x for x in record["tests"]}
    ok = (
        code == 0
        and abs(t + 1.23443) <= 1e-5
        and nu == 2.0
        and reported["wald-t"]["df"] == 2.0
        and all(abs(x["statistic"] + 1.23443) <= 1e-5 for x in reported.values())
    )
    criterion("9 worked example", ok, f"T_n={t:.6f} df={nu!r}")
    assert ok


def test_criterion_10_reproducible_across_workers(criterion, capsys, tmp_path):
    rng = np.random.default_rng(1010)
    lines = ["group,value"] + [f"{g},{v!r}" for g, k in zip("ERP", (14, 12, 10))
                               for v in rng.poisson(3.0, size=k).astype(float).tolist()]
    path = tmp_path / "trial.csv"
    path.write_text("\n".join(lines) + "\n")
    outputs = []
    for workers in ("1", "2", "8"):
        capsys.readouterr()
        main(["analyze", str(path), "--permutations", "15000", "--seed", "42",
              "--format", "json", "--workers", workers])
        outputs.append(capsys.readouterr().out)
    mode = json.loads(outputs[0])["tests"][0]["distribution"]["mode"]

    (sc,) = count_grid(mu_r_values=(1.0,), allocations=((2, 2, 1),), kappas=(3.0,),
                       replications=400, permutations=500, seed=10)
    tables = [results_to_csv([run_scenario(sc, workers=w)]) for w in (1, 2, 8)]
    ok = len(set(outputs)) == 1 and mode == "monte-carlo" and len(set(tables)) == 1
    criterion("10 reproducible across 1, 2, 8 workers", ok,
              f"analyze identical={len(set(outputs)) == 1} simulate identical={len(set(tables)) == 1}")
    assert ok


def test_reduced_grid_end_to_end(criterion, capsys, tmp_path):
    start = time.perf_counter()
    rows = []
    for selector in ("continuous", "count"):
        target = tmp_path / f"{selector}.csv"
        code = main(["simulate", selector, "--mu-r", "1,3,5", "--reps", "2000",
                     "--permutations", "2000", "--seed", "1", "-o", str(target)])
        assert code == 0
        text = target.read_text()
        reader = csv.DictReader(io.StringIO(text))
        assert tuple(reader.fieldnames) == CSV_COLUMNS
        rows.extend(reader)
    elapsed = time.perf_counter() - start
    scenarios = {(r["grid"], r["stream"]) for r in rows}
    rates = [float(r["rejection_rate"]) for r in rows]
    ok = (
        len(scenarios) == 54 + 18
        and len(rows) == 3 * len(scenarios)
        and all(0.0 <= v <= 1.0 for v in rates)
        and all(int(r["reps"]) == 2000 for r in rows)
        and elapsed < 1800
    )
    worst = max(rows, key=lambda r: float(r["rejection_rate"]))
    criterion("reduced grid end to end", ok,
              f"{len(scenarios)} scenarios, {len(rows)} rows, time={elapsed / 60:.1f} min, "
              f"max rate {float(worst['rejection_rate']):.4f} ({worst['test']}, {worst['family']})")
    assert ok
