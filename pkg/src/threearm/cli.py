"""Command-line interface.

Sub-commands::

    threearm analyze DATA.csv       test one trial (CSV with header group,value)
    threearm simulate SELECTOR      type-I error grids: continuous, count, sweep
    threearm expected-counts        moment-matched negative binomial bin counts

Exit codes: 0 success, 2 usage, 3 unreadable or malformed input,
4 invalid data or configuration, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import (
    DegenerateVariance,
    DomainError,
    EnumerationTooLarge,
    ParseError,
    ThreeArmError,
    UnknownSelector,
)
from .permutation import perm_test
from .simulation import (
    ALLOCATIONS,
    CONTINUOUS_FAMILIES,
    DEFAULT_REPLICATIONS,
    KAPPAS,
    MU_R_VALUES,
    SWEEP_SIZES,
    continuous_grid,
    count_grid,
    load_scenarios,
    parse_allocation,
    results_to_csv,
    run_scenario,
    sweep_scenario,
    sweep_scenarios,
)
from .special import nb_expected_counts, nb_moment_match, round_half_up
from .trial import (
    ARMS,
    DEFAULT_EXACT_THRESHOLD,
    DEFAULT_PERMUTATIONS,
    TestConfig,
    TrialData,
    Variant,
    summarize,
)
from .wald import wald_test

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_VALIDATION = 4
EXIT_NUMERIC = 5

SELECTORS = ("continuous", "count", "sweep")


def parse_trial_csv(text: str) -> TrialData:
    """Parse ``group,value`` rows into a trial.  Line numbers count the header as 1."""
    reader = csv.reader(io.StringIO(text))
    arms = {a: [] for a in ARMS}
    header_seen = False
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        cells = [cell.strip() for cell in row]
        if not header_seen:
            if [c.lower() for c in cells] != ["group", "value"]:
                raise ParseError(lineno, f"expected header 'group,value', got {','.join(cells)!r}")
            header_seen = True
            continue
        if len(cells) != 2:
            raise ParseError(lineno, f"expected 2 fields, got {len(cells)}")
        group, raw = cells
        if group.upper() not in arms:
            raise ParseError(lineno, f"unknown group {group!r}; expected one of E, R, P")
        try:
            value = float(raw)
        except ValueError:
            raise ParseError(lineno, f"value {raw!r} is not a number") from None
        arms[group.upper()].append(value)
    if not header_seen:
        raise ParseError(1, "empty input; expected header 'group,value'")
    return TrialData(*(arms[a] for a in ARMS))


def read_trial_csv(path) -> TrialData:
    return parse_trial_csv(Path(path).read_text(encoding="utf-8"))


def hypothesis_text(delta: float) -> str:
    kind = "superiority" if delta >= 1 else "non-inferiority"
    return (
        f"{kind} (margin {delta:g}): "
        f"H0: mu_E - {delta:g}*mu_R + ({delta:g} - 1)*mu_P >= 0 "
        f"vs H1: mu_E - {delta:g}*mu_R + ({delta:g} - 1)*mu_P < 0 (smaller is better)"
    )


def analyze(trial: TrialData, variants: Sequence[Variant], delta: float, alpha: float,
            permutations: int, seed: int, exact_threshold: int,
            workers: Optional[int] = None) -> dict:
    """Run the requested tests and collect a JSON-ready record."""
    outcomes = []
    for variant in variants:
        config = TestConfig(delta, alpha, variant, permutations, seed, exact_threshold, workers)
        if variant is Variant.PERMUTATION:
            outcomes.append(perm_test(trial, config))
        else:
            outcomes.append(wald_test(trial, config))
    return {
        "hypothesis": "superiority" if delta >= 1 else "non-inferiority",
        "delta": delta,
        "alpha": alpha,
        "n": trial.n,
        "arms": [
            {"arm": a, "n": s.n, "mean": s.mean, "variance": s.variance}
            for a, s in zip(ARMS, summarize(trial))
        ],
        "tests": [o.to_dict() for o in outcomes],
    }


def format_human(record: dict) -> str:
    lines = [hypothesis_text(record["delta"]), f"alpha = {record['alpha']:g}, n = {record['n']}", ""]
    for arm in record["arms"]:
        lines.append(
            f"  arm {arm['arm']}: n = {arm['n']:4d}  mean = {arm['mean']:.6g}  "
            f"variance = {arm['variance']:.6g}"
        )
    lines.append("")
    for t in record["tests"]:
        decision = "reject H0" if t["reject"] else "do not reject H0"
        lines.append(f"[{t['test']}]")
        lines.append(f"  statistic      {t['statistic']:.6f}")
        lines.append(f"  critical value {t['critical_value']:.6f}")
        lines.append(f"  p-value        {t['p_value']:.6g}")
        if t["df"] is not None:
            lines.append(f"  Welch df       {t['df']:.6g}")
        dist = t["distribution"]
        if dist:
            detail = f"{dist['mode']}, {dist['used']} statistics"
            if dist["skipped"]:
                detail += f", {dist['skipped']} degenerate skipped"
            if dist["mode"] == "monte-carlo":
                detail += f", seed {dist['seed']}"
            lines.append(f"  distribution   {detail}")
        lines.append(f"  decision       {decision}")
    return "\n".join(lines) + "\n"


def _split_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _split_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _emit(text: str, output: Optional[str]):
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    trial = read_trial_csv(args.input)
    variants = [Variant.parse(t) for t in (args.test or [v.value for v in Variant])]
    record = analyze(
        trial, variants, args.delta, args.alpha, args.permutations, args.seed,
        args.exact_threshold, args.workers,
    )
    record["input"] = str(args.input)
    if args.format == "json":
        text = json.dumps(record, sort_keys=True, indent=2) + "\n"
    else:
        text = format_human(record)
    _emit(text, args.output)
    return EXIT_OK


def build_scenarios(args) -> list:
    """Scenarios selected on the command line, with explicit flags applied."""
    overrides = {}
    for flag, name in (("reps", "replications"), ("permutations", "permutations"),
                       ("seed", "seed"), ("alpha", "alpha")):
        if getattr(args, flag) is not None:
            overrides[name] = getattr(args, flag)
    if args.test:
        overrides["tests"] = tuple(Variant.parse(t) for t in args.test)
    allocations = tuple(parse_allocation(a) for a in args.allocation) if args.allocation else None

    if args.scenario_file:
        scenarios = load_scenarios(Path(args.scenario_file).read_text(encoding="utf-8"))
        return [replace(sc, **overrides) for sc in scenarios]

    mu_r = tuple(_split_floats(args.mu_r)) if args.mu_r else MU_R_VALUES
    if args.selector == "continuous":
        families = tuple(args.family) if args.family else CONTINUOUS_FAMILIES
        return continuous_grid(mu_r, allocations or ALLOCATIONS, families, **overrides)
    if args.selector == "count":
        kappas = tuple(_split_floats(args.kappa)) if args.kappa else KAPPAS
        return count_grid(mu_r, allocations or ALLOCATIONS, kappas, **overrides)
    if args.selector == "sweep":
        kappa = _split_floats(args.kappa)[0] if args.kappa else 3.0
        mu = mu_r[0] if args.mu_r else 1.0
        n_values = _split_ints(args.n) if args.n else list(SWEEP_SIZES)
        base = sweep_scenario(kappa, mu, n_total=n_values[0], **overrides)
        if allocations:
            base = replace(base, allocation=allocations[0])
        return sweep_scenarios(base, n_values)
    raise UnknownSelector(
        f"unknown selector {args.selector!r}; choose one of {', '.join(SELECTORS)} "
        "or give --scenario-file"
    )


def cmd_simulate(args) -> int:
    if not args.selector and not args.scenario_file:
        raise UnknownSelector("give a selector (continuous, count, sweep) or --scenario-file")
    scenarios = build_scenarios(args)
    results = []
    for i, sc in enumerate(scenarios, start=1):
        res = run_scenario(sc, args.workers)
        results.append(res)
        if args.verbose:
            rates = ", ".join(f"{t.value}={r:.4f}" for t, r in res.rates.items())
            print(f"[{i}/{len(scenarios)}] {sc.grid} {sc.family} {sc.allocation_label} "
                  f"n={sc.n_total} mu_R={sc.arms[1].mu:g}: {rates}", file=sys.stderr)
    _emit(results_to_csv(results), args.output)
    return EXIT_OK


def cmd_expected_counts(args) -> int:
    bins = _split_ints(args.bins) if args.bins else [0, 1, 2, 3]
    variance = args.sd**2
    params = nb_moment_match(args.mean, variance)
    counts = nb_expected_counts(args.n, args.mean, variance, bins)
    labels = [str(b) for b in sorted(bins)] + [f">={max(bins) + 1}"]
    if args.format == "json":
        record = {
            "n": args.n, "mean": args.mean, "sd": args.sd,
            "lambda": params.lam, "phi": params.phi,
            "bins": labels, "expected": counts,
            "rounded": [round_half_up(c) for c in counts],
        }
        text = json.dumps(record, sort_keys=True, indent=2) + "\n"
    else:
        lines = [
            f"negative binomial with lambda = {params.lam:g}, phi = {params.phi:.6g} "
            f"(mean {args.mean:g}, variance {variance:g}), n = {args.n}",
            f"{'count':>6} {'expected':>10} {'rounded':>8}",
        ]
        for label, c in zip(labels, counts):
            lines.append(f"{label:>6} {c:10.3f} {round_half_up(c):8d}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.output)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="threearm", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="test non-inferiority/superiority on one trial")
    p.add_argument("input", help="CSV file with header group,value")
    p.add_argument("--delta", type=float, default=0.8, help="margin (default 0.8)")
    p.add_argument("--alpha", type=float, default=0.025, help="one-sided level (default 0.025)")
    p.add_argument("--test", action="append", choices=["perm", "permutation", "wald-normal", "wtn",
                                                       "wald-t", "wtt"],
                   help="test to run; repeat for several (default: all three)")
    p.add_argument("--permutations", type=int, default=DEFAULT_PERMUTATIONS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact-threshold", type=int, default=DEFAULT_EXACT_THRESHOLD,
                   help="enumerate all assignments when there are at most this many")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--format", choices=["human", "json"], default="human")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="estimate type-I error over a scenario grid")
    p.add_argument("selector", nargs="?", help="continuous, count or sweep")
    p.add_argument("--scenario-file", help="JSON scenario description instead of a selector")
    p.add_argument("--reps", type=int, default=None, help=f"replications (default {DEFAULT_REPLICATIONS})")
    p.add_argument("--permutations", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--allocation", action="append", help="restrict to allocation(s), e.g. 2:2:1")
    p.add_argument("--mu-r", help="comma-separated reference means")
    p.add_argument("--family", action="append", choices=list(CONTINUOUS_FAMILIES))
    p.add_argument("--kappa", help="comma-separated overdispersion factors (count, sweep)")
    p.add_argument("--n", help="comma-separated total sizes (sweep)")
    p.add_argument("--test", action="append")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--output", "-o")
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("expected-counts", help="negative binomial expected bin counts")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--mean", type=float, required=True)
    p.add_argument("--sd", type=float, required=True)
    p.add_argument("--bins", help="comma-separated point bins (default 0,1,2,3)")
    p.add_argument("--format", choices=["human", "json"], default="human")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_expected_counts)
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UnknownSelector):
        return EXIT_USAGE
    if isinstance(exc, (ParseError, FileNotFoundError, IsADirectoryError,
                        UnicodeDecodeError, json.JSONDecodeError)):
        return EXIT_INPUT
    if isinstance(exc, (DegenerateVariance, DomainError, EnumerationTooLarge, ArithmeticError)):
        return EXIT_NUMERIC
    return EXIT_VALIDATION


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ThreeArmError, OSError, ArithmeticError, ValueError) as exc:
        print(f"threearm: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
