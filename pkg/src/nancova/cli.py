"""Command-line front end: ``nancova test`` and ``nancova simulate``.

Exit codes: 0 success, 1 usage, 2 data error, 3 degenerate statistics.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .bootstrap import WeightScheme, bootstrap_test
from .errors import (
    DegenerateCovariate,
    DegenerateVariance,
    InvalidInput,
    NancovaError,
    ParseError,
    ScenarioError,
    TooManyDegenerateDraws,
)
from .inference import Method, TestReport, chi2_test, f_test
from .rankcore import Dataset, WeightingMode
from .simgen import load_scenario, monte_carlo

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 0, 1, 2, 3


def read_csv_dataset(path, group, outcome, covariates=()) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in [group, outcome, *covariates]:
            if col not in header:
                raise ParseError(f"column not found; header has {header}", column=col)
        labels, ys, xs = [], [], [[] for _ in covariates]
        for lineno, row in enumerate(reader, start=2):
            labels.append(row[group])
            for col, sink in [(outcome, ys), *zip(covariates, xs)]:
                raw = row[col]
                try:
                    sink.append(float(raw))
                except (TypeError, ValueError):
                    raise ParseError(f"not a number: {raw!r}", row=lineno, column=col)
    if not labels:
        raise InvalidInput("the data file has no rows")
    return Dataset.from_columns(labels, ys, xs)


def run_test(data: Dataset, method, alpha=0.05, weighting="weighted", n_boot=5000, seed=None, contrast=None):
    method = Method(method)
    mode = WeightingMode(weighting)
    if method is Method.CA:
        return chi2_test(data, mode, contrast, alpha)
    if method is Method.FA2:
        return f_test(data, mode, contrast, alpha, adjusted=True)
    if method is Method.FA1:
        return f_test(data, mode, contrast, alpha, adjusted=False)
    scheme = WeightScheme.EFRON if method is Method.EB else WeightScheme.WILD
    return bootstrap_test(data, mode, contrast, alpha, scheme, n_boot, seed)


def format_report(rep: TestReport) -> str:
    lines = [f"method: {rep.method}   weighting: {rep.weighting}   alpha: {rep.alpha}"]
    width = len(rep.qhat[0]) if rep.qhat else 1
    comp = ["outcome"] + [f"cov{r}" for r in range(1, width)]
    lines.append("relative effects:")
    lines.append("  " + f"{'group':<12}" + "".join(f"{c:>9}" for c in comp) + f"{'adjusted':>10}")
    for label, q, w in zip(rep.labels, rep.qhat, rep.what):
        lines.append("  " + f"{label:<12}" + "".join(f"{v:9.2f}" for v in q) + f"{w:10.2f}")
    if rep.gamma:
        lines.append("gamma: " + ", ".join(f"{g:.2f}" for g in rep.gamma))
    df = f"df = {rep.df1:.3f}" + (f", {rep.df2:.3f}" if rep.df2 is not None else "")
    lines.append(f"statistic: {rep.statistic:.4f}   {df}")
    if rep.critical_value is not None:
        lines.append(
            f"bootstrap: {rep.n_boot} {rep.scheme} draws, seed {rep.seed}, "
            f"critical value {rep.critical_value:.4f}, degenerate draws {rep.n_degenerate}"
        )
    lines.append(f"p-value: {rep.p_value:.4g}   reject H0: {'yes' if rep.reject else 'no'}")
    return "\n".join(lines)


def _write(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def cmd_test(args) -> int:
    covariates = [c for c in (args.covariates or "").split(",") if c]
    if args.outcome in covariates:
        print("error: the outcome column cannot also be a covariate", file=sys.stderr)
        return EXIT_USAGE
    data = read_csv_dataset(args.data, args.group, args.outcome, covariates)
    rep = run_test(data, args.method, args.alpha, args.weighting, args.boot, args.seed)
    rep.config.update(
        data=str(args.data), group=args.group, outcome=args.outcome, covariates=covariates
    )
    if args.format == "json":
        _write(json.dumps(rep.to_dict(), indent=2), args.out)
        if args.out:
            print(format_report(rep))
    else:
        _write(format_report(rep), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    overrides = {k: getattr(args, k) for k in ("n_sim", "n_boot", "seed") if getattr(args, k) is not None}
    if overrides:
        scenario = type(scenario).from_dict({**scenario.to_dict(), **overrides})
    progress = None
    if args.verbose:
        progress = lambda done, total: print(f"  {done}/{total} runs", file=sys.stderr)
    result = monte_carlo(scenario, workers=args.workers, progress=progress)
    if args.out:
        Path(args.out).write_text(result.to_csv())
    if args.json:
        Path(args.json).write_text(json.dumps(result.to_dict(), indent=2))
    print(f"scenario: {scenario.name or args.scenario} ({scenario.n_sim} runs, {scenario.n_boot} bootstrap draws)")
    print(result.table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nancova", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test for a group effect on one CSV dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--group", required=True, help="group column")
    t.add_argument("--outcome", required=True, help="outcome column")
    t.add_argument("--covariates", default="", help="comma-separated covariate columns")
    t.add_argument("--method", default="eb", choices=[m.value for m in Method])
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--boot", type=int, default=5000, help="bootstrap draws")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--weighting", default="weighted", choices=[m.value for m in WeightingMode])
    t.add_argument("--out", default=None)
    t.add_argument("--format", default="json", choices=["json", "text"])
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("simulate", help="run a Monte Carlo scenario")
    s.add_argument("scenario", help="scenario YAML/JSON file or bundled scenario name")
    s.add_argument("--out", default=None, help="CSV output path")
    s.add_argument("--json", default=None, help="JSON output path")
    s.add_argument("--n-sim", dest="n_sim", type=int, default=None)
    s.add_argument("--n-boot", dest="n_boot", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--workers", type=int, default=None)
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (DegenerateCovariate, DegenerateVariance, TooManyDegenerateDraws) as exc:
        hint = ""
        if isinstance(exc, DegenerateCovariate):
            hint = " (drop constant or duplicated covariates, or use --method fa1)"
        print(f"degenerate statistics: {exc}{hint}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, ParseError, InvalidInput, NancovaError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
