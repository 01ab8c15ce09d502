"""Command line front end.

    ibvplab validate <config>      check a config and exit
    ibvplab run <config>           full suite: bounds + rates + long time
    ibvplab rates <config>         short-time growth exponents only
    ibvplab bounds <config>        a-priori bound verification only
    ibvplab convergence <config>   exact-solution refinement study

Exit codes: 0 all verdicts pass, 1 a verdict failed, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import sys

from ibvplab._version import __version__
from ibvplab.experiments import (
    ConfigError,
    convergence_study,
    emit_plotdata,
    parse_config,
    run_suite,
)

_VERB_CHECKS = {
    "run": ("bounds", "rates", "longtime", "identity"),
    "rates": ("rates",),
    "bounds": ("bounds",),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibvplab",
        description="Deviation-bound experiment suites for 1-D hyperbolic IBVPs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)
    descriptions = {
        "validate": "parse and validate a config, then exit",
        "run": "run the full experiment suite",
        "rates": "run only the short-time growth-rate fits",
        "bounds": "run only the a-priori bound verification",
        "convergence": "run the exact-solution refinement study",
    }
    for verb, help_text in descriptions.items():
        p = sub.add_parser(verb, help=help_text)
        p.add_argument("config", help="path to an INI config file")
        p.add_argument("--out", help="override the [output] dir")
        p.add_argument("--workers", type=int, help="override the [output] workers count")
        p.add_argument("--seed", type=int, help="override the [output] seed")
        p.add_argument("--quiet", action="store_true", help="suppress normal output")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    def say(message: str) -> None:
        if not args.quiet:
            print(message)

    try:
        config = parse_config(
            args.config, out_dir=args.out, workers=args.workers, seed=args.seed
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.verb == "validate":
        say(f"config OK: {config.system_label}, order {config.order}, "
            f"sizes {list(config.sizes)}, kinds {list(config.kinds)}")
        say(f"config hash: {config.config_hash()}")
        return 0

    if args.verb == "convergence":
        try:
            report = convergence_study(config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        for n, err in zip(report.sizes, report.errors):
            say(f"n = {n:5d}   L2 error = {err:.6e}")
        say(
            f"observed order {report.observed_order:.3f} "
            f"(expected >= {report.expected_order - 0.25:.2f}): "
            + ("PASS" if report.passed else "FAIL")
        )
        return 0 if report.passed else 1

    report = run_suite(config, checks=_VERB_CHECKS[args.verb])
    emit_plotdata(report)
    for record in report.records:
        status = "PASS" if record.passed else "FAIL"
        details = []
        if record.slope is not None:
            details.append(f"slope {record.slope:+.3f} (target {record.slope_target:+.2f})")
        if record.max_ratio is not None:
            details.append(f"max ratio {record.max_ratio:.6f}")
        if record.delta0 is not None:
            details.append(f"delta0 {record.delta0:.4f}")
        if record.longtime_verdict is not None:
            details.append(record.longtime_verdict)
        line = f"{status}  {record.name}"
        if details:
            line += "  [" + ", ".join(details) + "]"
        say(line)
        for reason in record.failure_reasons:
            say(f"      - {reason}")
    say(
        f"{'PASS' if report.aggregate_pass else 'FAIL'}: "
        f"{sum(r.passed for r in report.records)}/{len(report.records)} runs passed "
        f"in {report.wall_clock:.1f}s; artifacts in {report.out_dir}"
    )
    return 0 if report.aggregate_pass else 1


if __name__ == "__main__":
    sys.exit(main())
