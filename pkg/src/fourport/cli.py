"""Command-line runner.

Subcommands::

    fourport run <scenario-file|preset> [...] [--out DIR] [--jobs N]
                 [--steps-per-period N] [--integrator rk4|exact]
    fourport list-presets
    fourport validate <file>
    fourport report <waveform.csv> <scenario-file|preset>

Exit codes: 0 ok, 2 validation error, 3 diverged, 4 not settled,
5 infeasible duty solution.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from .errors import (
    ConfigError,
    Diverged,
    Infeasible,
    NotSettled,
    ParseError,
    ValidationError,
)
from .presets import preset_description, preset_names, preset_scenario
from .scenario import (
    Scenario,
    build_report,
    load_scenario,
    load_waveform_csv,
    render_report,
    run_scenario,
    write_outputs,
)
from .simulate import Integrator

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGED = 3
EXIT_NOT_SETTLED = 4
EXIT_INFEASIBLE = 5


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, Diverged):
        return EXIT_DIVERGED
    if isinstance(exc, NotSettled):
        return EXIT_NOT_SETTLED
    if isinstance(exc, Infeasible):
        return EXIT_INFEASIBLE
    return EXIT_VALIDATION


def _resolve_scenario(ref: str) -> Scenario:
    if ref in preset_names():
        return preset_scenario(ref)
    return load_scenario(ref)


def _run_one(ref: str, args) -> int:
    try:
        scenario = _resolve_scenario(ref)
        overrides = {}
        if args.steps_per_period is not None:
            overrides["steps_per_period"] = args.steps_per_period
        if args.integrator is not None:
            overrides["integrator"] = Integrator(args.integrator)
        if overrides:
            scenario = replace(scenario,
                               settings=replace(scenario.settings, **overrides))
        waveform = run_scenario(scenario)
        csv_path, json_path, _, report = write_outputs(
            waveform, scenario, args.out
        )
        print(f"{scenario.name}: wrote {csv_path} and {json_path}")
        if not report["settled"]:
            print(f"{scenario.name}: not settled within the final window",
                  file=sys.stderr)
            return EXIT_NOT_SETTLED
        return EXIT_OK
    except (ParseError, ValidationError, ConfigError, Diverged, Infeasible,
            NotSettled) as e:
        print(f"{ref}: {e}", file=sys.stderr)
        return _exit_code(e)


def _cmd_run(args) -> int:
    if args.jobs > 1 and len(args.scenario) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(lambda ref: _run_one(ref, args),
                                  args.scenario))
    else:
        codes = [_run_one(ref, args) for ref in args.scenario]
    return max(codes)


def _cmd_list_presets(_args) -> int:
    for name in preset_names():
        print(f"{name:8s} {preset_description(name)}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.file)
    except (ParseError, ValidationError) as e:
        print(f"{args.file}: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"{args.file}: ok ({scenario.name})")
    return EXIT_OK


def _cmd_report(args) -> int:
    try:
        scenario = _resolve_scenario(args.scenario)
        waveform = load_waveform_csv(args.waveform)
        report = build_report(waveform, scenario)
    except (ParseError, ValidationError, ConfigError, NotSettled,
            Infeasible) as e:
        print(f"report: {e}", file=sys.stderr)
        return _exit_code(e)
    print(render_report(report), end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fourport",
        description="Four-port bidirectional DC-DC converter simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate scenarios and export results")
    p_run.add_argument("scenario", nargs="+",
                       help="scenario file path or preset name")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--steps-per-period", type=int, default=None)
    p_run.add_argument("--integrator", choices=["rk4", "exact"], default=None)
    p_run.add_argument("--jobs", type=int, default=1,
                       help="run scenarios concurrently")
    p_run.set_defaults(func=_cmd_run)

    p_list = sub.add_parser("list-presets", help="list built-in scenarios")
    p_list.set_defaults(func=_cmd_list_presets)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("file")
    p_val.set_defaults(func=_cmd_validate)

    p_rep = sub.add_parser("report", help="recompute a report from a CSV")
    p_rep.add_argument("waveform", help="waveform CSV path")
    p_rep.add_argument("scenario", help="scenario file path or preset name")
    p_rep.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
