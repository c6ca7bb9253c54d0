"""Command-line front end: profile, search, report, and pilot subcommands."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import figures
from .evaluators.synthetic import pilot_configs, pilot_model, synthetic_evaluate
from .pipeline import RunSpec, build_runspec, run
from .reports import emit_from_data, load_report_data, render
from .space import average_bit, average_rank, memory_footprint


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file with RunSpec values (flags override it)")
    parser.add_argument("--space-bits", type=_int_list, help="admissible bit-widths, e.g. 2,4,8")
    parser.add_argument("--space-ranks", type=_int_list, help="admissible adapter ranks")
    parser.add_argument("--budget-bytes", type=int, help="hard memory budget in bytes")
    parser.add_argument(
        "--budget-avg-bits",
        type=float,
        help="budget as a target average bit-width (adapters priced at the median rank)",
    )
    parser.add_argument("--preset", choices=["appendix", "main-text"], help="search preset")
    parser.add_argument("--pop", type=int, help="population size")
    parser.add_argument("--gens", type=int, help="number of generations")
    parser.add_argument("--bo-iters", type=int, help="refinement rounds per front member")
    parser.add_argument("--proxy-steps", type=int, help="proxy tuning steps per evaluation")
    parser.add_argument("--seed", type=int, help="global random seed (QR_SEED overrides)")
    parser.add_argument("--evaluator-cmd", help="command line of an external evaluator process")
    parser.add_argument(
        "--synthetic",
        action="store_true",
        help="use the built-in synthetic evaluator (the default without --evaluator-cmd)",
    )
    parser.add_argument("--geometry", help="JSON file overriding the evaluator's geometry")
    parser.add_argument("--calib-size", type=int, help="calibration inputs used for profiling")
    parser.add_argument("--skip-phase1", action="store_true", help="disable sensitivity profiling")
    parser.add_argument("--skip-phase2", action="store_true", help="disable the genetic search")
    parser.add_argument("--skip-phase3", action="store_true", help="disable the GP refinement")
    parser.add_argument(
        "--mutation-op",
        choices=["proximity", "resample"],
        help="mutation operator (resample is the ablation alternative)",
    )
    parser.add_argument("--out", help="directory for report files and figures")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="force serial evaluation even when --parallel is set",
    )
    parser.add_argument("--parallel", type=int, help="number of concurrent evaluator connections")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    parser.add_argument(
        "--no-uniform-baseline",
        action="store_true",
        help="skip the exhaustive uniform-configuration baseline sweep",
    )


def _spec_from_args(args: argparse.Namespace) -> RunSpec:
    file_values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_values = json.load(fh)
    overrides = {
        "space_bits": args.space_bits,
        "space_ranks": args.space_ranks,
        "budget_bytes": args.budget_bytes,
        "budget_avg_bits": args.budget_avg_bits,
        "preset": args.preset,
        "pop": args.pop,
        "gens": args.gens,
        "bo_iters": args.bo_iters,
        "proxy_steps": args.proxy_steps,
        "seed": args.seed,
        "evaluator_cmd": None if args.synthetic else args.evaluator_cmd,
        "geometry": args.geometry,
        "calib_size": args.calib_size,
        "skip_phase1": args.skip_phase1 or None,
        "skip_phase2": args.skip_phase2 or None,
        "skip_phase3": args.skip_phase3 or None,
        "mutation_op": args.mutation_op,
        "out": args.out,
        "parallel": args.parallel,
        "uniform_baseline": False if args.no_uniform_baseline else None,
    }
    if args.synthetic:
        file_values.pop("evaluator_cmd", None)
    if args.deterministic:
        overrides["deterministic"] = True
    elif args.parallel and args.parallel > 1:
        overrides["deterministic"] = False
    return build_runspec(file_values, overrides)


_STATUS_EXIT = {"ok": 0, "partial": 3, "failed": 2}


def _cmd_search(args: argparse.Namespace, force_profile_only: bool = False) -> int:
    spec = _spec_from_args(args)
    if force_profile_only:
        from dataclasses import replace

        spec = replace(
            spec, skip_phase1=False, skip_phase2=True, skip_phase3=True, uniform_baseline=False
        )
    report = run(spec)
    data = render(report)
    if spec.out_dir:
        emit_from_data(data, spec.out_dir, figures=not args.no_figures)
        print(json.dumps({"out": spec.out_dir, "status": report.status}, sort_keys=True))
    else:
        from .reports import summary_from_data

        print(json.dumps(summary_from_data(data), indent=2, sort_keys=True))
    return _STATUS_EXIT[report.status]


def _cmd_report(args: argparse.Namespace) -> int:
    data = load_report_data(args.src)
    out = args.out or (args.src if Path(args.src).is_dir() else Path(args.src).parent)
    emit_from_data(data, out, figures=not args.no_figures)
    print(json.dumps({"out": str(out), "status": data["status"]}, sort_keys=True))
    return 0


def _cmd_pilot(args: argparse.Namespace) -> int:
    model = pilot_model(args.layers)
    steps = args.proxy_steps if args.proxy_steps is not None else model.proxy_steps_full
    geom = model.geometry
    configs = pilot_configs(model.space, model.n_layers)
    results = {}
    for name, config in configs.items():
        results[name] = {
            "performance": synthetic_evaluate(model, config, steps),
            "memory_bytes": memory_footprint(config, geom),
            "avg_bit": average_bit(config, geom),
            "avg_rank": average_rank(config, geom),
        }
    ordering_ok = (
        results["B"]["performance"]
        > results["D"]["performance"]
        > results["C"]["performance"]
        > results["A"]["performance"]
    )
    print(json.dumps({"results": results, "ordering_B>D>C>A": ordering_ok}, indent=2, sort_keys=True))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = [
            [
                name,
                results[name]["performance"],
                results[name]["memory_bytes"],
                results[name]["avg_bit"],
                results[name]["avg_rank"],
            ]
            for name in sorted(results)
        ]
        from .reports import _csv_text, atomic_write

        atomic_write(
            out / "pilot.csv",
            _csv_text(["config", "performance", "memory_bytes", "avg_bit", "avg_rank"], rows),
        )
        if not args.no_figures:
            figures.render_pilot(results, out / "pilot.png")
    return 0 if ordering_ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitrank",
        description="Joint per-layer bit-width and adapter-rank search under a memory budget",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_search = sub.add_parser("search", help="run the full three-phase search")
    _add_run_flags(p_search)

    p_profile = sub.add_parser("profile", help="run sensitivity profiling only")
    _add_run_flags(p_profile)

    p_report = sub.add_parser("report", help="re-render tables and figures from report.json")
    p_report.add_argument("--from", dest="src", required=True, help="run directory or report.json")
    p_report.add_argument("--out", help="destination directory (defaults to the source)")
    p_report.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p_pilot = sub.add_parser(
        "pilot", help="run the four-configuration shallow/deep study on the synthetic landscape"
    )
    p_pilot.add_argument("--layers", type=int, default=28, help="layer count of the study model")
    p_pilot.add_argument("--proxy-steps", type=int, help="proxy steps (default: full tuning)")
    p_pilot.add_argument("--seed", type=int, help="unused; kept for flag symmetry")
    p_pilot.add_argument("--out", help="directory for pilot.csv and pilot.png")
    p_pilot.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "search":
            return _cmd_search(args)
        if args.command == "profile":
            return _cmd_search(args, force_profile_only=True)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "pilot":
            return _cmd_pilot(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
