"""Command-line entry points.

Subcommands map one-to-one onto the ensemble module: ``simulate`` runs a
single path, ``ensemble`` a full path set, ``check`` replays diagnostics
on a stored run, ``report`` flattens diagnostics into CSV tables and
``ym-analyze`` builds empirical-measure summaries. Every command exits
zero exactly when everything it was asked to verify passed, so the tool
can gate scripted pipelines.
"""

import argparse
import os
import sys

from . import config as config_mod
from . import ensemble
from .errors import SgnsError


def _load(args):
    if args.config:
        return config_mod.load_config(args.config)
    return config_mod.RunConfig()


def _with_seed(cfg, seed):
    if seed is None:
        return cfg
    return config_mod.with_overrides(cfg, **{"ensemble.base_seed": seed})


def _cmd_simulate(args):
    cfg = _with_seed(_load(args), args.seed)
    cfg = config_mod.with_overrides(cfg, **{"ensemble.paths": 1})
    run = ensemble.run_ensemble(cfg, out=args.out,
                                path_indices=[args.path])
    summary = ensemble.read_summary(run)
    print(run)
    return 1 if summary["failed_paths"] else 0


def _cmd_ensemble(args):
    cfg = _with_seed(_load(args), args.seed)
    run = ensemble.run_ensemble(cfg, out=args.out, workers=args.workers)
    summary = ensemble.read_summary(run)
    print(run)
    if summary["failed_paths"]:
        print(f"failed paths: {summary['failed_paths']}", file=sys.stderr)
        return 1
    return 0


def _cmd_check(args):
    selection = set(args.only) if args.only else None
    diag = ensemble.analyze_run(args.run, selection=selection)
    for name in sorted(diag["checks"]):
        entry = diag["checks"][name]
        if "skipped" in entry:
            print(f"{name}: skipped ({entry['skipped']})")
        else:
            verdict = "pass" if entry["pass"] else "FAIL"
            print(f"{name}: {verdict} (measured {entry['measured']!r}, "
                  f"tolerance {entry['tolerance']!r})")
    if diag["failed_paths"]:
        print(f"failed paths: {diag['failed_paths']}")
    return 0 if diag["all_pass"] else 1


def _cmd_report(args):
    written = ensemble.emit_report(args.run, args.out)
    for path in written:
        print(path)
    ok = True
    for run_dir in args.run:
        diag = ensemble.read_diagnostics(run_dir)
        ok = ok and diag["all_pass"]
    return 0 if ok else 1


def _cmd_ym_analyze(args):
    report = ensemble.ym_analyze(args.run, args.time_bins, args.space_bins,
                                 args.out)
    print(os.path.join(args.out, "young.json"))
    if "ladder" in report:
        verdict = (report["ladder"]["monotone_decay"]
                   and report["ladder"]["dominated_everywhere"])
        print(f"ladder: {'pass' if verdict else 'FAIL'}")
        return 0 if verdict else 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sgns",
        description="stochastic compressible flow ensembles and checks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="run a single path")
    simulate.add_argument("--config", help="config file (.cfg or .json)")
    simulate.add_argument("--seed", type=int, help="override the base seed")
    simulate.add_argument("--out", help="run directory to create")
    simulate.add_argument("--path", type=int, default=0,
                          help="noise stream index (default 0)")
    simulate.set_defaults(func=_cmd_simulate)

    ens = sub.add_parser("ensemble", help="run a full ensemble")
    ens.add_argument("--config", help="config file (.cfg or .json)")
    ens.add_argument("--seed", type=int, help="override the base seed")
    ens.add_argument("--out", help="run directory to create")
    ens.add_argument("--workers", type=int, default=None,
                     help="process count (default $SGNS_WORKERS or 1)")
    ens.set_defaults(func=_cmd_ensemble)

    check = sub.add_parser("check", help="run diagnostics on a stored run")
    check.add_argument("--run", required=True, help="run directory")
    check.add_argument("--only", action="append",
                       help="restrict to this check (repeatable)")
    check.set_defaults(func=_cmd_check)

    report = sub.add_parser("report", help="flatten diagnostics to CSV")
    report.add_argument("--run", action="append", required=True,
                        help="run directory (repeatable)")
    report.add_argument("--out", required=True, help="table directory")
    report.set_defaults(func=_cmd_report)

    ym = sub.add_parser("ym-analyze",
                        help="empirical-measure analysis of stored runs")
    ym.add_argument("--run", action="append", required=True,
                    help="run directory (repeatable)")
    ym.add_argument("--time-bins", type=int, default=2)
    ym.add_argument("--space-bins", type=int, default=2)
    ym.add_argument("--out", required=True, help="output directory")
    ym.set_defaults(func=_cmd_ym_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SgnsError, FileExistsError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
