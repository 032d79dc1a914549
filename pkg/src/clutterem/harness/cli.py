"""Command-line entry point: ``clutterem {calibrate,run,emit,selftest}``."""

import argparse
import logging
import os
import sys
import tempfile

import numpy as np

from ..detect import ThresholdTable
from ..errors import MissingDataError
from .experiment import calibrate, run_experiment
from .io import FIGURES, ResultTable, emit_plotdata, write_manifest
from .plan import ExperimentPlan, load_plan

THRESHOLDS_FILE = "thresholds.csv"
RESULTS_FILE = "results.csv"
MANIFEST_FILE = "manifest.txt"


def _plan_from_args(args, trials_field):
    plan = load_plan(args.plan)
    changes = {"seed": args.seed}
    if args.trials is not None:
        changes[trials_field] = args.trials
    plan = plan.with_overrides(**changes)
    out = args.out or plan.output
    os.makedirs(out, exist_ok=True)
    return plan, out


def _load_thresholds(path):
    return ThresholdTable.load(path) if path and os.path.exists(path) else None


def cmd_calibrate(args):
    plan, out = _plan_from_args(args, "calibration_trials")
    table = _load_thresholds(os.path.join(out, THRESHOLDS_FILE))
    result = calibrate(plan, threads=args.threads, table=table)
    path = os.path.join(out, THRESHOLDS_FILE)
    result.thresholds.save(path)
    print(f"wrote {path} ({len(result.thresholds)} thresholds, {result.failed} trials excluded)")
    return 0


def cmd_run(args):
    plan, out = _plan_from_args(args, "evaluation_trials")
    thresholds = _load_thresholds(args.thresholds or os.path.join(out, THRESHOLDS_FILE))
    result = run_experiment(plan, threads=args.threads, thresholds=thresholds)
    result.table.save(os.path.join(out, RESULTS_FILE))
    write_manifest(result.manifest, os.path.join(out, MANIFEST_FILE))
    if result.thresholds is not None:
        result.thresholds.save(os.path.join(out, THRESHOLDS_FILE))
    print(f"wrote {len(result.table)} rows to {os.path.join(out, RESULTS_FILE)}")
    return 0


def cmd_emit(args):
    base = args.out or (load_plan(args.plan).output if args.plan else ".")
    results = args.results or os.path.join(base, RESULTS_FILE)
    table = ResultTable.load(results)
    out = os.path.join(args.out or os.path.dirname(results) or ".", "plotdata")
    try:
        paths = emit_plotdata(table, args.figure, out, sinr_db=args.sinr)
    except MissingDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


def _selftest_plan(seed):
    from ..scenario import ClutterRegion, ScenarioConfig
    from ..em import EmConfig
    scenario = ScenarioConfig(4, [ClutterRegion(12, 20), ClutterRegion(12, 30)])
    return ExperimentPlan(scenario, target_bins=(5, 18), sinr_db=(20.0,),
                          em=EmConfig(h_max=5), calibration_trials=500,
                          evaluation_trials=20, pfa=0.2, seed=seed, chunk=250,
                          name="selftest")


def cmd_selftest(args):
    """Tiny end-to-end run, repeated to confirm byte-identical output."""
    plan = _selftest_plan(args.seed if args.seed is not None else 7)
    first = run_experiment(plan, threads=1)
    second = run_experiment(plan, threads=max(args.threads, 1))
    same = first.table.dumps() == second.table.dumps()
    text = first.table.dumps()
    with tempfile.TemporaryDirectory() as tmp:
        n_files = len(emit_plotdata(first.table, "pd", tmp))
    finite = all(np.isfinite(r["value"]) for r in first.table.rows)
    ok = same and finite and n_files == 6
    print(f"rows={len(first.table)} reproducible={same} finite={finite} pd_curves={n_files}")
    print("selftest", "PASS" if ok else "FAIL")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "selftest.csv"), "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="clutterem", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, plan_required=True):
        p.add_argument("--plan", required=plan_required, help="YAML experiment plan")
        p.add_argument("--seed", type=int, help="override the master seed (u64)")
        p.add_argument("--out", help="output directory (default: plan's output)")
        p.add_argument("--trials", type=int, help="override the trial count")
        p.add_argument("--threads", type=int, default=1, help="worker processes")

    p = sub.add_parser("calibrate", help="set detection thresholds on null windows")
    common(p)
    p.set_defaults(func=cmd_calibrate)
    p = sub.add_parser("run", help="calibrate if needed, then evaluate the SINR sweep")
    common(p)
    p.add_argument("--thresholds", help="threshold table to reuse")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("emit", help="write plot data for one figure")
    common(p, plan_required=False)
    p.add_argument("--results", help="results CSV (default: <out>/results.csv)")
    p.add_argument("--figure", required=True, choices=FIGURES)
    p.add_argument("--sinr", type=float, help="SINR for the convergence-vs-h figure")
    p.set_defaults(func=cmd_emit)
    p = sub.add_parser("selftest", help="quick reproducibility check")
    common(p, plan_required=False)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
