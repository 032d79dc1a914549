"""Experiment plans, Monte Carlo execution and result files."""

from .experiment import CalibrationResult, ExperimentResult, calibrate, run_experiment, trial_rng
from .io import ResultTable, emit_plotdata, plot_curves, read_manifest, write_manifest
from .plan import ExperimentPlan, dumps_plan, load_plan, loads_plan, plan_from_dict

__all__ = [
    "CalibrationResult", "ExperimentPlan", "ExperimentResult", "ResultTable",
    "calibrate", "dumps_plan", "emit_plotdata", "load_plan", "loads_plan",
    "plan_from_dict", "plot_curves", "read_manifest", "run_experiment",
    "trial_rng", "write_manifest",
]
