"""Experiment plans and their YAML file format.

A plan file looks like::

    schema: 1
    name: two-region
    scenario:
      channels: 8
      aoa_deg: 0.0
      noise_power: 1.0
      regions:
        - {bins: 32, cnr_db: 20}
        - {bins: 32, cnr_db: 30, rho: 0.9}
      target_bins: [15, 38]
      target_model: matched
    sinr_db: [15, 25, 35]
    hypotheses: [H11, H12, H13]
    detectors: [plugin-lrt, latent-lrt]
    em: {h_max: 15, m_max: 5, delta: 1.0e-4, penalty_rho: 3.0}
    trials: {calibration: 10000, evaluation: 200}
    pfa: 0.01
    seed: 1
    chunk: 100
    output: results

``target_model: matched`` draws deterministic targets for H11, fluctuating
ones for H12 and swarm members for H13; a model name forces that model for
every hypothesis. Unknown keys anywhere are rejected.
"""

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import yaml

from ..detect import Scheme, min_calibration_runs
from ..em.model import Hypothesis
from ..em.procedure import EmConfig
from ..errors import InvalidInputError
from ..scenario import ClutterRegion, ScenarioConfig, TargetModel

SCHEMA_VERSION = 1

MATCHED_MODEL = {
    Hypothesis.H11: TargetModel.DETERMINISTIC,
    Hypothesis.H12: TargetModel.FLUCTUATING,
    Hypothesis.H13: TargetModel.SWARM,
}


@dataclass(frozen=True)
class ExperimentPlan:
    scenario: ScenarioConfig
    target_bins: tuple
    sinr_db: tuple
    hypotheses: tuple = (Hypothesis.H11, Hypothesis.H12, Hypothesis.H13)
    detectors: tuple = (Scheme.PLUGIN, Scheme.LATENT)
    em: EmConfig = field(default_factory=EmConfig)
    calibration_trials: int = 10_000
    evaluation_trials: int = 200
    pfa: float = 1e-2
    seed: int = 0
    name: str = "experiment"
    target_model: str = "matched"
    chunk: int = 100
    output: str = "results"

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("target_bins", tuple(int(b) for b in self.target_bins))
        set_("sinr_db", tuple(float(s) for s in self.sinr_db))
        set_("hypotheses", tuple(Hypothesis.parse(h) for h in self.hypotheses))
        set_("detectors", tuple(Scheme(d) for d in self.detectors))
        if not self.sinr_db:
            raise InvalidInputError("SINR grid must not be empty")
        if any(b >= a for a, b in zip(self.sinr_db[1:], self.sinr_db)):
            raise InvalidInputError("SINR grid must be strictly ascending")
        if not self.hypotheses or any(not h.has_targets for h in self.hypotheses):
            raise InvalidInputError("hypotheses must be a non-empty subset of H11, H12, H13")
        if len(set(self.hypotheses)) != len(self.hypotheses):
            raise InvalidInputError("duplicate hypothesis")
        if not 0.0 < self.pfa < 1.0:
            raise InvalidInputError("pfa must lie in (0, 1)")
        if self.detectors and self.calibration_trials < min_calibration_runs(self.pfa):
            raise InvalidInputError(
                f"calibration needs at least {min_calibration_runs(self.pfa)} trials")
        if self.evaluation_trials < 1 or self.chunk < 1:
            raise InvalidInputError("trial counts and chunk size must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidInputError("seed must be an unsigned 64-bit integer")
        if self.target_model != "matched":
            TargetModel(self.target_model)
        # builds the scene once so that bad target bins fail here
        self.scene(self.hypotheses[0], self.sinr_db[0])

    def model_for(self, hypothesis):
        if self.target_model == "matched":
            return MATCHED_MODEL[Hypothesis(hypothesis)]
        return TargetModel(self.target_model)

    def scene(self, hypothesis, sinr_db):
        return self.scenario.with_targets(self.target_bins, sinr_db, self.model_for(hypothesis))

    def null_scene(self):
        return self.scenario.with_targets((), 0.0, TargetModel.DETERMINISTIC)

    def with_overrides(self, **changes):
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self):
        sc = self.scenario
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "scenario": {
                "channels": sc.n_channels,
                "aoa_deg": math.degrees(sc.aoa_rad),
                "noise_power": sc.noise_power,
                "regions": [{"bins": r.bins, "cnr_db": r.cnr_db, "rho": r.rho}
                            for r in sc.regions],
                "target_bins": list(self.target_bins),
                "target_model": self.target_model,
            },
            "sinr_db": list(self.sinr_db),
            "hypotheses": [h.value for h in self.hypotheses],
            "detectors": [d.value for d in self.detectors],
            "em": {k: v for k, v in asdict(self.em).items() if k != "seed"},
            "trials": {"calibration": self.calibration_trials,
                       "evaluation": self.evaluation_trials},
            "pfa": self.pfa,
            "seed": self.seed,
            "chunk": self.chunk,
            "output": self.output,
        }

    def digest(self):
        """SHA-256 of the canonical plan, ignoring where results are written."""
        d = self.to_dict()
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_TOP = {"schema", "name", "scenario", "sinr_db", "hypotheses", "detectors", "em",
        "trials", "pfa", "seed", "chunk", "output"}
_SCENARIO = {"channels", "aoa_deg", "noise_power", "regions", "target_bins", "target_model"}
_REGION = {"bins", "cnr_db", "rho"}
_EM = {"h_max", "m_max", "delta", "penalty_rho"}
_TRIALS = {"calibration", "evaluation"}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise InvalidInputError(f"{where} must be a mapping")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise InvalidInputError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _require(d, key, where):
    if key not in d:
        raise InvalidInputError(f"missing key {where}.{key}")
    return d[key]


def plan_from_dict(d):
    _check_keys(d, _TOP, "plan")
    if d.get("schema") != SCHEMA_VERSION:
        raise InvalidInputError(f"unsupported plan schema {d.get('schema')!r}; "
                                f"expected {SCHEMA_VERSION}")
    sc = _require(d, "scenario", "plan")
    _check_keys(sc, _SCENARIO, "scenario")
    regions = []
    for i, r in enumerate(_require(sc, "regions", "scenario")):
        _check_keys(r, _REGION, f"scenario.regions[{i}]")
        regions.append(ClutterRegion(int(_require(r, "bins", "region")),
                                     float(_require(r, "cnr_db", "region")),
                                     float(r.get("rho", 0.9))))
    scenario = ScenarioConfig(int(_require(sc, "channels", "scenario")), regions,
                              aoa_rad=math.radians(float(sc.get("aoa_deg", 0.0))),
                              noise_power=float(sc.get("noise_power", 1.0)))
    em = d.get("em", {})
    _check_keys(em, _EM, "em")
    trials = d.get("trials", {})
    _check_keys(trials, _TRIALS, "trials")
    defaults = EmConfig()
    em_config = EmConfig(h_max=int(em.get("h_max", defaults.h_max)),
                         m_max=int(em.get("m_max", defaults.m_max)),
                         delta=float(em.get("delta", defaults.delta)),
                         penalty_rho=float(em.get("penalty_rho", defaults.penalty_rho)))
    return ExperimentPlan(
        scenario=scenario,
        target_bins=sc.get("target_bins", ()),
        sinr_db=_require(d, "sinr_db", "plan"),
        hypotheses=d.get("hypotheses", ("H11", "H12", "H13")),
        detectors=d.get("detectors", ("plugin-lrt", "latent-lrt")),
        em=em_config,
        calibration_trials=int(trials.get("calibration", 10_000)),
        evaluation_trials=int(trials.get("evaluation", 200)),
        pfa=float(d.get("pfa", 1e-2)),
        seed=int(d.get("seed", 0)),
        name=str(d.get("name", "experiment")),
        target_model=str(sc.get("target_model", "matched")),
        chunk=int(d.get("chunk", 100)),
        output=str(d.get("output", "results")),
    )


def loads_plan(text):
    return plan_from_dict(yaml.safe_load(text))


def load_plan(path):
    with open(path, encoding="utf-8") as fh:
        return loads_plan(fh.read())


def dumps_plan(plan):
    return yaml.safe_dump(plan.to_dict(), sort_keys=False)
