"""Result persistence: long-format CSV tables, manifests and plot data."""

import csv
import io
import math
import os
import re

from .. import __version__
from ..errors import InvalidInputError, MissingDataError

COLUMNS = ("experiment", "hypothesis", "detector", "sinr_db", "metric", "value",
           "ci_low", "ci_high", "n_trials", "seed", "version")
PLOT_COLUMNS = ("x", "y", "ci_low", "ci_high")
FIGURES = ("pd", "convergence", "convergence-sinr", "hausdorff", "rmsce")


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return "nan" if math.isnan(x) else repr(x)
    return str(x)


def _num(text):
    return None if text == "" else float(text)


class ResultTable:
    """Append-only long-format result rows.

    Every row carries the experiment name, master seed and code version.
    """

    def __init__(self, experiment, seed, version=__version__):
        self.experiment = experiment
        self.seed = int(seed)
        self.version = version
        self.rows = []

    def append(self, hypothesis, detector, sinr_db, metric, value,
               ci_low=None, ci_high=None, n=None):
        row = {
            "experiment": self.experiment, "hypothesis": hypothesis or "",
            "detector": detector or "",
            "sinr_db": None if sinr_db is None else float(sinr_db),
            "metric": metric, "value": float(value),
            "ci_low": None if ci_low is None else float(ci_low),
            "ci_high": None if ci_high is None else float(ci_high),
            "n_trials": None if n is None else int(n),
            "seed": self.seed, "version": self.version,
        }
        self.rows.append(row)
        return row

    def __len__(self):
        return len(self.rows)

    def select(self, **where):
        out = self.rows
        for key, want in where.items():
            if key == "sinr_db" and want is not None:
                out = [r for r in out if r["sinr_db"] is not None
                       and abs(r["sinr_db"] - float(want)) < 1e-9]
            else:
                out = [r for r in out if r[key] == want]
        return out

    def value(self, **where):
        rows = self.select(**where)
        if not rows:
            raise MissingDataError([_describe(where)])
        if len(rows) > 1:
            raise InvalidInputError(f"{len(rows)} rows match {_describe(where)}")
        return rows[0]["value"]

    def sinr_values(self):
        return sorted({r["sinr_db"] for r in self.rows if r["sinr_db"] is not None})

    def hypotheses(self):
        return sorted({r["hypothesis"] for r in self.rows if r["hypothesis"]})

    def detectors(self):
        return sorted({r["detector"] for r in self.rows if r["detector"]})

    def dumps(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
        return buf.getvalue()

    @classmethod
    def loads(cls, text):
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise InvalidInputError("unexpected result table header")
        table = None
        for rec in reader:
            if table is None:
                table = cls(rec["experiment"], int(rec["seed"]), rec["version"])
            table.rows.append({
                "experiment": rec["experiment"], "hypothesis": rec["hypothesis"],
                "detector": rec["detector"], "sinr_db": _num(rec["sinr_db"]),
                "metric": rec["metric"], "value": float(rec["value"]),
                "ci_low": _num(rec["ci_low"]), "ci_high": _num(rec["ci_high"]),
                "n_trials": None if rec["n_trials"] == "" else int(rec["n_trials"]),
                "seed": int(rec["seed"]), "version": rec["version"],
            })
        return table if table is not None else cls("", 0)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


def _describe(where):
    return ",".join(f"{k}={v}" for k, v in where.items() if v not in (None, ""))


def dumps_manifest(manifest):
    return "".join(f"{k}={manifest[k]}\n" for k in sorted(manifest))


def write_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_manifest(manifest))


def read_manifest(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                key, _, val = line.rstrip("\n").partition("=")
                out[key] = val
    return out


def _point(table, missing, x, **where):
    rows = table.select(**where)
    if len(rows) != 1:
        missing.append(_describe(where))
        return None
    r = rows[0]
    lo = r["value"] if r["ci_low"] is None else r["ci_low"]
    hi = r["value"] if r["ci_high"] is None else r["ci_high"]
    return (x, r["value"], lo, hi)


def _sweep(table, missing, metric, hyp, det=""):
    return [_point(table, missing, s, hypothesis=hyp, detector=det, sinr_db=s, metric=metric)
            for s in table.sinr_values()]


def plot_curves(table, figure, sinr_db=None, hypotheses=None, detectors=None):
    """Collect the curves behind one figure as ``{name: [(x, y, lo, hi), ...]}``.

    Raises
    ------
    MissingDataError
        Listing every absent (hypothesis, detector, SINR, metric) key.
    """
    if figure not in FIGURES:
        raise InvalidInputError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    if not table.rows:
        raise MissingDataError(["table is empty"])
    hyps = hypotheses or table.hypotheses()
    missing, curves = [], {}
    if figure == "pd":
        for hyp in hyps:
            for det in detectors or table.detectors():
                curves[f"pd_{det}_{hyp}"] = _sweep(table, missing, "pd", hyp, det)
    elif figure in ("hausdorff", "rmsce"):
        metric = "hausdorff_rms" if figure == "hausdorff" else "rmsce"
        for hyp in hyps:
            curves[f"{figure}_{hyp}"] = _sweep(table, missing, metric, hyp)
    else:
        steps = sorted({int(m.group(1)) for r in table.rows
                        for m in [re.fullmatch(r"delta_loglik\[(\d+)\]", r["metric"])] if m})
        if not steps:
            missing.append("metric=delta_loglik[h]")
        for hyp in hyps:
            if figure == "convergence":
                s = max(table.sinr_values()) if sinr_db is None else float(sinr_db)
                curves[f"convergence_{hyp}_{s:g}dB"] = [
                    _point(table, missing, h, hypothesis=hyp, detector="", sinr_db=s,
                           metric=f"delta_loglik[{h}]") for h in steps]
            elif steps:
                curves[f"convergence-sinr_{hyp}"] = _sweep(
                    table, missing, f"delta_loglik[{steps[-1]}]", hyp)
    if missing or not curves:
        raise MissingDataError(missing or [f"figure={figure}"])
    return curves


def emit_plotdata(table, figure, out_dir, **kw):
    """Write one CSV per curve with columns ``x, y, ci_low, ci_high``.

    Nothing is written unless every required row is present. Returns the
    written paths.
    """
    curves = plot_curves(table, figure, **kw)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, points in curves.items():
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PLOT_COLUMNS)
            for p in points:
                w.writerow([_fmt(float(v)) for v in p])
        paths.append(path)
    return paths
