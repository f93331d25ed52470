"""Experiment orchestration: configs, presets, multi-instance runs and sweeps."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from seglab import problems as P
from seglab.analysis import parallel_map
from seglab.optimizers import MethodSpec, RunRecord, run
from seglab.rng import Stream, derive_seed
from seglab.schedules import DSEG_PRESETS, schedule_from_dict

AGGREGATE_HEADER = ["pass", "method", "geo_mean_ratio"]


class ConfigError(ValueError):
    pass


GENERATORS = {
    "monotone": P.gen_monotone,
    "strongly-monotone": P.gen_strongly_monotone,
}

COUNTEREXAMPLES = {
    "divergence": lambda p: P.divergence_example(p.get("L", 1.0)),
    "variance-floor": lambda p: P.variance_floor_example(p.get("L", 1.0), p.get("sigma", 1.0)),
    "rr-lb-seg": lambda p: P.rr_lower_bound_example(p.get("L", 4.0), p.get("mu", 1.0), p.get("sigma", 1.0),
                                                    int(p.get("n", 4)), "seg"),
    "rr-lb-sgda": lambda p: P.rr_lower_bound_example(p.get("L", 4.0), p.get("mu", 1.0), p.get("sigma", 1.0),
                                                     int(p.get("n", 4)), "sgda"),
    "bilinear": lambda p: P.bilinear_example(),
}


def _poly_auto():
    return {"kind": "poly", "eta0": "auto", "shift": 10.0, "exponent": 0.34}


PRESETS = {
    "monotone": {
        "problem": {"generator": "monotone", "d1": 20, "d2": 20, "n": 40},
        "methods": ["SEG-FFA", "SEG-FF", "SEG-RR", "SEG-US"],
        "schedule": _poly_auto(),
        "budget_passes": 100000,
        "checkpoint_stride": 500,
    },
    "strongly-monotone": {
        "problem": {"generator": "strongly-monotone", "d1": 20, "d2": 20, "n": 40},
        "methods": ["SGDA-US", "SGDA-RR", "SEG-US", "SEG-RR", "SEG-FF", "SEG-FFA"],
        "schedule": {"kind": "constant", "eta": 0.001},
        "budget_passes": 30000,
        "checkpoint_stride": 300,
    },
    "ablation": {
        "problem": {"generator": "monotone", "d1": 20, "d2": 20, "n": 40},
        "methods": ["SEG-FFA", "SEG-RRA", "SEG-RRA:half", "SEG-USA", "SEG-USA:half"],
        "schedule": _poly_auto(),
        "budget_passes": 100000,
        "checkpoint_stride": 500,
    },
    "dseg": {
        "problem": {"generator": "monotone", "d1": 20, "d2": 20, "n": 40},
        "methods": ["SEG-FFA", "DSEG:bilinear", "DSEG:general"],
        "schedule": _poly_auto(),
        "budget_passes": 100000,
        "checkpoint_stride": 500,
    },
}

FAST_BUDGET = 10000


@dataclass
class ExperimentConfig:
    problem: dict
    methods: list
    schedule: dict = field(default_factory=_poly_auto)
    schedules: dict = field(default_factory=dict)  # method position (as str) -> schedule override
    budget_passes: int = 10000
    checkpoint_stride: int = 100
    instance_count: int = 5
    master_seed: int = 0
    init: str = "normal"
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.instance_count < 1:
            raise ConfigError("instance_count must be >= 1")
        if not self.methods:
            raise ConfigError("method list is empty")
        if self.budget_passes < 0 or self.checkpoint_stride < 1:
            raise ConfigError("budget_passes must be >= 0 and checkpoint_stride >= 1")
        if self.init not in ("normal", "zero"):
            raise ConfigError("init must be 'normal' or 'zero'")
        self.schedules = dict(self.schedules)
        for pos, m in enumerate(self.methods):
            # "DSEG:<preset>" is shorthand for DSEG plus a dual-schedule override
            if isinstance(m, str) and m.upper().startswith("DSEG:"):
                self.schedules.setdefault(str(pos), {"kind": "dseg", "preset": m.split(":", 1)[1]})
        self.method_specs()

    def method_specs(self) -> list[MethodSpec]:
        try:
            return [m if isinstance(m, MethodSpec) else MethodSpec.from_dict(_strip_preset(m)) for m in self.methods]
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def schedule_doc(self, position: int) -> dict:
        return self.schedules.get(str(position), self.schedule)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "methods": [m.to_dict() if isinstance(m, MethodSpec) else m for m in self.methods],
            "schedule": self.schedule,
            "schedules": self.schedules,
            "budget_passes": self.budget_passes,
            "checkpoint_stride": self.checkpoint_stride,
            "instance_count": self.instance_count,
            "master_seed": self.master_seed,
            "init": self.init,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def _strip_preset(m):
    if isinstance(m, str) and m.upper().startswith("DSEG:"):
        return "DSEG"
    return m


def preset_config(name: str, fast: bool = False, **overrides) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    doc = copy.deepcopy(PRESETS[name])
    if fast:
        doc["budget_passes"] = FAST_BUDGET
        doc["checkpoint_stride"] = FAST_BUDGET // 100
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(doc)


# --- instances ----------------------------------------------------------------


@dataclass
class Instance:
    index: int
    problem: P.FiniteSumProblem
    z0: np.ndarray
    run_seed: int
    smoothness_L: float


def instance_seeds(master_seed: int, index: int) -> tuple[int, int, int]:
    """(problem seed, initial-point seed, run seed) for instance ``index``."""
    base = derive_seed(master_seed, index)
    return derive_seed(base, 0), derive_seed(base, 1), derive_seed(base, 2)


def build_problem(source: dict, seed: int) -> P.FiniteSumProblem:
    if "path" in source:
        return P.load_problem(source["path"])
    if "generator" in source:
        gen = GENERATORS.get(source["generator"])
        if gen is None:
            raise ConfigError(f"unknown generator {source['generator']!r}")
        return gen(int(source.get("seed", seed)), int(source["d1"]), int(source["d2"]), int(source["n"]))
    if "counterexample" in source:
        make = COUNTEREXAMPLES.get(source["counterexample"])
        if make is None:
            raise ConfigError(f"unknown counterexample {source['counterexample']!r}")
        return make(source.get("params", {}))
    raise ConfigError("problem source needs 'generator', 'path' or 'counterexample'")


def build_instances(config: ExperimentConfig) -> list[Instance]:
    out = []
    for i in range(config.instance_count):
        problem_seed, init_seed, run_seed = instance_seeds(config.master_seed, i)
        problem = build_problem(config.problem, problem_seed)
        if config.init == "normal":
            z0 = Stream(init_seed).normal(problem.dim)
        else:
            z0 = np.zeros(problem.dim)
        L = P.spectral_report(problem).smoothness_L
        out.append(Instance(i, problem, z0, run_seed, L))
    return out


def resolve_schedule(doc: dict, L: float):
    doc = dict(doc)
    if doc.get("kind") == "poly" and doc.get("eta0") == "auto":
        doc["eta0"] = min(0.01, 1.0 / L) if L > 0 else 0.01
    if doc.get("kind") == "dseg" and "preset" in doc:
        if doc["preset"] not in DSEG_PRESETS:
            raise ConfigError(f"unknown DSEG preset {doc['preset']!r}")
        return DSEG_PRESETS[doc["preset"]]
    try:
        return schedule_from_dict(doc)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


# --- running ------------------------------------------------------------------


@dataclass
class Cell:
    position: int
    method: MethodSpec
    instance: Instance
    schedule: object


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    labels: list
    records: dict  # (position, instance index) -> RunRecord

    def aggregate_rows(self) -> list[tuple[int, str, float]]:
        rows = []
        for pos, label in enumerate(self.labels):
            recs = [self.records[(pos, i)] for i in range(self.config.instance_count)]
            rows.extend((p, label, g) for p, g in geo_mean_series(recs))
        return rows

    def summary(self) -> dict:
        methods = []
        for pos, label in enumerate(self.labels):
            recs = [self.records[(pos, i)] for i in range(self.config.instance_count)]
            series = geo_mean_series(recs)
            methods.append({
                "method": label,
                "diverged_instances": [i for i, r in enumerate(recs) if r.diverged],
                "final_pass": series[-1][0] if series else 0,
                "final_geo_mean_ratio": series[-1][1] if series else math.nan,
            })
        return {"methods": methods}


def method_labels(specs, config: Optional[ExperimentConfig] = None) -> list[str]:
    labels = []
    for pos, spec in enumerate(specs):
        label = spec.label
        doc = config.schedule_doc(pos) if config is not None else {}
        if spec.family == "DSEG" and "preset" in doc:
            label = f"DSEG({doc['preset']})"
        if label in labels:
            label = f"{label}#{sum(1 for l in labels if l.split('#')[0] == label) + 1}"
        labels.append(label)
    return labels


def geo_mean_series(records) -> list[tuple[int, float]]:
    """Geometric mean of ratios at passes every record reached with a finite value."""
    common = None
    tables = []
    for rec in records:
        table = {c.pass_index: r for c, r in zip(rec.checkpoints, rec.ratios)
                 if math.isfinite(r) and r > 0}
        tables.append(table)
        common = set(table) if common is None else common & set(table)
    out = []
    for p in sorted(common or ()):
        logs = [math.log(t[p]) for t in tables]
        out.append((p, math.exp(sum(logs) / len(logs))))
    return out


def _run_cell(cell: Cell, config: ExperimentConfig) -> RunRecord:
    return run(cell.method, cell.instance.problem, cell.instance.z0, cell.schedule,
               config.budget_passes, config.checkpoint_stride, cell.instance.run_seed)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None,
                   instances: Optional[list] = None) -> ExperimentResult:
    specs = config.method_specs()
    instances = build_instances(config) if instances is None else instances
    cells = []
    for pos, spec in enumerate(specs):
        for inst in instances:
            cells.append(Cell(pos, spec, inst, resolve_schedule(config.schedule_doc(pos), inst.smoothness_L)))
    records = parallel_map(lambda c: _run_cell(c, config), cells, workers)
    table = {(c.position, c.instance.index): r for c, r in zip(cells, records)}
    return ExperimentResult(config, method_labels(specs, config), table)


# --- output -------------------------------------------------------------------


def aggregate_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(AGGREGATE_HEADER)
    for p, label, g in rows:
        writer.writerow([p, label, repr(float(g))])
    return buf.getvalue()


def safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label).strip("_")


def write_experiment(result: ExperimentResult, out_dir) -> list[Path]:
    """Write per-run CSVs, the aggregate CSV, a summary and the resolved config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for (pos, i), rec in sorted(result.records.items()):
        path = out / f"{safe_name(result.labels[pos])}-{i}.csv"
        path.write_text(rec.to_csv())
        written.append(path)
    agg = out / "aggregate.csv"
    agg.write_text(aggregate_csv(result.aggregate_rows()))
    summary = out / "summary.json"
    summary.write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    cfg = out / "config.json"
    cfg.write_text(json.dumps(result.config.to_dict(), indent=2, sort_keys=True) + "\n")
    return written + [agg, summary, cfg]


# --- sweeps ---------------------------------------------------------------------


SWEEP_HEADER = ["eta", "pass", "method", "geo_mean_ratio"]


def stepsize_grid(mantissas, exponents) -> list[float]:
    grid = sorted({float(f"{a}e{b}") for a in mantissas for b in exponents})
    if not grid:
        raise ConfigError("stepsize grid is empty")
    return grid


def run_sweep(config: ExperimentConfig, etas, workers: Optional[int] = None) -> list[tuple[float, ExperimentResult]]:
    """One experiment per constant stepsize; DSEG cells keep their own schedule."""
    if not etas:
        raise ConfigError("stepsize grid is empty")
    instances = build_instances(config)
    specs = config.method_specs()
    cells = []
    for eta in etas:
        for pos, spec in enumerate(specs):
            doc = config.schedule_doc(pos)
            sched_doc = doc if spec.family == "DSEG" else {"kind": "constant", "eta": eta}
            for inst in instances:
                cells.append((eta, Cell(pos, spec, inst, resolve_schedule(sched_doc, inst.smoothness_L))))
    records = parallel_map(lambda ec: _run_cell(ec[1], config), cells, workers)
    labels = method_labels(specs, config)
    out = []
    for eta in etas:
        table = {(c.position, c.instance.index): r for (e, c), r in zip(cells, records) if e == eta}
        out.append((eta, ExperimentResult(config, labels, table)))
    return out


def sweep_csv(results) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for eta, result in results:
        for p, label, g in result.aggregate_rows():
            writer.writerow([repr(float(eta)), p, label, repr(float(g))])
    return buf.getvalue()


def read_aggregate(path) -> dict[str, list[tuple[int, float]]]:
    """Parse an aggregate CSV into ``{method: [(pass, ratio), ...]}``."""
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != AGGREGATE_HEADER:
        raise ConfigError(f"{path}: expected header {','.join(AGGREGATE_HEADER)}, got {header}")
    series: dict = {}
    for row in reader:
        if not row:
            continue
        if len(row) != 3:
            raise ConfigError(f"{path}: malformed row {row}")
        try:
            series.setdefault(row[1], []).append((int(row[0]), float(row[2])))
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not series:
        raise ConfigError(f"{path}: no data rows")
    return series
