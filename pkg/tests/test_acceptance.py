"""Acceptance gate: one test per criterion, each at its stated tolerance."""

import subprocess
import sys
import time

import numpy as np
import pytest

from seglab import harness as H
from seglab import problems as P
from seglab import verify as V
from seglab.rng import Stream


def _hard(records):
    return [r for r in records if r.hard]


def test_criterion_01_growth_factors(acceptance_report):
    t0 = time.perf_counter()
    records = V.growth_factor_checks()
    elapsed = time.perf_counter() - t0
    ok = all(r.passed for r in records) and len(records) == 3 and elapsed < 1.0
    detail = "; ".join(f"{r.check_name} {r.details}" for r in records) + f"; {elapsed:.2f}s"
    acceptance_report(1, "counterexample growth factors within 1e-12", ok, detail)


def test_criterion_02_egplus(acceptance_report):
    records = V.egplus_checks()
    ok = all(r.passed for r in records)
    detail = "; ".join(f"{r.check_name}={r.observed}" for r in records)
    acceptance_report(2, "EG+ (1+4eta^4) growth and equal-step nonexpansiveness", ok, detail)


def test_criterion_03_error_order(acceptance_report):
    t0 = time.perf_counter()
    slopes = V.error_order_slopes(seeds=32)
    elapsed = time.perf_counter() - t0
    ok = (2.85 <= slopes["SEG-FFA"] <= 3.15 and 1.85 <= slopes["SEG-RR"] <= 2.15
          and 1.85 <= slopes["SEG-FF"] <= 2.15 and elapsed < 30.0)
    detail = ", ".join(f"{k} {v:.3f}" for k, v in slopes.items()) + f"; {elapsed:.1f}s"
    acceptance_report(3, "within-epoch error slopes", ok, detail)


@pytest.mark.slow
def test_criterion_04_monotone(acceptance_report):
    cfg = H.preset_config("monotone", fast=True, checkpoint_stride=100)
    result = H.run_experiment(cfg)
    series = {label: dict(s) for label, s in _series(result).items()}
    ffa = series["SEG-FFA"]
    last_decade = [ffa[p] for p in (1000, 2000, 5000, 10000)]
    decreasing = all(b < a for a, b in zip(last_decade, last_decade[1:]))
    others = {m: _final(series[m], result, m) for m in ("SEG-US", "SEG-RR", "SEG-FF")}
    ok = ffa[10000] < 0.5 and decreasing and all(v > 1 for v in others.values())
    detail = (f"FFA at 1e3/2e3/5e3/1e4: {', '.join(f'{v:.3e}' for v in last_decade)}; "
              + ", ".join(f"{m} {v:.3e}" for m, v in others.items()))
    acceptance_report(4, "monotone: FFA converges, US/RR/FF ratio > 1 at 1e4 passes", ok, detail)


def _series(result):
    rows = result.aggregate_rows()
    out = {}
    for p, label, g in rows:
        out.setdefault(label, []).append((p, g))
    return out


def _final(series, result, label):
    # a run that stopped on a non-finite value has exceeded every finite ratio
    pos = result.labels.index(label)
    if any(result.records[(pos, i)].diverged for i in range(result.config.instance_count)):
        return float("inf")
    return series[max(series)]


@pytest.mark.slow
def test_criterion_05_strongly_monotone(acceptance_report):
    cfg = H.preset_config("strongly-monotone")
    assert cfg.budget_passes >= 30000
    result = H.run_experiment(cfg)
    finals = {m["method"]: m["final_geo_mean_ratio"] for m in result.summary()["methods"]}
    diverged = {m["method"] for m in result.summary()["methods"] if m["diverged_instances"]}
    for m in diverged:
        finals[m] = float("inf")
    best = min(finals, key=finals.get)
    ok = best == "SEG-FFA" and set(finals) == {"SGDA-US", "SGDA-RR", "SEG-US", "SEG-RR", "SEG-FF", "SEG-FFA"}
    detail = ", ".join(f"{k} {v:.3e}" for k, v in finals.items())
    acceptance_report(5, f"strongly monotone: FFA minimal after {cfg.budget_passes} passes", ok, detail)


def test_criterion_06_noise_floor(acceptance_report):
    records = V.noise_floor_checks()
    ok = all(r.passed for r in records)
    detail = "; ".join(f"{r.check_name}={r.observed:.3f}" if isinstance(r.observed, float)
                       else f"{r.check_name}={r.observed}" for r in records)
    acceptance_report(6, "noise-floor slopes 4 / 2 and FFA below RR", ok, detail)


def test_criterion_07_segus_floor(acceptance_report):
    records = V.segus_floor_checks(trials=1000)
    ok = all(r.passed for r in records) and len(records) == 10
    worst = [r.details for r in records if "mc-vs" in r.check_name]
    acceptance_report(7, "SEG-US floor recursion vs Monte Carlo and lower bound", ok, "; ".join(worst))


def test_criterion_08_phi(acceptance_report):
    records = _hard(V.phi_exact_checks() + V.phi_mc_checks(trials=10**6) + V.segrr_lb_checks())
    ok = all(r.passed for r in records)
    failed = [r.check_name for r in records if not r.passed]
    lb = [r.details for r in records if r.check_name.startswith("segrr-lb")]
    acceptance_report(8, "Phi moments exact/MC and SEG-RR lower-bound recursion", ok,
                      f"{len(records)} hard checks, failed={failed}; {lb[0]}")


def _fd_rel_error(comp, z, h=1e-5):
    exact = P.component_gradient(comp, z)
    fd = np.empty_like(z)
    for k in range(z.size):
        e = np.zeros_like(z)
        e[k] = h
        deriv = (comp.value(z + e) - comp.value(z - e)) / (2 * h)
        fd[k] = deriv if k < comp.d1 else -deriv
    return np.linalg.norm(fd - exact) / max(np.linalg.norm(exact), 1e-12)


def test_criterion_09_gradients(acceptance_report):
    instances = [
        P.gen_monotone(1, 4, 3, 6), P.gen_strongly_monotone(2, 3, 4, 5), P.divergence_example(1.7),
        P.variance_floor_example(1.2, 0.9), P.rr_lower_bound_example(4.0, 1.0, 1.0, 4, "seg"),
        P.rr_lower_bound_example(5.0, 2.0, 1.0, 4, "sgda"), P.bilinear_example(),
    ]
    s = Stream(2024)
    worst = 0.0
    for trial in range(100):
        prob = instances[trial % len(instances)]
        comp = prob.components[s.bounded(prob.n)]
        worst = max(worst, _fd_rel_error(comp, 3.0 * s.normal(prob.dim)))
    acceptance_report(9, "finite-difference gradients on 100 pairs", worst <= 1e-6, f"max rel error {worst:.2e}")


def test_criterion_10_determinism(tmp_path, acceptance_report):
    args = [sys.executable, "-m", "seglab", "run", "--preset", "monotone", "--budget", "2000",
            "--stride", "100", "--seed", "11"]
    for name in ("a", "b"):
        subprocess.run(args + ["--out", str(tmp_path / name)], check=True, capture_output=True)
    files = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same = [(tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files]
    ok = len(files) == 21 and all(same)
    acceptance_report(10, "seglab run twice gives byte-identical CSVs", ok, f"{sum(same)}/{len(files)} files identical")
