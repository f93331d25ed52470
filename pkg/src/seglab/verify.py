"""Verification suites with fixed default parameters.

Each suite returns a list of ``CheckRecord``. Hard checks decide the exit
status; soft checks are reported only.
"""

from __future__ import annotations

import numpy as np

from seglab import analysis as A
from seglab import problems as P
from seglab.optimizers import MethodSpec, eg_plus_step
from seglab.rng import Stream, derive_seed
from seglab.schedules import Constant

SUITES = ("counterexamples", "error-order", "floor", "phi")
ERROR_ORDER_ETAS = tuple(2.0 ** -k for k in range(14, 7, -1))


def _pairs(seed: int, count: int):
    """Random (beta, L) with beta * L in (0, 0.5)."""
    s = Stream(seed)
    out = []
    for _ in range(count):
        L = s.uniform(low=0.5, high=4.0)
        bl = s.uniform(low=0.01, high=0.5)
        out.append((bl / L, L))
    return out


def growth_factor_checks(pairs=None, tol: float = 1e-12) -> list[A.CheckRecord]:
    pairs = _pairs(101, 20) if pairs is None else pairs
    forms = {
        "SEG-US": lambda b, L: 1 + b**2 * L**2 / 2,
        "SEG-RR": lambda b, L: 1 + b**4 * L**4 / 2,
        "SEG-FF": lambda b, L: 1 + 2 * b**6 * L**6,
    }
    alpha_stream = Stream(102)
    records = []
    for family, form in forms.items():
        worst, worst_at = 0.0, None
        for beta, L in pairs:
            alpha = alpha_stream.uniform(low=0.0, high=1.0 / L)
            got = A.exact_expected_growth(family, P.divergence_example(L), alpha, beta)
            err = abs(got - form(beta, L))
            if err > worst or worst_at is None:
                worst, worst_at = err, (beta, L, got, form(beta, L))
        per = "iteration" if family == "SEG-US" else "epoch"
        records.append(A.CheckRecord(
            f"growth-factor/{family}", worst_at[3], worst_at[2], tol, worst <= tol,
            f"max abs error {worst:.3e} over {len(pairs)} (beta, L) pairs, per {per}",
        ))
    return records


def egplus_checks(tol: float = 1e-12) -> list[A.CheckRecord]:
    prob = P.bilinear_example()
    etas = [0.05 * k for k in range(1, 11)]
    z = np.array([0.6, -0.8])
    worst = 0.0
    for eta in etas:
        z_new = eg_plus_step(prob, z, eta, 2 * eta)
        worst = max(worst, abs((z_new @ z_new) / (z @ z) - (1 + 4 * eta**4)))
    nonexp = all(
        np.sum(eg_plus_step(prob, z, eta, eta) ** 2) <= z @ z + 1e-15
        for eta in np.linspace(0.05, 1.0, 20)
    )
    return [
        A.CheckRecord("egplus/ratio-two", "1+4eta^4", worst, tol, worst <= tol,
                      f"max abs error over {len(etas)} stepsizes"),
        A.CheckRecord("egplus/equal-nonexpansive", True, nonexp, 0.0, nonexp,
                      "eta1 = eta2 = eta <= 1 on f = xy"),
    ]


def oracle_agreement_checks(trials: int = 4000, seed: int = 7) -> list[A.CheckRecord]:
    records = []
    L, beta = 2.0, 0.2
    z0 = np.array([1.0, -0.5])
    prob = P.divergence_example(L)
    for family in ("SEG-US", "SEG-RR", "SEG-FF"):
        spec = MethodSpec(family)
        exact = A.exact_expected_growth(family, prob, beta, beta, per="epoch")
        est = A.mc_expected_sq_norm(spec, prob, z0, Constant(beta), 1, trials, seed)[0]
        # the epoch average is a multiple of the identity on this instance
        expected = exact * float(z0 @ z0)
        records.append(A.CheckRecord(
            f"oracle-agreement/{family}", expected, est.mean, 3 * est.stderr, est.agrees(expected),
            f"{trials} trials, beta={beta}, L={L}",
        ))
    return records


def counterexample_suite() -> list[A.CheckRecord]:
    return growth_factor_checks() + egplus_checks() + oracle_agreement_checks()


def error_order_slopes(seeds: int = 32, instance_seed: int = 0, etas=ERROR_ORDER_ETAS,
                       alpha_rule: str = "half") -> dict[str, float]:
    prob = P.gen_monotone(instance_seed, 20, 20, 40)
    z0 = Stream(derive_seed(instance_seed, 1)).normal(prob.dim)
    seed_list = [derive_seed(instance_seed + 1000, s) for s in range(seeds)]
    out = {}
    for family in ("SEG-FFA", "SEG-RR", "SEG-FF"):
        spec = MethodSpec(family, alpha_rule=alpha_rule)
        out[family] = A.fit_error_order(A.epoch_error_curve(spec, prob, z0, etas, seed_list))
    return out


def error_order_suite() -> list[A.CheckRecord]:
    slopes = error_order_slopes()
    records = [
        A.CheckRecord("error-order/SEG-FFA", 3.0, slopes["SEG-FFA"], 0.15, abs(slopes["SEG-FFA"] - 3) <= 0.15),
        A.CheckRecord("error-order/SEG-RR", 2.0, slopes["SEG-RR"], 0.15, abs(slopes["SEG-RR"] - 2) <= 0.15),
        A.CheckRecord("error-order/SEG-FF", 2.0, slopes["SEG-FF"], 0.15, abs(slopes["SEG-FF"] - 2) <= 0.15),
    ]
    gap = slopes["SEG-FFA"] - max(slopes["SEG-RR"], slopes["SEG-FF"])
    records.append(A.CheckRecord("error-order/separation", ">= 0.6", gap, 0.6, gap >= 0.6))
    return records


FLOOR_SETTINGS = ((0.1, 1.0), (0.2, 0.5), (0.05, 2.0), (0.3, 1.0), (0.15, 1.5))


def segus_floor_checks(trials: int = 1000, epochs: int = 20, seed: int = 7, L: float = 1.0,
                       sigma: float = 1.0, z0=(1.0, 1.0)) -> list[A.CheckRecord]:
    prob = P.variance_floor_example(L, sigma)
    z0 = np.asarray(z0, dtype=np.float64)
    z0_sq = float(z0 @ z0)
    records = []
    for idx, (alpha, gamma) in enumerate(FLOOR_SETTINGS):
        beta = gamma * alpha
        spec = MethodSpec("SEG-US", alpha_scale=1.0 / gamma)
        est = A.mc_expected_sq_norm(spec, prob, z0, Constant(beta), epochs, trials, derive_seed(seed, idx))
        rec = A.segus_floor_recursion(alpha, beta, L, sigma, z0_sq, prob.n * epochs)
        predicted = [rec.values[prob.n * (k + 1)] for k in range(epochs)]
        z_scores = [(e.mean - p) / e.stderr for e, p in zip(est, predicted)]
        worst = max(abs(z) for z in z_scores)
        records.append(A.CheckRecord(
            f"segus-floor/mc-vs-recursion/alpha={alpha},gamma={gamma}", predicted[-1], est[-1].mean,
            "3 stderr", worst <= 3.0, f"max |z| = {worst:.2f} over {epochs} epochs, {trials} trials",
        ))
        bound = A.segus_floor_bound(gamma, L, sigma, z0_sq)
        lowest = min(rec.values)
        records.append(A.CheckRecord(
            f"segus-floor/lower-bound/alpha={alpha},gamma={gamma}", bound, lowest, 0.0, lowest >= bound,
            f"fixed point {rec.fixed_point}",
        ))
    return records


FLOOR_ETAS = (1e-4, 2e-4, 5e-4, 1e-3)


def floor_instance(seed: int = 0) -> P.FiniteSumProblem:
    return P.gen_strongly_monotone(seed, 5, 5, 4)


def noise_floor_curves(problem=None, etas=FLOOR_ETAS, trials: int = 8, seed: int = 3):
    problem = floor_instance() if problem is None else problem
    return {
        family: A.floor_curve(MethodSpec(family), problem, etas, trials, seed)
        for family in ("SEG-FFA", "SEG-RR")
    }


def noise_floor_checks(curves=None) -> list[A.CheckRecord]:
    curves = noise_floor_curves() if curves is None else curves
    ffa, rr = curves["SEG-FFA"], curves["SEG-RR"]
    below = all(f.mean < r.mean for f, r in zip(ffa.floors, rr.floors))
    return [
        A.CheckRecord("noise-floor/slope/SEG-FFA", 4.0, ffa.slope, 0.5, abs(ffa.slope - 4) <= 0.5),
        A.CheckRecord("noise-floor/slope/SEG-RR", 2.0, rr.slope, 0.5, abs(rr.slope - 2) <= 0.5),
        A.CheckRecord("noise-floor/FFA-below-RR", True, below, 0.0, below,
                      ", ".join(f"{e:g}: {f.mean:.3e} vs {r.mean:.3e}"
                                for e, f, r in zip(ffa.etas, ffa.floors, rr.floors))),
    ]


def floor_suite() -> list[A.CheckRecord]:
    return segus_floor_checks() + noise_floor_checks()


PHI_NU = 1.0 / 16


def phi_exact_checks() -> list[A.CheckRecord]:
    records = []
    for n in (2, 4, 6, 8, 10):
        mean, _ = A.phi_enumerate(n, PHI_NU)
        records.append(A.CheckRecord(f"phi/mean-zero/n={n}", 0, float(mean), 0, mean == 0))
    for nu in (PHI_NU, 0.3, 0.7):
        second = A.phi_moments(2, nu)[1].mean
        records.append(A.CheckRecord(f"phi/n=2-second/nu={nu}", nu * nu, second, 0, second == nu * nu))
    return records


def phi_mc_checks(trials: int = 10**6, seed: int = 5) -> list[A.CheckRecord]:
    records = []
    for n in (4, 6, 8):
        exact_mean, exact_second = A.phi_moments(n, PHI_NU)
        mc_mean, mc_second = A.phi_moments(n, PHI_NU, "montecarlo", trials, derive_seed(seed, n))
        ok = mc_mean.agrees(exact_mean.mean) and mc_second.agrees(exact_second.mean)
        records.append(A.CheckRecord(
            f"phi/mc-vs-enumerate/n={n}", exact_second.mean, mc_second.mean, 3 * mc_second.stderr, ok,
            f"mean {mc_mean.mean:.3e} +- {mc_mean.stderr:.1e}",
        ))
        phi = A.phi_samples(n, PHI_NU, trials, derive_seed(seed, 100 + n))
        third = A.MomentEstimate.from_samples(phi**3)
        records.append(A.CheckRecord(f"phi/symmetry/n={n}", 0.0, third.mean, 3 * third.stderr,
                                     third.agrees(0.0), "third moment", hard=False))
    exact_second = A.phi_moments(8, PHI_NU)[1].mean
    bound = A.phi_lower_bound(8, PHI_NU)
    records.append(A.CheckRecord("phi/lower-bound-soft/n=8", bound, exact_second, "c=0.01",
                                 exact_second >= bound, "unknown constant, reported only", hard=False))
    return records


def segrr_lb_checks(trials: int = 20000, seed: int = 11, epochs: int = 5) -> list[A.CheckRecord]:
    L, mu, sigma, n = 4.0, 1.0, 1.0, 4
    alpha, beta = 0.1, 0.05
    prob = P.rr_lower_bound_example(L, mu, sigma, n, "seg")
    predicted = A.segrr_lb_recursion(L, sigma, n, alpha, beta, 0.0, epochs)[1:]
    spec = MethodSpec("SEG-RR", alpha_scale=alpha / beta)
    est = A.mc_coordinate_sq(spec, prob, np.zeros(prob.dim), Constant(beta), epochs, trials, seed, 1)
    z_scores = [(e.mean - p) / e.stderr for e, p in zip(est, predicted)]
    worst = max(abs(z) for z in z_scores)
    return [A.CheckRecord("segrr-lb/recursion-vs-mc", predicted, [e.mean for e in est], "3 stderr",
                          worst <= 3.0, f"max |z| = {worst:.2f}, {trials} trials")]


def phi_suite() -> list[A.CheckRecord]:
    return phi_exact_checks() + phi_mc_checks() + segrr_lb_checks()


SUITE_FUNCS = {
    "counterexamples": counterexample_suite,
    "error-order": error_order_suite,
    "floor": floor_suite,
    "phi": phi_suite,
}


def run_suite(name: str) -> dict:
    if name == "all":
        checks = [c for s in SUITES for c in SUITE_FUNCS[s]()]
    elif name in SUITE_FUNCS:
        checks = SUITE_FUNCS[name]()
    else:
        raise ValueError(f"unknown suite {name!r}")
    passed = all(c.passed for c in checks if c.hard)
    return {"suite": name, "checks": [c.to_dict() for c in checks], "passed": passed}
