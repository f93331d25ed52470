import itertools
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seglab import analysis as A
from seglab import problems as P
from seglab.optimizers import MethodError, MethodSpec
from seglab.rng import Stream
from seglab.schedules import Constant


def _zero_offset(prob):
    comps = tuple(P.QuadraticComponent(c.a_mat, c.b_mat, c.c_mat, np.zeros(c.d1 + c.d2)) for c in prob.components)
    return P.FiniteSumProblem(comps)


def _brute_force_growth(prob, alpha, beta, orders, anchored=False):
    """Top eigenvalue of the mean of M^T M over equally likely index orders, by direct products."""
    d = prob.dim
    total = np.zeros((d, d))
    for order in orders:
        M = np.eye(d)
        for i in order:
            G = prob.jacobians[i]
            step = np.eye(d) - beta * G + alpha * beta * G @ G
            M = step @ M
        if anchored:
            M = 0.5 * (M + np.eye(d))
        total += M.T @ M
    avg = total / len(orders)
    return float(np.linalg.eigvalsh(0.5 * (avg + avg.T))[-1])


# --- growth factors ---------------------------------------------------------------


@given(st.floats(0.5, 4.0), st.floats(0.01, 0.49), st.floats(0.0, 1.0))
@settings(max_examples=30, deadline=None)
def test_growth_factor_closed_forms(L, bl, alpha_frac):
    beta = bl / L
    alpha = alpha_frac / L
    prob = P.divergence_example(L)
    assert A.exact_expected_growth("SEG-US", prob, alpha, beta) == pytest.approx(1 + bl**2 / 2, abs=1e-12)
    assert A.exact_expected_growth("SEG-RR", prob, alpha, beta) == pytest.approx(1 + bl**4 / 2, abs=1e-12)
    assert A.exact_expected_growth("SEG-FF", prob, alpha, beta) == pytest.approx(1 + 2 * bl**6, abs=1e-12)


@pytest.mark.parametrize("family,anchored", [("SEG-US", False), ("SEG-USA", True), ("SEG-RR", False),
                                             ("SEG-RRA", True), ("SEG-FF", False), ("SEG-FFA", True)])
def test_growth_matches_brute_force(family, anchored):
    prob = _zero_offset(P.gen_monotone(3, 2, 1, 4))
    n = prob.n
    spec = MethodSpec(family)
    beta = 0.05
    alpha = spec.alpha_factor * beta
    if family.startswith("SEG-US"):
        orders = list(itertools.product(range(n), repeat=n))
    else:
        orders = [list(p) for p in itertools.permutations(range(n))]
        if family.startswith("SEG-FF"):
            orders = [o + o[::-1] for o in orders]
    got = A.exact_expected_growth(spec, prob, alpha, beta, per="epoch")
    assert got == pytest.approx(_brute_force_growth(prob, alpha, beta, orders, anchored), rel=1e-12)


def test_growth_preconditions():
    with pytest.raises(ValueError):
        A.exact_expected_growth("SEG-RR", P.variance_floor_example(1.0, 1.0), 0.1, 0.1)
    with pytest.raises(ValueError):
        A.exact_expected_growth("SEG-RR", _zero_offset(P.gen_monotone(0, 1, 1, 10)), 0.1, 0.1)
    with pytest.raises(ValueError):
        A.exact_expected_growth("SEG-RR", P.divergence_example(1.0), 0.1, 0.1, per="iteration")
    with pytest.raises(MethodError):
        A.exact_expected_growth("EG", P.divergence_example(1.0), 0.1, 0.1)


def test_step_matrix_is_literal_composition():
    G = np.array([[1.0, 2.0], [-2.0, 0.5]])
    a, b = 0.3, 0.2
    np.testing.assert_allclose(A.step_matrix(G, a, b), np.eye(2) - b * G + a * b * G @ G, rtol=1e-14)


@pytest.mark.parametrize("family", ["SEG-US", "SEG-RR", "SEG-FF"])
def test_oracle_agreement_monte_carlo(family):
    L, beta = 2.0, 0.2
    z0 = np.array([1.0, -0.5])
    prob = P.divergence_example(L)
    exact = A.exact_expected_growth(family, prob, beta, beta, per="epoch") * float(z0 @ z0)
    est = A.mc_expected_sq_norm(MethodSpec(family), prob, z0, Constant(beta), 1, 4000, 21)[0]
    assert est.agrees(exact)


def test_mc_deterministic_method_has_zero_stderr():
    prob = P.gen_strongly_monotone(0, 2, 2, 2)
    est = A.mc_expected_sq_norm(MethodSpec("EG"), prob, np.ones(4), Constant(0.01), 3, 4, 0)
    assert len(est) == 3
    assert all(e.stderr == 0.0 for e in est)


def test_mc_is_reproducible_regardless_of_workers():
    prob = P.divergence_example(1.0)
    a = A.mc_expected_sq_norm(MethodSpec("SEG-RR"), prob, [1.0, 1.0], Constant(0.1), 3, 50, 4, workers=1)
    b = A.mc_expected_sq_norm(MethodSpec("SEG-RR"), prob, [1.0, 1.0], Constant(0.1), 3, 50, 4, workers=4)
    assert a == b
    with pytest.raises(ValueError):
        A.mc_expected_sq_norm(MethodSpec("SEG-RR"), prob, [1.0, 1.0], Constant(0.1), 3, 1, 4)


def test_mc_partial_coverage_flagged():
    prob = P.divergence_example(1.0)
    est = A.mc_expected_sq_norm(MethodSpec("SEG-US"), prob, [1e150, 1e150], Constant(1e10), 5, 4, 0)
    assert any(e.partial for e in est)


# --- epoch error --------------------------------------------------------------------


def test_fit_error_order_exact_power_law():
    samples = [A.EpochErrorSample(e, e**3) for e in (0.1, 0.05, 0.02, 0.01, 0.005)]
    assert A.fit_error_order(samples) == pytest.approx(3.0, abs=1e-9)


def test_fit_error_order_rejects_too_few():
    samples = [A.EpochErrorSample(e, e**2) for e in (0.1, 0.05, 0.02)] + [A.EpochErrorSample(0.01, 0.0)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(ValueError):
            A.fit_error_order(samples)
    with pytest.raises(ValueError):
        A.EpochErrorSample(0.1, math.nan)


def test_epoch_error_zero_field():
    comp = P.QuadraticComponent([[0.0]], [[0.0]], [[0.0]], [0.0, 0.0])
    prob = P.FiniteSumProblem((comp, comp))
    assert A.epoch_error(MethodSpec("SEG-FFA"), prob, [1.0, 2.0], 0.01, 0).error_norm == 0.0


def test_epoch_error_single_component_ffa_is_third_order():
    prob = P.FiniteSumProblem((P.QuadraticComponent([[1.0]], [[0.7]], [[0.3]], [0.2, -0.1]),))
    errs = [A.epoch_error(MethodSpec("SEG-FFA"), prob, [1.0, -1.0], eta, 0).error_norm for eta in (1e-2, 5e-3)]
    assert errs[1] > 0
    assert 6.5 <= errs[0] / errs[1] <= 9.5


def test_epoch_error_ffa_halving_ratio():
    prob = P.gen_monotone(0, 20, 20, 40)
    z0 = Stream(1).normal(prob.dim)
    seeds = range(8)
    curve = A.epoch_error_curve(MethodSpec("SEG-FFA"), prob, z0, [2.0**-11, 2.0**-12], seeds)
    assert 6.5 <= curve[0].error_norm / curve[1].error_norm <= 9.5


def test_epoch_error_regime_warning():
    prob = P.gen_monotone(0, 2, 2, 4)
    with pytest.warns(A.RegimeWarning):
        sample = A.epoch_error(MethodSpec("SEG-RR"), prob, np.ones(4), 1.0, 0)
    assert not sample.in_regime
    with pytest.raises(MethodError):
        A.epoch_error(MethodSpec("EG"), prob, np.ones(4), 0.01, 0)


def test_epoch_error_matches_eg_to_first_order():
    # error / (eta n)^1 -> 0: the epoch update agrees with EG at first order for every method
    prob = P.gen_monotone(1, 3, 3, 6)
    z0 = Stream(3).normal(prob.dim)
    for fam in ("SEG-RR", "SEG-FF", "SEG-FFA", "SEG-RRA", "SEG-US"):
        e1 = A.epoch_error(MethodSpec(fam), prob, z0, 1e-3, 0).error_norm
        e2 = A.epoch_error(MethodSpec(fam), prob, z0, 1e-4, 0).error_norm
        assert e2 / 1e-4 < e1 / 1e-3


# --- SEG-US variance floor ------------------------------------------------------------


def test_floor_recursion_fixed_point_example():
    rec = A.segus_floor_recursion(0.1, 0.1, 1.0, 1.0, 2.0, 5000)
    assert rec.fixed_point == pytest.approx(0.01 * 1.01 / 0.0099, rel=1e-12)
    assert rec.fixed_point == pytest.approx(1.0202, abs=1e-4)
    assert rec.values[-1] == pytest.approx(rec.fixed_point, rel=1e-9)
    assert rec.fixed_point >= A.segus_floor_bound(1.0, 1.0, 1.0, 2.0)


def test_floor_recursion_without_noise_decays():
    rec = A.segus_floor_recursion(0.2, 0.2, 1.0, 0.0, 1.0, 200)
    assert 0 < rec.coefficient < 1
    assert all(b < a for a, b in zip(rec.values, rec.values[1:]))
    assert rec.values[-1] < 1e-3


@given(st.floats(0.01, 0.5), st.floats(0.2, 3.0), st.floats(0.1, 10.0))
@settings(max_examples=60, deadline=None)
def test_floor_recursion_never_below_bound(alpha, gamma, z0_sq):
    rec = A.segus_floor_recursion(alpha, gamma * alpha, 1.0, 1.0, z0_sq, 300)
    assert min(rec.values) >= A.segus_floor_bound(gamma, 1.0, 1.0, z0_sq) - 1e-12


def test_floor_recursion_matches_simulation():
    alpha, beta = 0.2, 0.1
    prob = P.variance_floor_example(1.0, 1.0)
    spec = MethodSpec("SEG-US", alpha_scale=alpha / beta)
    est = A.mc_expected_sq_norm(spec, prob, [1.0, 1.0], Constant(beta), 10, 2000, 5)
    rec = A.segus_floor_recursion(alpha, beta, 1.0, 1.0, 2.0, 20)
    for k, e in enumerate(est):
        assert e.agrees(rec.values[2 * (k + 1)], k=3.5)


# --- Phi moments -------------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 4, 6, 8, 10])
def test_phi_mean_is_exactly_zero(n):
    assert A.phi_enumerate(n, Fraction(1, 7))[0] == 0


@given(st.fractions(min_value=Fraction(1, 100), max_value=Fraction(99, 100)))
@settings(max_examples=30, deadline=None)
def test_phi_n2_second_moment(nu):
    assert A.phi_enumerate(2, nu)[1] == nu * nu


def test_phi_value_horner():
    q = Fraction(1, 2)
    # s1 q^3 + s2 q^2 + s3 q + s4
    assert A.phi_value([1, -1, -1, 1], q) == Fraction(1, 8) - Fraction(1, 4) - Fraction(1, 2) + 1


def test_phi_monte_carlo_agrees():
    exact_mean, exact_second = A.phi_moments(6, 0.1)
    mean, second = A.phi_moments(6, 0.1, "montecarlo", 200000, 3)
    assert mean.agrees(exact_mean.mean)
    assert second.agrees(exact_second.mean)


def test_phi_errors():
    with pytest.raises(ValueError):
        A.phi_moments(3, 0.1)
    with pytest.raises(ValueError):
        A.phi_enumerate(12, 0.1)
    with pytest.raises(ValueError):
        A.phi_moments(4, 0.1, "guess")


def test_phi_samples_take_expected_values():
    values = A.phi_samples(2, 0.25, 1000, 0)
    assert set(np.round(values, 12)) == {0.25, -0.25}


# --- SEG-RR lower bound ------------------------------------------------------------------


def test_segrr_lb_recursion_vs_simulation():
    L, mu, sigma, n = 4.0, 1.0, 1.0, 4
    alpha, beta = 0.1, 0.05
    prob = P.rr_lower_bound_example(L, mu, sigma, n, "seg")
    predicted = A.segrr_lb_recursion(L, sigma, n, alpha, beta, 0.0, 3)
    assert predicted[0] == 0.0
    est = A.mc_coordinate_sq(MethodSpec("SEG-RR", alpha_scale=alpha / beta), prob, np.zeros(3),
                             Constant(beta), 3, 5000, 2, 1)
    for e, p in zip(est, predicted[1:]):
        assert e.agrees(p, k=3.5)


def test_segrr_lb_contraction():
    assert A.segrr_lb_contraction(4.0, 0.1, 0.05) == pytest.approx(1 - 0.1 + 0.02)


# --- noise floor ---------------------------------------------------------------------------


def test_noise_floor_zero_for_identical_components():
    comp = P.gen_strongly_monotone(0, 2, 2, 1).components[0]
    prob = P.FiniteSumProblem((comp, comp, comp))
    est = A.noise_floor(MethodSpec("SEG-RR"), prob, 1e-2, 200, 20, 3, 0)
    assert est.mean < 1e-20


def test_noise_floor_errors():
    prob = P.gen_strongly_monotone(0, 2, 2, 2)
    with pytest.raises(MethodError):
        A.noise_floor(MethodSpec("EG"), prob, 1e-2, 10, 10, 2, 0)
    with pytest.raises(A.FloorDivergence):
        A.noise_floor(MethodSpec("SEG-RR"), prob, 1e3, 2000, 1, 1, 0)
    with pytest.raises(ValueError):
        A.floor_time_constant(P.divergence_example(1.0), 0.1)


def test_floor_ffa_below_rr():
    prob = P.gen_strongly_monotone(0, 3, 3, 4)
    ffa = A.noise_floor(MethodSpec("SEG-FFA"), prob, 1e-3, 2000, 2000, 4, 1)
    rr = A.noise_floor(MethodSpec("SEG-RR"), prob, 1e-3, 2000, 2000, 4, 1)
    assert ffa.mean < rr.mean


# --- plumbing ------------------------------------------------------------------------------


def test_moment_estimate():
    est = A.MomentEstimate.from_samples([1.0, 2.0, 3.0, 4.0])
    assert est.mean == 2.5
    assert est.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert est.agrees(2.5 + 2 * est.stderr)
    assert not est.agrees(2.5 + 4 * est.stderr)
    assert A.MomentEstimate.from_samples([]).partial


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("SEGLAB_THREADS", "3")
    assert A.worker_count() == 3
    monkeypatch.setenv("SEGLAB_THREADS", "junk")
    assert A.worker_count() >= 1


def test_parallel_map_preserves_order():
    assert A.parallel_map(lambda x: x * x, range(20), workers=4) == [x * x for x in range(20)]


def test_check_record_json():
    rec = A.CheckRecord("x", np.float64(1.0), [np.int64(2)], math.inf, True)
    doc = rec.to_dict()
    assert doc == {"check_name": "x", "expected": 1.0, "observed": [2], "tolerance": "inf",
                   "pass": True, "hard": True, "details": ""}
