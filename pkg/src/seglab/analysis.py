"""Numerical verifiers: exact expected epoch operators, within-epoch error
order, variance-floor recursions, Phi moments and noise floors.
"""

from __future__ import annotations

import itertools
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from seglab._backend import backend
from seglab.optimizers import (
    FF, US, MethodError, MethodSpec, run_epochs, seg_inner_step, step_sizes,
)
from seglab.problems import FiniteSumProblem, as_point, spectral_report, try_equilibrium
from seglab.rng import Stream, derive_seed
from seglab.schedules import Constant

MAX_ENUMERATE_N = 8
MAX_PHI_ENUMERATE_N = 10


class RegimeWarning(UserWarning):
    """Stepsize outside the regime where the asymptotic bounds apply."""


@dataclass(frozen=True)
class EpochErrorSample:
    eta: float
    error_norm: float
    in_regime: bool = True

    def __post_init__(self):
        if not math.isfinite(self.error_norm) or self.error_norm < 0:
            raise ValueError("error_norm must be finite and nonnegative")


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    stderr: float
    trials: int
    partial: bool = False

    @classmethod
    def from_samples(cls, values, partial: bool = False) -> "MomentEstimate":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return cls(math.nan, math.nan, 0, True)
        std = float(values.std(ddof=1)) if values.size > 1 else 0.0
        return cls(float(values.mean()), std / math.sqrt(values.size), int(values.size), partial)

    def agrees(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr


def worker_count() -> int:
    try:
        threads = int(os.environ.get("SEGLAB_THREADS", "0"))
    except ValueError:
        threads = 0
    return max(1, threads or (os.cpu_count() or 1))


def parallel_map(func, items, workers: Optional[int] = None) -> list:
    """Ordered map over a thread pool (the kernels release the GIL)."""
    items = list(items)
    workers = worker_count() if workers is None else max(1, workers)
    if workers == 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


# --- within-epoch error -------------------------------------------------------


def epoch_coupling(method: MethodSpec, eta: float) -> tuple[MethodSpec, float]:
    """Method and base stepsize whose epoch matches EG with stepsize ``eta * n`` to first order.

    SEG-FFA: beta = eta, alpha = eta/2. Single-pass methods: beta = eta with
    alpha from the method's rule. Two-pass SEG-FF: beta = eta/2.
    """
    if method.deterministic or method.family == "DSEG":
        raise MethodError(f"epoch error is not defined for {method.family}")
    if method.family in ("SEG-RRA", "SEG-USA"):
        # anchoring halves the drift, so the stepsize doubles
        return method, 2.0 * eta
    if method.family == "SEG-FF":
        return method, 0.5 * eta
    return method, eta


def eg_reference(problem: FiniteSumProblem, z, step: float) -> np.ndarray:
    G, c = problem.full_jacobian, problem.full_offset
    w = z - step * (G @ z + c)
    return z - step * (G @ w + c)


def epoch_error(method: MethodSpec, problem: FiniteSumProblem, z0, eta: float, seed: int) -> EpochErrorSample:
    """Distance between one epoch and the exact EG step with stepsize ``eta * n``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    z0 = as_point(z0, problem.dim)
    in_regime = eta * problem.n * spectral_report(problem).smoothness_L < 1.0
    if not in_regime:
        warnings.warn(f"eta={eta:g} violates eta < 1/(nL)", RegimeWarning, stacklevel=2)
    spec, beta = epoch_coupling(method, eta)
    z, _, _ = run_epochs(spec, problem, z0, 0, 1, Constant(beta), Stream(seed))
    err = float(np.linalg.norm(z - eg_reference(problem, z0, eta * problem.n)))
    return EpochErrorSample(float(eta), err, in_regime)


def epoch_error_curve(method: MethodSpec, problem, z0, etas, seeds) -> list[EpochErrorSample]:
    """Seed-averaged ``epoch_error`` for each ``eta``."""
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        for eta in etas:
            samples = [epoch_error(method, problem, z0, eta, s) for s in seeds]
            out.append(EpochErrorSample(
                float(eta), float(np.mean([s.error_norm for s in samples])), samples[0].in_regime,
            ))
    return out


def fit_error_order(samples) -> float:
    """Least-squares slope of log(error) against log(eta)."""
    usable = [s for s in samples if s.error_norm > 0]
    if len(usable) < len(samples):
        warnings.warn(f"excluded {len(samples) - len(usable)} zero-error samples", stacklevel=2)
    if len({s.eta for s in usable}) < 4:
        raise ValueError("need at least 4 samples with distinct eta and positive error")
    x = np.log([s.eta for s in usable])
    y = np.log([s.error_norm for s in usable])
    return float(np.polyfit(x, y, 1)[0])


# --- exact expected growth ------------------------------------------------------


def step_matrix(G_i: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Linear map of one SEG iteration on a zero-offset component, built column by column."""
    d = G_i.shape[0]
    grad = lambda v: G_i @ v
    return np.column_stack([seg_inner_step(e, grad, alpha, beta)[1] for e in np.eye(d)])


def _epoch_matrix(steps, order):
    M = np.eye(steps[0].shape[0])
    for i in order:
        M = steps[i] @ M
    return M


def exact_expected_growth(method, problem: FiniteSumProblem, alpha: float, beta: float,
                          per: str = "auto") -> float:
    """Largest eigenvalue of ``E[M^T M]`` for the random epoch (or iteration) matrix ``M``.

    ``per="iteration"`` averages one uniformly sampled SEG step (US methods only);
    ``per="epoch"`` averages a whole epoch. ``auto`` is iteration for SEG-US and
    epoch otherwise.
    """
    spec = method if isinstance(method, MethodSpec) else MethodSpec(method)
    if np.any(problem.offsets):
        raise ValueError("exact_expected_growth needs zero offsets (c_i = 0)")
    if problem.n > MAX_ENUMERATE_N:
        raise ValueError(f"n={problem.n} > {MAX_ENUMERATE_N}: use mc_expected_sq_norm instead")
    if spec.deterministic or spec.family == "DSEG":
        raise MethodError(f"{spec.family} is not supported")
    if per == "auto":
        per = "iteration" if spec.sampling == US else "epoch"
    n, d = problem.n, problem.dim
    steps = [step_matrix(G_i, alpha, beta) for G_i in problem.jacobians]

    if per == "iteration":
        if spec.sampling != US:
            raise ValueError("per-iteration growth is only defined for uniform sampling")
        avg = sum(S.T @ S for S in steps) / n
    elif spec.sampling == US:
        # E over n iid steps: X <- (1/n) sum S_i^T X S_i, innermost step last
        second = np.eye(d)
        for _ in range(n):
            second = sum(S.T @ second @ S for S in steps) / n
        avg = second
        if spec.anchored:
            # E[(M + I)^T (M + I)] / 4 with E[M] = (mean S)^n
            mean_m = np.linalg.matrix_power(sum(steps) / n, n)
            avg = 0.25 * (second + mean_m + mean_m.T + np.eye(d))
    else:
        orders = [list(p) for p in itertools.permutations(range(n))]
        if spec.sampling == FF:
            orders = [o + o[::-1] for o in orders]
        avg = _anchored_average(steps, orders) if spec.anchored else \
            sum(M.T @ M for M in (_epoch_matrix(steps, o) for o in orders)) / len(orders)
    return _top_eigenvalue(avg)


def _anchored_average(steps, orders):
    eye = np.eye(steps[0].shape[0])
    mats = [0.5 * (_epoch_matrix(steps, o) + eye) for o in orders]
    return sum(M.T @ M for M in mats) / len(mats)


def _top_eigenvalue(avg: np.ndarray) -> float:
    avg = 0.5 * (avg + avg.T)
    diag = np.diag(avg)
    off = avg - np.diag(diag)
    if not np.any(off) and np.all(diag == diag[0]):
        return float(diag[0])
    return float(np.linalg.eigvalsh(avg)[-1])


# --- Monte Carlo --------------------------------------------------------------


def _trial_path(method, problem, z0, schedule, epochs, seed, z_star):
    z = np.array(z0, dtype=np.float64)
    rng = Stream(seed)
    out = []
    for k in range(epochs):
        z, _, diverged = run_epochs(method, problem, z, k, 1, schedule, rng)
        if diverged:
            break
        diff = z if z_star is None else z - z_star
        with np.errstate(over="ignore", invalid="ignore"):
            value = float(diff @ diff)
        if not math.isfinite(value):
            break
        out.append(value)
    return out


def mc_expected_sq_norm(method: MethodSpec, problem: FiniteSumProblem, z0, schedule, epochs: int,
                        trials: int, master_seed: int, workers: Optional[int] = None) -> list[MomentEstimate]:
    """Per-epoch mean and stderr of ``||z_0^k - z*||^2`` over independent trials, k = 1..epochs."""
    if trials < 2:
        raise ValueError("trials must be >= 2")
    z0 = as_point(z0, problem.dim)
    z_star = try_equilibrium(problem)
    if z_star is not None and not np.any(z_star):
        z_star = None
    seeds = [derive_seed(master_seed, t) for t in range(trials)]
    paths = parallel_map(lambda s: _trial_path(method, problem, z0, schedule, epochs, s, z_star), seeds, workers)
    out = []
    for k in range(epochs):
        values = [p[k] for p in paths if len(p) > k]
        out.append(MomentEstimate.from_samples(values, partial=len(values) < trials))
    return out


# --- SEG-US variance floor -----------------------------------------------------


@dataclass(frozen=True)
class FloorRecursion:
    values: list
    coefficient: float
    fixed_point: Optional[float]


def segus_floor_recursion(alpha: float, beta: float, L: float, sigma: float, z0_sq: float,
                          steps: int) -> FloorRecursion:
    """Exact ``E||z_t||^2``, t = 0..steps, for SEG-US on ``variance_floor_example``."""
    if not (alpha > 0 and beta > 0):
        raise ValueError("alpha and beta must be positive")
    coef = 1.0 - 2 * alpha * beta * L**2 + beta**2 * L**2 * (1 + alpha**2 * L**2)
    drive = beta**2 * sigma**2 * (1 + alpha**2 * L**2)
    values = [float(z0_sq)]
    for _ in range(steps):
        values.append(coef * values[-1] + drive)
    fixed = drive / (1.0 - coef) if 0.0 < coef < 1.0 else None
    return FloorRecursion(values, coef, fixed)


def segus_floor_bound(gamma: float, L: float, sigma: float, z0_sq: float) -> float:
    return min(z0_sq, gamma * sigma**2 / (2 * L**2))


# --- Phi moments ----------------------------------------------------------------


def _check_phi_n(n: int) -> None:
    if n < 2 or n % 2:
        raise ValueError("n must be even and >= 2")


def phi_value(signs, q) -> object:
    """``sum_i s_i q^(n-i)`` by Horner's rule (works for floats and Fractions)."""
    acc = 0 * q
    for s in signs:
        acc = acc * q + s
    return acc


def phi_enumerate(n: int, nu) -> tuple[Fraction, Fraction]:
    """Exact ``(E[Phi], E[Phi^2])`` over all half/half sign arrangements."""
    _check_phi_n(n)
    if n > MAX_PHI_ENUMERATE_N:
        raise ValueError(f"enumeration supports n <= {MAX_PHI_ENUMERATE_N}")
    q = 1 - Fraction(nu)
    total, total_sq, count = Fraction(0), Fraction(0), 0
    for plus in itertools.combinations(range(n), n // 2):
        signs = [-1] * n
        for i in plus:
            signs[i] = 1
        value = phi_value(signs, q)
        total += value
        total_sq += value * value
        count += 1
    return total / count, total_sq / count


def phi_samples(n: int, nu: float, trials: int, seed: int) -> np.ndarray:
    _check_phi_n(n)
    return backend.phi_samples(Stream(seed).state, n, float(nu), int(trials))


def phi_moments(n: int, nu: float, mode: str = "enumerate", trials: int = 10**6,
                seed: int = 0) -> tuple[MomentEstimate, MomentEstimate]:
    _check_phi_n(n)
    if mode == "enumerate":
        mean, second = phi_enumerate(n, nu)
        count = math.comb(n, n // 2)
        return MomentEstimate(float(mean), 0.0, count), MomentEstimate(float(second), 0.0, count)
    if mode == "montecarlo":
        phi = phi_samples(n, nu, trials, seed)
        return MomentEstimate.from_samples(phi), MomentEstimate.from_samples(phi * phi)
    raise ValueError(f"unknown mode {mode!r}")


def phi_lower_bound(n: int, nu: float, c: float = 0.01) -> float:
    return c * min(1.0 + 1.0 / nu, n**3 * nu**2)


# --- SEG-RR lower-bound recursion ------------------------------------------------


def segrr_lb_contraction(L: float, alpha: float, beta: float) -> float:
    return 1.0 - beta * L / 2 + alpha * beta * L**2 / 4


def segrr_lb_recursion(L: float, sigma: float, n: int, alpha: float, beta: float, x2_sq0: float,
                       epochs: int) -> list[float]:
    """``E[(x_{0,2}^k)^2]`` for k = 0..epochs on the SEG-RR lower-bound instance."""
    q = segrr_lb_contraction(L, alpha, beta)
    if n <= MAX_PHI_ENUMERATE_N:
        phi_sq = phi_enumerate(n, 1 - Fraction(q))[1]
    else:
        phi_sq = phi_moments(n, 1 - q, "montecarlo")[1].mean
    drive = beta**2 * sigma**2 * (1 - alpha * L / 2) ** 2 * float(phi_sq)
    values = [float(x2_sq0)]
    for _ in range(epochs):
        values.append(q ** (2 * n) * values[-1] + drive)
    return values


def mc_coordinate_sq(method: MethodSpec, problem, z0, schedule, epochs: int, trials: int,
                     master_seed: int, coordinate: int, workers: Optional[int] = None) -> list[MomentEstimate]:
    """Per-epoch Monte Carlo estimate of ``E[z_coordinate^2]``."""
    z0 = as_point(z0, problem.dim)

    def path(seed):
        z = z0.copy()
        rng = Stream(seed)
        out = []
        for k in range(epochs):
            z, _, diverged = run_epochs(method, problem, z, k, 1, schedule, rng)
            if diverged:
                break
            out.append(float(z[coordinate]) ** 2)
        return out

    paths = parallel_map(path, [derive_seed(master_seed, t) for t in range(trials)], workers)
    return [MomentEstimate.from_samples([p[k] for p in paths if len(p) > k],
                                        partial=any(len(p) <= k for p in paths))
            for k in range(epochs)]


# --- noise floor -------------------------------------------------------------------


class FloorDivergence(ArithmeticError):
    pass


def _floor_trial(method, problem, eta, burn_in, window, seed, z_star, chunk=2048):
    z = z_star.copy()
    rng = Stream(seed)
    n = problem.n
    done = 0
    while done < burn_in:
        count = min(chunk, burn_in - done)
        alphas, betas = step_sizes(method, Constant(eta), n, done, count)
        got, diverged = backend.seg_epochs(problem.jacobians, problem.offsets, z, rng.state,
                                           method.sampling, method.anchored, alphas, betas, count)
        if diverged:
            raise FloorDivergence(f"{method.label} diverged at eta={eta:g}")
        done += got
    alphas, betas = step_sizes(method, Constant(eta), n, 0, 1)
    acc = 0.0
    for _ in range(window):
        _, diverged = backend.seg_epochs(problem.jacobians, problem.offsets, z, rng.state,
                                         method.sampling, method.anchored, alphas, betas, 1)
        if diverged:
            raise FloorDivergence(f"{method.label} diverged at eta={eta:g}")
        diff = z - z_star
        acc += float(diff @ diff)
    return acc / window


def noise_floor(method: MethodSpec, problem: FiniteSumProblem, eta: float, burn_in_epochs: int,
                window_epochs: int, trials: int, seed: int, workers: Optional[int] = None) -> MomentEstimate:
    """Stationary ``E||z_0^k - z*||^2`` under constant stepsize ``eta``.

    Each trial starts at ``z*``, runs ``burn_in_epochs`` and then averages the
    squared distance over ``window_epochs`` consecutive epochs.
    """
    if method.deterministic or method.family == "DSEG":
        raise MethodError(f"noise floor is not defined for {method.family}")
    if window_epochs < 1 or trials < 1 or burn_in_epochs < 0:
        raise ValueError("need window_epochs >= 1, trials >= 1, burn_in_epochs >= 0")
    z_star = try_equilibrium(problem)
    if z_star is None:
        raise ValueError("noise floor needs an equilibrium")
    seeds = [derive_seed(seed, t) for t in range(trials)]
    values = parallel_map(
        lambda s: _floor_trial(method, problem, eta, burn_in_epochs, window_epochs, s, z_star), seeds, workers,
    )
    return MomentEstimate.from_samples(values) if trials > 1 else MomentEstimate(values[0], 0.0, 1)


def floor_time_constant(problem: FiniteSumProblem, eta: float) -> int:
    """Epochs per e-fold of the deterministic drift, ``1 / (mu eta n)``."""
    mu = spectral_report(problem).strong_monotonicity_mu
    if mu <= 0:
        raise ValueError("noise floor needs a strongly monotone problem")
    return int(math.ceil(1.0 / (mu * eta * problem.n)))


@dataclass
class FloorCurve:
    etas: list
    floors: list = field(default_factory=list)

    @property
    def slope(self) -> float:
        return float(np.polyfit(np.log(self.etas), np.log([f.mean for f in self.floors]), 1)[0])


def floor_curve(method: MethodSpec, problem, etas, trials: int, seed: int, burn_tau: float = 5.0,
                window_tau: float = 10.0, workers: Optional[int] = None) -> FloorCurve:
    curve = FloorCurve(list(map(float, etas)))
    for eta in curve.etas:
        tau = floor_time_constant(problem, eta)
        curve.floors.append(noise_floor(method, problem, eta, int(burn_tau * tau),
                                        max(1, int(window_tau * tau)), trials, seed, workers))
    return curve


# --- report records ----------------------------------------------------------------


@dataclass
class CheckRecord:
    check_name: str
    expected: object
    observed: object
    tolerance: object
    passed: bool
    details: str = ""
    hard: bool = True

    def to_dict(self) -> dict:
        return {
            "check_name": self.check_name,
            "expected": _jsonable(self.expected),
            "observed": _jsonable(self.observed),
            "tolerance": _jsonable(self.tolerance),
            "pass": bool(self.passed),
            "hard": self.hard,
            "details": self.details,
        }


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value
