"""Stochastic extragradient methods over finite-sum quadratic problems.

Each epoch is delegated to ``backend.seg_epochs`` (compiled when available),
which takes one (alpha, beta) pair per inner step. Everything here is about
building those arrays and bookkeeping around them.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from seglab._backend import backend
from seglab.problems import FiniteSumProblem, as_point, full_gradient, try_equilibrium
from seglab.rng import Stream, bounded
from seglab.schedules import DSEGDual, describe

US, RR, FF, DSEG = 0, 1, 2, 3

# family -> (sampling code, anchored, sgda)
_FAMILIES = {
    "SGDA-US": (US, False, True),
    "SGDA-RR": (RR, False, True),
    "SEG-US": (US, False, False),
    "SEG-RR": (RR, False, False),
    "SEG-FF": (FF, False, False),
    "SEG-FFA": (FF, True, False),
    "SEG-RRA": (RR, True, False),
    "SEG-USA": (US, True, False),
    "DSEG": (DSEG, False, False),
    "EG": (None, False, False),
    "EGPLUS": (None, False, False),
}
FAMILIES = tuple(_FAMILIES)
STOCHASTIC = tuple(f for f, spec in _FAMILIES.items() if spec[0] is not None)


class MethodError(ValueError):
    pass


@dataclass(frozen=True)
class MethodSpec:
    """Method identifier plus the extrapolation coupling.

    ``alpha_rule`` is ``"equal"`` (alpha = beta) or ``"half"`` (alpha = beta/2);
    ``alpha_scale`` overrides both with alpha = alpha_scale * beta. SEG-FFA
    always uses the half rule. ``egplus_ratio`` is eta2/eta1 for EGPLUS.
    """

    family: str
    alpha_rule: str = "equal"
    alpha_scale: Optional[float] = None
    egplus_ratio: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise MethodError(f"unknown method family {self.family!r}")
        if self.alpha_rule not in ("equal", "half"):
            raise MethodError(f"alpha_rule must be 'equal' or 'half', got {self.alpha_rule!r}")
        if self.family == "SEG-FFA" and (self.alpha_rule != "half" or self.alpha_scale is not None):
            object.__setattr__(self, "alpha_rule", "half")
            object.__setattr__(self, "alpha_scale", None)
        if self.alpha_scale is not None and self.alpha_scale < 0:
            raise MethodError("alpha_scale must be nonnegative")
        if not self.egplus_ratio > 0:
            raise MethodError("egplus_ratio must be positive")

    @property
    def sampling(self):
        return _FAMILIES[self.family][0]

    @property
    def anchored(self) -> bool:
        return _FAMILIES[self.family][1]

    @property
    def deterministic(self) -> bool:
        return self.sampling is None

    @property
    def alpha_factor(self) -> float:
        if _FAMILIES[self.family][2]:
            return 0.0
        if self.alpha_scale is not None:
            return float(self.alpha_scale)
        return 1.0 if self.alpha_rule == "equal" else 0.5

    @property
    def passes_per_epoch(self) -> int:
        return 2 if self.sampling == FF else 1

    def steps_per_epoch(self, n: int) -> int:
        if self.deterministic:
            return 1
        return 2 * n if self.sampling == FF else n

    @property
    def label(self) -> str:
        tunable = self.family in ("SEG-US", "SEG-RR", "SEG-FF", "SEG-RRA", "SEG-USA")
        if tunable and self.alpha_scale is not None:
            return f"{self.family}(a={self.alpha_scale:g}b)"
        if tunable and self.alpha_rule == "half":
            return f"{self.family}(a=b/2)"
        if self.family == "EGPLUS":
            return f"EGPLUS(r={self.egplus_ratio:g})"
        return self.family

    def to_dict(self) -> dict:
        doc = {"family": self.family, "alpha_rule": self.alpha_rule}
        if self.alpha_scale is not None:
            doc["alpha_scale"] = self.alpha_scale
        if self.family == "EGPLUS":
            doc["egplus_ratio"] = self.egplus_ratio
        return doc

    @classmethod
    def from_dict(cls, doc) -> "MethodSpec":
        if isinstance(doc, str):
            return parse_method(doc)
        return cls(**doc)


def parse_method(text: str) -> MethodSpec:
    """Parse ``FAMILY`` or ``FAMILY:half`` / ``FAMILY:equal`` / ``FAMILY:scale=0.3``."""
    family, _, rest = text.strip().partition(":")
    family = family.upper()
    if not rest:
        return MethodSpec(family)
    if rest in ("half", "equal"):
        return MethodSpec(family, alpha_rule=rest)
    key, _, value = rest.partition("=")
    if key == "scale":
        return MethodSpec(family, alpha_scale=float(value))
    if key == "ratio":
        return MethodSpec(family, egplus_ratio=float(value))
    raise MethodError(f"cannot parse method {text!r}")


# --- single steps ------------------------------------------------------------


def seg_inner_step(z, grad_at: Callable, alpha: float, beta: float):
    """One same-sample SEG iteration: returns ``(w, z_next)``."""
    if alpha < 0 or beta < 0:
        raise MethodError("alpha and beta must be nonnegative")
    z = np.asarray(z, dtype=np.float64)
    w = z - alpha * grad_at(z)
    return w, z - beta * grad_at(w)


def eg_plus_step(problem: FiniteSumProblem, z, eta1: float, eta2: float) -> np.ndarray:
    if not (eta1 > 0 and eta2 > 0):
        raise MethodError("eta1 and eta2 must be positive")
    z = as_point(z, problem.dim)
    w = z - eta1 * full_gradient(problem, z)
    return z - eta2 * (problem.full_jacobian @ w + problem.full_offset)


def anchor(z_start, z_end, theta: float = 1.0) -> np.ndarray:
    if theta < 0:
        raise MethodError("theta must be nonnegative")
    z_start = np.asarray(z_start, dtype=np.float64)
    z_end = np.asarray(z_end, dtype=np.float64)
    return (z_end + theta * z_start) / (1.0 + theta)


def sample_permutation(rng: Stream, n: int) -> np.ndarray:
    if n < 1:
        raise MethodError("n must be >= 1")
    return rng.permutation(n)


def sample_index(rng: Stream, n: int) -> int:
    return bounded(rng.state, n)


# --- epochs ------------------------------------------------------------------


def step_sizes(method: MethodSpec, schedule, n: int, first_epoch: int, n_epochs: int):
    """Per-step (alphas, betas) for ``n_epochs`` epochs starting at ``first_epoch``.

    Shuffling-based methods evaluate the schedule at the epoch index; US
    methods and DSEG evaluate it at the iteration ``t = n k + i``.
    """
    steps = method.steps_per_epoch(n)
    if method.family == "DSEG":
        if not isinstance(schedule, DSEGDual):
            raise MethodError("DSEG requires a DSEGDual schedule")
        t = np.arange(first_epoch * steps, (first_epoch + n_epochs) * steps)
        alphas, betas = schedule.pairs(t)
        return np.ascontiguousarray(alphas), np.ascontiguousarray(betas)
    if isinstance(schedule, DSEGDual):
        raise MethodError("DSEGDual schedules are only valid for DSEG")
    if method.sampling == US:
        betas = schedule.etas(np.arange(first_epoch * steps, (first_epoch + n_epochs) * steps))
    else:
        betas = np.repeat(schedule.etas(np.arange(first_epoch, first_epoch + n_epochs)), steps)
    return np.ascontiguousarray(method.alpha_factor * betas), np.ascontiguousarray(betas)


def epoch_order(method: MethodSpec, n: int, rng: Stream) -> np.ndarray:
    """Indices one epoch would visit; consumes the stream exactly like ``run_epoch``."""
    if method.deterministic:
        raise MethodError(f"{method.family} has no sampled epoch")
    return backend.epoch_indices(rng.state, method.sampling, n)


class Diverged(ArithmeticError):
    def __init__(self, z):
        super().__init__("iterate became non-finite")
        self.z = z


def run_epochs(method: MethodSpec, problem: FiniteSumProblem, z, first_epoch: int,
               n_epochs: int, schedule, rng: Stream):
    """Advance ``n_epochs`` epochs; returns ``(z, epochs_done, diverged)``."""
    z = np.array(as_point(z, problem.dim), dtype=np.float64)
    if n_epochs <= 0:
        return z, 0, False
    if method.deterministic:
        return _eg_epochs(method, problem, z, first_epoch, n_epochs, schedule)
    alphas, betas = step_sizes(method, schedule, problem.n, first_epoch, n_epochs)
    done, diverged = backend.seg_epochs(
        problem.jacobians, problem.offsets, z, rng.state, method.sampling,
        method.anchored, alphas, betas, n_epochs,
    )
    return z, int(done), bool(diverged)


def _eg_epochs(method, problem, z, first_epoch, n_epochs, schedule):
    ratio = method.egplus_ratio if method.family == "EGPLUS" else 1.0
    etas = schedule.etas(np.arange(first_epoch, first_epoch + n_epochs))
    for k, eta in enumerate(etas):
        z = eg_plus_step(problem, z, eta, ratio * eta) if np.all(np.isfinite(z)) else z
        if not np.all(np.isfinite(z)):
            return z, k, True
    return z, n_epochs, False


def run_epoch(method: MethodSpec, problem: FiniteSumProblem, z, epoch_k: int, schedule,
              rng: Stream) -> np.ndarray:
    """Exactly one epoch of ``method``; raises ``Diverged`` on a non-finite iterate."""
    z_out, _, diverged = run_epochs(method, problem, z, epoch_k, 1, schedule, rng)
    if diverged:
        raise Diverged(z_out)
    return z_out


# --- full runs ----------------------------------------------------------------


@dataclass
class Checkpoint:
    pass_index: int
    epoch_index: int
    grad_norm_sq: float
    dist_sq: Optional[float] = None
    z: Optional[np.ndarray] = None


@dataclass
class RunRecord:
    method: MethodSpec
    seed: int
    schedule: object
    checkpoints: list = field(default_factory=list)
    diverged: bool = False

    @property
    def passes(self) -> np.ndarray:
        return np.array([c.pass_index for c in self.checkpoints])

    @property
    def grad_norm_sq(self) -> np.ndarray:
        return np.array([c.grad_norm_sq for c in self.checkpoints])

    @property
    def ratios(self) -> np.ndarray:
        g = self.grad_norm_sq
        return g / g[0]

    def final_ratio(self) -> float:
        return float(self.ratios[-1])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["pass", "epoch", "grad_norm_sq", "grad_norm_sq_ratio", "dist_sq"])
        base = self.checkpoints[0].grad_norm_sq if self.checkpoints else 1.0
        for c in self.checkpoints:
            ratio = c.grad_norm_sq / base if base > 0 else math.nan
            dist = "" if c.dist_sq is None else repr(float(c.dist_sq))
            writer.writerow([c.pass_index, c.epoch_index, repr(float(c.grad_norm_sq)), repr(float(ratio)), dist])
        return buf.getvalue()

    def describe(self) -> str:
        return f"{self.method.label} seed={self.seed} {describe(self.schedule)}"


def checkpoint_epochs(passes_per_epoch: int, n_epochs: int, stride: int) -> list[int]:
    """Epoch indices (after 0) at which a new multiple of ``stride`` passes is reached."""
    out, last = [], 0
    for k in range(1, n_epochs + 1):
        block = (k * passes_per_epoch) // stride
        if block > last or k == n_epochs:
            out.append(k)
            last = block
    return out


def run(method: MethodSpec, problem: FiniteSumProblem, z0, schedule, budget_passes: int,
        checkpoint_stride: int, seed: int, keep_z: bool = False, z_star=None,
        checkpoint_epochs_list=None) -> RunRecord:
    """Run ``method`` for ``budget_passes`` passes and record checkpoints.

    One pass is one sweep over the ``n`` components (``n`` SEG iterations, or a
    single deterministic EG step); flip-flop epochs count as two passes.
    ``checkpoint_epochs_list`` overrides the uniform stride with explicit epochs.
    """
    if budget_passes < 0:
        raise MethodError("budget_passes must be >= 0")
    if checkpoint_stride < 1:
        raise MethodError("checkpoint_stride must be >= 1")
    z = np.array(as_point(z0, problem.dim), dtype=np.float64)
    if z_star is None:
        z_star = try_equilibrium(problem)
    rng = Stream(seed)
    ppe = method.passes_per_epoch
    n_epochs = budget_passes // ppe
    record = RunRecord(method, int(seed), schedule)

    def snapshot(k):
        with np.errstate(over="ignore", invalid="ignore"):
            g = problem.full_jacobian @ z + problem.full_offset
            gsq = float(g @ g)
            dist = None if z_star is None else float(np.sum((z - z_star) ** 2))
        record.checkpoints.append(Checkpoint(k * ppe, k, gsq, dist, z.copy() if keep_z else None))
        return math.isfinite(gsq)

    snapshot(0)
    targets = checkpoint_epochs(ppe, n_epochs, checkpoint_stride) if checkpoint_epochs_list is None \
        else sorted(k for k in set(checkpoint_epochs_list) if 0 < k <= n_epochs)
    k = 0
    for target in targets:
        z, done, diverged = run_epochs(method, problem, z, k, target - k, schedule, rng)
        k += done
        if diverged:
            k += 1  # the interrupted epoch is where the non-finite value appeared
            snapshot(k)
            record.diverged = True
            return record
        if not snapshot(k):
            record.diverged = True
            return record
    return record
