"""Finite-sum quadratic saddle problems.

Each component is

    f_i(x, y) = [x; y]^T [[A_i, B_i], [B_i^T, -C_i]] [x; y] - t_i^T [x; y]

with no 1/2 factor, so its saddle gradient F_i = (grad_x f_i, -grad_y f_i)
is the affine map ``z -> G_i z + c_i`` with

    G_i = [[2 A_i, 2 B_i], [-2 B_i^T, 2 C_i]],   c_i = (-t_x, +t_y).

Points are plain 1-D float64 arrays of length ``d1 + d2`` (x block first).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from seglab.rng import Stream

SYMMETRY_TOL = 1e-12


class ProblemError(ValueError):
    """Invalid problem data or arguments."""


class NoEquilibriumError(ProblemError):
    """The full saddle gradient has no zero."""


def as_point(z, dim: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.shape[0] != dim:
        raise ProblemError(f"point has shape {z.shape}, expected ({dim},)")
    if not np.all(np.isfinite(z)):
        raise ProblemError("point has non-finite entries")
    return z


@dataclass(frozen=True)
class QuadraticComponent:
    a_mat: np.ndarray
    b_mat: np.ndarray
    c_mat: np.ndarray
    t_vec: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_mat, dtype=np.float64))
        b = np.atleast_2d(np.asarray(self.b_mat, dtype=np.float64))
        c = np.atleast_2d(np.asarray(self.c_mat, dtype=np.float64))
        t = np.atleast_1d(np.asarray(self.t_vec, dtype=np.float64))
        d1, d2 = a.shape[0], c.shape[0]
        if a.shape != (d1, d1) or c.shape != (d2, d2) or b.shape != (d1, d2):
            raise ProblemError(f"inconsistent block shapes {a.shape}, {b.shape}, {c.shape}")
        if t.shape != (d1 + d2,):
            raise ProblemError(f"t has shape {t.shape}, expected ({d1 + d2},)")
        if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
            raise ProblemError("A is not symmetric")
        if np.max(np.abs(c - c.T), initial=0.0) > SYMMETRY_TOL:
            raise ProblemError("C is not symmetric")
        for name, arr in (("a_mat", a), ("b_mat", b), ("c_mat", c), ("t_vec", t)):
            if not np.all(np.isfinite(arr)):
                raise ProblemError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def d1(self) -> int:
        return self.a_mat.shape[0]

    @property
    def d2(self) -> int:
        return self.c_mat.shape[0]

    @property
    def jacobian(self) -> np.ndarray:
        """Constant Jacobian G_i of the saddle gradient."""
        return np.block([[2 * self.a_mat, 2 * self.b_mat], [-2 * self.b_mat.T, 2 * self.c_mat]])

    @property
    def offset(self) -> np.ndarray:
        return np.concatenate([-self.t_vec[: self.d1], self.t_vec[self.d1 :]])

    def value(self, z) -> float:
        z = as_point(z, self.d1 + self.d2)
        x, y = z[: self.d1], z[self.d1 :]
        quad = x @ self.a_mat @ x + 2 * x @ self.b_mat @ y - y @ self.c_mat @ y
        return float(quad - self.t_vec @ z)


@dataclass(frozen=True)
class FiniteSumProblem:
    components: tuple
    jacobians: np.ndarray = field(init=False, repr=False)
    offsets: np.ndarray = field(init=False, repr=False)
    full_jacobian: np.ndarray = field(init=False, repr=False)
    full_offset: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ProblemError("a problem needs at least one component")
        d1, d2 = comps[0].d1, comps[0].d2
        if any((comp.d1, comp.d2) != (d1, d2) for comp in comps):
            raise ProblemError("components disagree on (d1, d2)")
        jac = np.ascontiguousarray(np.stack([comp.jacobian for comp in comps]))
        off = np.ascontiguousarray(np.stack([comp.offset for comp in comps]))
        full_jac = jac.mean(axis=0)
        full_off = off.mean(axis=0)
        for arr in (jac, off, full_jac, full_off):
            arr.setflags(write=False)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "jacobians", jac)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "full_jacobian", full_jac)
        object.__setattr__(self, "full_offset", full_off)

    @property
    def n(self) -> int:
        return len(self.components)

    @property
    def d1(self) -> int:
        return self.components[0].d1

    @property
    def d2(self) -> int:
        return self.components[0].d2

    @property
    def dim(self) -> int:
        return self.d1 + self.d2

    def value(self, z) -> float:
        return float(np.mean([comp.value(z) for comp in self.components]))

    def __eq__(self, other):
        if not isinstance(other, FiniteSumProblem) or self.n != other.n:
            return NotImplemented if not isinstance(other, FiniteSumProblem) else False
        return all(
            np.array_equal(getattr(p, name), getattr(q, name))
            for p, q in zip(self.components, other.components)
            for name in ("a_mat", "b_mat", "c_mat", "t_vec")
        )

    __hash__ = None


@dataclass(frozen=True)
class VarianceParams:
    rho: float
    sigma: float

    def __post_init__(self):
        if self.rho < 0 or self.sigma < 0:
            raise ProblemError("rho and sigma must be nonnegative")


@dataclass(frozen=True)
class SpectralReport:
    smoothness_L: float
    strong_monotonicity_mu: float
    hessian_lipschitz_M: float = 0.0


# --- gradients --------------------------------------------------------------


def component_gradient(comp: QuadraticComponent, z) -> np.ndarray:
    z = as_point(z, comp.d1 + comp.d2)
    return comp.jacobian @ z + comp.offset


def component_gradients(problem: FiniteSumProblem, z) -> np.ndarray:
    """All component gradients at ``z``, shape ``(n, dim)``."""
    z = as_point(z, problem.dim)
    return problem.jacobians @ z + problem.offsets


def full_gradient(problem: FiniteSumProblem, z) -> np.ndarray:
    z = as_point(z, problem.dim)
    return problem.full_jacobian @ z + problem.full_offset


def spectral_report(problem: FiniteSumProblem) -> SpectralReport:
    try:
        smooth = max(float(np.linalg.norm(g, 2)) for g in problem.jacobians)
        sym = 0.5 * (problem.full_jacobian + problem.full_jacobian.T)
        mu = float(np.linalg.eigvalsh(sym)[0])
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver failed for n={problem.n}, dim={problem.dim}: {exc}") from exc
    return SpectralReport(smooth, mu, 0.0)


def equilibrium(problem: FiniteSumProblem) -> np.ndarray:
    """Solve ``G z* = -c`` for the full saddle gradient."""
    G, c = problem.full_jacobian, problem.full_offset
    if not np.any(c):
        return np.zeros(problem.dim)
    tol = 1e-9 * (1.0 + np.linalg.norm(c))
    cond = np.linalg.cond(G)
    if np.isfinite(cond) and cond < 1e12:
        z = np.linalg.solve(G, -c)
    else:
        z = np.linalg.lstsq(G, -c, rcond=None)[0]
    if np.linalg.norm(G @ z + c) > tol:
        raise NoEquilibriumError("offset is not in the range of the full Jacobian")
    return z


def try_equilibrium(problem: FiniteSumProblem):
    try:
        return equilibrium(problem)
    except NoEquilibriumError:
        return None


def variance_terms(problem: FiniteSumProblem, z) -> tuple[float, float]:
    """``(1/n) sum ||F_i z - F z||^2`` and ``||F z||`` at one point."""
    grads = component_gradients(problem, z)
    full = grads.mean(axis=0)
    spread = float(np.mean(np.sum((grads - full) ** 2, axis=1)))
    return spread, float(np.linalg.norm(full))


def sample_ball(stream: Stream, count: int, dim: int, radius: float) -> np.ndarray:
    directions = stream.normal((count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = radius * stream.uniform(count) ** (1.0 / dim)
    return directions * radii[:, None]


def verify_variance_bound(problem, params: VarianceParams, sample_count: int, radius: float,
                          seed: int) -> float:
    """Largest violation of the component-variance bound over a random sample.

    Returns ``max (1/n) sum ||F_i z - F z||^2 - (rho ||F z|| + sigma)^2`` over
    ``sample_count`` points drawn uniformly in the ball of ``radius`` about the
    origin. A nonpositive value certifies the bound on the sample.
    """
    if sample_count < 1:
        raise ProblemError("sample_count must be >= 1")
    if radius <= 0:
        raise ProblemError("radius must be positive")
    points = sample_ball(Stream(seed), sample_count, problem.dim, radius)
    worst = -np.inf
    for z in points:
        spread, norm_full = variance_terms(problem, z)
        worst = max(worst, spread - (params.rho * norm_full + params.sigma) ** 2)
    return float(worst)


def star_monotone_gap(problem, sample_count: int, radius: float, seed: int) -> float:
    """Smallest ``<F z, z - z*>`` over points sampled in a ball around ``z*``.

    Only a sampled check: a negative value refutes star-monotonicity, a
    nonnegative one certifies nothing beyond the sample.
    """
    z_star = equilibrium(problem)
    points = z_star + sample_ball(Stream(seed), sample_count, problem.dim, radius)
    return float(min((full_gradient(problem, z) @ (z - z_star)) for z in points))


# --- generators ---------------------------------------------------------------


def _half_signs(stream: Stream, n: int, d: int) -> np.ndarray:
    # signs[i, j] = +2 for a uniformly random half of the components i, per coordinate j
    signs = np.empty((n, d))
    for j in range(d):
        perm = stream.permutation(n)
        col = np.full(n, -2.0)
        col[perm[: n // 2]] = 2.0
        signs[:, j] = col
    return signs


def gen_monotone(seed: int, d1: int, d2: int, n: int) -> FiniteSumProblem:
    """Random monotone problem with nonmonotone components.

    Draw order on the stream: the A sign pattern (one permutation per
    coordinate), the C sign pattern, then per component ``B_i`` (row-major
    uniforms) followed by ``t_i`` (normals).
    """
    if n < 2 or n % 2:
        raise ProblemError("gen_monotone needs an even n >= 2")
    if d1 < 1 or d2 < 1:
        raise ProblemError("dimensions must be positive")
    stream = Stream(seed)
    a_diag = _half_signs(stream, n, d1)
    c_diag = _half_signs(stream, n, d2)
    comps = []
    for i in range(n):
        b = stream.uniform((d1, d2))
        t = stream.normal(d1 + d2)
        comps.append(QuadraticComponent(np.diag(a_diag[i]), b, np.diag(c_diag[i]), t))
    return FiniteSumProblem(tuple(comps))


def random_orthogonal(stream: Stream, d: int) -> np.ndarray:
    q, r = np.linalg.qr(stream.normal((d, d)))
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs


def _random_spd(stream: Stream, d: int) -> np.ndarray:
    eig = stream.uniform(d, low=0.5, high=1.0)
    q = random_orthogonal(stream, d)
    m = (q * eig) @ q.T
    return 0.5 * (m + m.T)


def gen_strongly_monotone(seed: int, d1: int, d2: int, n: int) -> FiniteSumProblem:
    """Random strongly monotone problem (mu >= 1 with the factor-2 convention).

    Draw order per component: ``A_i`` (eigenvalues, then the Gaussian matrix
    fed to QR), ``C_i`` likewise, ``B_i``, ``t_i``.
    """
    if min(d1, d2, n) < 1:
        raise ProblemError("d1, d2 and n must be positive")
    stream = Stream(seed)
    comps = []
    for _ in range(n):
        a = _random_spd(stream, d1)
        c = _random_spd(stream, d2)
        b = stream.uniform((d1, d2))
        t = stream.normal(d1 + d2)
        comps.append(QuadraticComponent(a, b, c, t))
    return FiniteSumProblem(tuple(comps))


# --- counterexamples ---------------------------------------------------------


def divergence_example(L: float) -> FiniteSumProblem:
    """Two nilpotent components whose average is the bilinear game (L/2) x y."""
    if L <= 0:
        raise ProblemError("L must be positive")
    q = L / 4
    f1 = QuadraticComponent([[-q]], [[q]], [[q]], [0.0, 0.0])
    f2 = QuadraticComponent([[q]], [[q]], [[-q]], [0.0, 0.0])
    return FiniteSumProblem((f1, f2))


def variance_floor_example(L: float, sigma: float) -> FiniteSumProblem:
    """``f_{1,2} = L x y +- nu (x - y)`` with ``nu^2 = sigma^2 / 2``."""
    if L <= 0:
        raise ProblemError("L must be positive")
    if sigma < 0:
        raise ProblemError("sigma must be nonnegative")
    nu = sigma / np.sqrt(2.0)
    f1 = QuadraticComponent([[0.0]], [[L / 2]], [[0.0]], [-nu, nu])
    f2 = QuadraticComponent([[0.0]], [[L / 2]], [[0.0]], [nu, -nu])
    return FiniteSumProblem((f1, f2))


def rr_lower_bound_example(L: float, mu: float, sigma: float, n: int, kind: str = "seg") -> FiniteSumProblem:
    """Sign-flipping instances behind the random-reshuffling lower bounds.

    ``kind="seg"``: ``f_i = L/2 x1^2 + L/4 x2^2 + sigma (2 s_i - 1) x2 - mu/2 y^2``.
    ``kind="sgda"``: ``f_i = g_i(x) - mu/2 y^2`` with the three-dimensional
    ``g_i`` whose x3 curvature is present only in the first half.
    Here ``s_i = 1`` for the first ``n/2`` components and 0 otherwise.
    """
    if n < 2 or n % 2:
        raise ProblemError("n must be even and >= 2")
    if mu <= 0 or L / mu < 2:
        raise ProblemError("requires mu > 0 and L / mu >= 2")
    if sigma < 0:
        raise ProblemError("sigma must be nonnegative")
    comps = []
    for i in range(n):
        sign = 1.0 if i < n // 2 else -1.0
        if kind == "seg":
            a = np.diag([L / 2, L / 4])
            t = np.array([0.0, -sigma * sign, 0.0])
            comps.append(QuadraticComponent(a, np.zeros((2, 1)), [[mu / 2]], t))
        elif kind == "sgda":
            s = 1.0 if sign > 0 else 0.0
            a = np.diag([mu / 2, L / 2, L * s / 2])
            t = np.array([0.0, -sigma * sign / 2, -sigma * sign / 2, 0.0])
            comps.append(QuadraticComponent(a, np.zeros((3, 1)), [[mu / 2]], t))
        else:
            raise ProblemError(f"unknown kind {kind!r}")
    return FiniteSumProblem(tuple(comps))


def bilinear_example() -> FiniteSumProblem:
    """Single-component ``f(x, y) = x y``."""
    return FiniteSumProblem((QuadraticComponent([[0.0]], [[0.5]], [[0.0]], [0.0, 0.0]),))


# --- serialization -----------------------------------------------------------


def problem_to_dict(problem: FiniteSumProblem) -> dict:
    return {
        "d1": problem.d1,
        "d2": problem.d2,
        "n": problem.n,
        "components": [
            {
                "A": comp.a_mat.tolist(),
                "B": comp.b_mat.tolist(),
                "C": comp.c_mat.tolist(),
                "t": comp.t_vec.tolist(),
            }
            for comp in problem.components
        ],
    }


def problem_from_dict(doc: dict) -> FiniteSumProblem:
    try:
        d1, d2, n = int(doc["d1"]), int(doc["d2"]), int(doc["n"])
        comps = tuple(
            QuadraticComponent(
                np.array(c["A"], dtype=np.float64).reshape(d1, d1),
                np.array(c["B"], dtype=np.float64).reshape(d1, d2),
                np.array(c["C"], dtype=np.float64).reshape(d2, d2),
                np.array(c["t"], dtype=np.float64).reshape(d1 + d2),
            )
            for c in doc["components"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemError(f"malformed problem document: {exc}") from exc
    if len(comps) != n:
        raise ProblemError(f"document declares n={n} but has {len(comps)} components")
    return FiniteSumProblem(comps)


def dumps_problem(problem: FiniteSumProblem) -> str:
    return json.dumps(problem_to_dict(problem), indent=1) + "\n"


def save_problem(problem: FiniteSumProblem, path) -> None:
    Path(path).write_text(dumps_problem(problem))


def load_problem(path) -> FiniteSumProblem:
    return problem_from_dict(json.loads(Path(path).read_text()))
