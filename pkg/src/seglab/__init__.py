"""Shuffling-based stochastic extragradient methods on finite-sum quadratic games."""

__version__ = "0.1.0"

from seglab._backend import backend  # noqa: E402
from seglab.optimizers import MethodSpec, run, run_epoch  # noqa: E402
from seglab.problems import (  # noqa: E402
    FiniteSumProblem,
    QuadraticComponent,
    gen_monotone,
    gen_strongly_monotone,
)
from seglab.schedules import Constant, DSEGDual, PolyDecay  # noqa: E402

__all__ = [
    "backend",
    "MethodSpec",
    "run",
    "run_epoch",
    "FiniteSumProblem",
    "QuadraticComponent",
    "gen_monotone",
    "gen_strongly_monotone",
    "Constant",
    "DSEGDual",
    "PolyDecay",
]
