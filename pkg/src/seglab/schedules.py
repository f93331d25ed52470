"""Stepsize schedules.

``Constant`` and ``PolyDecay`` give a single stepsize ``eta`` per index;
``DSEGDual`` gives the (extrapolation, update) pair used by DSEG.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Constant:
    eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ScheduleError("Constant eta must be positive")

    def etas(self, index) -> np.ndarray:
        return np.full(np.shape(index), float(self.eta))

    def eta_at(self, k: int) -> float:
        return float(self.eta)


@dataclass(frozen=True)
class PolyDecay:
    """``eta_k = eta0 / (1 + k / shift) ** exponent``."""

    eta0: float
    shift: float = 10.0
    exponent: float = 0.34

    def __post_init__(self):
        if not (self.eta0 > 0 and self.shift > 0 and self.exponent >= 0):
            raise ScheduleError("PolyDecay needs eta0 > 0, shift > 0, exponent >= 0")

    def etas(self, index) -> np.ndarray:
        k = np.asarray(index, dtype=np.float64)
        return self.eta0 / (1.0 + k / self.shift) ** self.exponent

    def eta_at(self, k: int) -> float:
        return float(self.etas(k))


@dataclass(frozen=True)
class DSEGDual:
    """``eta1_t = gamma0 / (t + offset)**r1`` and ``eta2_t = eta0 / (t + offset)**r2``."""

    gamma0: float
    eta0: float
    r1: float
    r2: float
    offset: float = 19.0

    def __post_init__(self):
        if not (self.gamma0 > 0 and self.eta0 > 0):
            raise ScheduleError("DSEGDual needs gamma0 > 0 and eta0 > 0")
        if self.r1 > self.r2:
            raise ScheduleError("DSEGDual needs r1 <= r2")
        if self.offset < 1:
            raise ScheduleError("DSEGDual needs offset >= 1")

    def pairs(self, index) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(index, dtype=np.float64) + self.offset
        return self.gamma0 / t**self.r1, self.eta0 / t**self.r2

    def etas(self, index) -> np.ndarray:
        return self.pairs(index)[1]

    def eta_at(self, k: int) -> float:
        return float(self.etas(k))


DSEG_PRESETS = {
    "bilinear": DSEGDual(1.0, 0.1, 0.0, 1.0, 19.0),
    "general": DSEGDual(0.1, 0.05, 1.0 / 3.0, 2.0 / 3.0, 19.0),
}

_KINDS = {"constant": Constant, "poly": PolyDecay, "dseg": DSEGDual}


def schedule_to_dict(schedule) -> dict:
    kind = {v: k for k, v in _KINDS.items()}[type(schedule)]
    return {"kind": kind, **asdict(schedule)}


def schedule_from_dict(doc: dict):
    doc = dict(doc)
    kind = doc.pop("kind", None)
    if kind == "dseg" and "preset" in doc:
        return DSEG_PRESETS[doc["preset"]]
    if kind not in _KINDS:
        raise ScheduleError(f"unknown schedule kind {kind!r}")
    try:
        return _KINDS[kind](**{k: float(v) for k, v in doc.items()})
    except TypeError as exc:
        raise ScheduleError(str(exc)) from exc


def describe(schedule) -> str:
    doc = schedule_to_dict(schedule)
    kind = doc.pop("kind")
    return kind + "(" + ",".join(f"{k}={v:g}" for k, v in doc.items()) + ")"
