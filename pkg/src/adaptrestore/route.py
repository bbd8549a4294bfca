"""Verdicts and severity bands from per-class sigmoid probabilities.

A class counts as *active* when its probability is ``>= theta``.  Zero
active classes means the frame is undamaged, one means a single
degradation, two or more means multiple degradations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .classify.head import ProbabilityVector
from .exceptions import OutOfRange, WrongMode
from .synth import KINDS, DegradationKind

DEFAULT_THETA = 0.85
DEFAULT_BAND_LOW = 0.5


@dataclass(frozen=True)
class RouterConfig:
    theta: float = DEFAULT_THETA
    band_low: float = DEFAULT_BAND_LOW

    def __post_init__(self):
        if not 0.0 < self.band_low < self.theta < 1.0:
            raise ValueError(f"need 0 < band_low < theta < 1, got band_low={self.band_low}, theta={self.theta}")


class SeverityBand(enum.Enum):
    NONE = "None"
    TOLERABLE = "Tolerable"
    SIGNIFICANT = "Significant"


@dataclass(frozen=True)
class Undamaged:
    name = "Undamaged"

    @property
    def active(self) -> tuple:
        return ()


@dataclass(frozen=True)
class Single:
    kind: DegradationKind
    p: float
    name = "Single"

    @property
    def active(self) -> tuple:
        return ((self.kind, self.p),)


@dataclass(frozen=True)
class Multiple:
    active: tuple
    name = "Multiple"

    def __post_init__(self):
        if len(self.active) < 2:
            raise ValueError("Multiple needs at least two active degradations")


Verdict = Undamaged | Single | Multiple


def _probabilities(probs):
    if isinstance(probs, ProbabilityVector):
        if probs.mode != "sigmoid":
            raise WrongMode(f"routing needs sigmoid probabilities, got {probs.mode!r}")
        probs = probs.p
    return np.asarray(probs, dtype=np.float64).tolist()


def active_entries(probs, theta: float) -> list:
    """``(kind, p)`` for every ``p >= theta``, by descending ``p`` then kind index."""
    p = _probabilities(probs)
    hits = [(KINDS[i], v) for i, v in enumerate(p) if v >= theta]
    hits.sort(key=lambda e: (-e[1], int(e[0])))
    return hits


def decide(probs, cfg: RouterConfig | None = None):
    """Map a sigmoid probability vector to ``Undamaged``, ``Single`` or ``Multiple``."""
    theta = (cfg or RouterConfig()).theta
    hits = active_entries(probs, theta)
    if not hits:
        return Undamaged()
    if len(hits) == 1:
        return Single(*hits[0])
    return Multiple(tuple(hits))


def band(p: float, cfg: RouterConfig | None = None) -> SeverityBand:
    """``[0, band_low)`` -> NONE, ``[band_low, theta)`` -> TOLERABLE, ``[theta, 1]`` -> SIGNIFICANT."""
    cfg = cfg or RouterConfig()
    if not 0.0 <= p <= 1.0:
        raise OutOfRange(f"probability {p} outside [0, 1]")
    if p >= cfg.theta:
        return SeverityBand.SIGNIFICANT
    if p >= cfg.band_low:
        return SeverityBand.TOLERABLE
    return SeverityBand.NONE


def verdict_to_dict(verdict, probs=None, cfg: RouterConfig | None = None) -> dict:
    out = {
        "verdict": verdict.name,
        "active": [{"kind": k.label, "p": float(p)} for k, p in verdict.active],
    }
    if probs is not None:
        out["bands"] = [band(min(max(v, 0.0), 1.0), cfg).value for v in _probabilities(probs)]
    return out


def verdict_from_dict(d: dict):
    active = tuple((DegradationKind.parse(e["kind"]), float(e["p"])) for e in d["active"])
    if d["verdict"] == "Undamaged":
        return Undamaged()
    if d["verdict"] == "Single":
        return Single(*active[0])
    return Multiple(active)
