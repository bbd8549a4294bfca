"""Probability-weighted aggregation of restorer outputs.

For active classes (``p_i >= theta``) the output is the convex combination
``sum_i w_i * phi_i(x)`` with ``w_i = p_i / sum_active p_j``.  Each restorer
sees the original frame.  Super-resolution changes the frame size, so it is
applied to the blended result instead of being blended.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .exceptions import NoActiveDegradation
from .restore import RestorerRegistry
from .route import active_entries
from .synth import DegradationKind

SR = DegradationKind.SUPER_RESOLUTION


@dataclass(frozen=True)
class ActiveSet:
    entries: tuple
    weights: tuple

    @property
    def kinds(self) -> tuple:
        return tuple(k for k, _ in self.entries)

    def to_list(self) -> list:
        return [{"kind": k.label, "p": float(p), "w": float(w)} for (k, p), w in zip(self.entries, self.weights)]


def normalized_weights(ps) -> tuple:
    """``p_i * mu`` with ``mu = 1 / sum(p)``."""
    ps = [float(p) for p in ps]
    mu = 1.0 / sum(ps)
    return tuple(p * mu for p in ps)


def weights(probs, theta: float) -> ActiveSet:
    entries = tuple(active_entries(probs, theta))
    if not entries:
        raise NoActiveDegradation(f"no class reaches theta={theta}")
    return ActiveSet(entries, normalized_weights(p for _, p in entries))


def aggregate(
    image,
    probs,
    theta: float,
    registry: RestorerRegistry | None = None,
    mode="parallel",
    executor=None,
    timings: dict | None = None,
):
    """Restore ``image`` for every active degradation and combine the results.

    ``mode="parallel"`` blends restorer outputs computed on the original
    frame; ``mode="sequential"`` chains the restorers in descending
    probability instead.  A single same-size branch is returned untouched.
    ``executor`` (a ``concurrent.futures`` executor) runs branches concurrently.
    When ``timings`` is a dict, ``restore_ms`` and ``blend_ms`` are added to it.
    """
    t0 = time.perf_counter()
    blend_s = 0.0
    registry = registry if registry is not None else RestorerRegistry()
    active = weights(probs, theta)
    same_size = [(k, p) for k, p in active.entries if k is not SR]
    has_sr = len(same_size) < len(active.entries)

    if mode == "sequential":
        out = image
        for k, _ in same_size:
            out = registry(k, out)
    elif mode == "parallel":
        if not same_size:
            out = image
        elif len(same_size) == 1:
            out = registry(same_size[0][0], image)
        else:
            kinds = [k for k, _ in same_size]
            if executor is not None:
                branches = list(executor.map(lambda k: registry(k, image), kinds))
            else:
                branches = [registry(k, image) for k in kinds]
            tb = time.perf_counter()
            ws = normalized_weights(p for _, p in same_size)
            out = ws[0] * branches[0]
            for w, b in zip(ws[1:], branches[1:]):
                out = out + w * b
            out = np.clip(out, 0.0, 1.0)
            blend_s = time.perf_counter() - tb
    else:
        raise ValueError(f"unknown blend mode {mode!r}")

    if has_sr:
        out = registry(SR, out)
    if timings is not None:
        total = time.perf_counter() - t0
        timings["restore_ms"] = timings.get("restore_ms", 0.0) + 1000.0 * (total - blend_s)
        timings["blend_ms"] = timings.get("blend_ms", 0.0) + 1000.0 * blend_s
    return out
