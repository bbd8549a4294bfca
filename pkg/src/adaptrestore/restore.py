"""Per-degradation restoration operators and the registry that dispatches them.

Built-in operators are classical filters.  Any kind can be redirected to an
external command (e.g. a neural restorer) with :func:`set_external`; the
command reads and writes binary PPM files.
"""

from __future__ import annotations

import copy
import logging
import shlex
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .exceptions import OversizeForUpscale, TemplateInvalid
from .features import dark_channel
from .imaging import check_image, gaussian_blur, load_image, resize, save_image
from .synth import KINDS, DegradationKind

log = logging.getLogger(__name__)

MAX_UPSCALE_SIDE = 2048

DEFAULT_PARAMS = {
    DegradationKind.DENOISING: {"radius": 2, "sigma_space": 2.0, "sigma_range": 0.1},
    DegradationKind.DEHAZING_INDOOR: {"window": 7, "omega": 0.9, "t_min": 0.15, "airlight": 0.85},
    DegradationKind.DEHAZING_OUTDOOR: {"window": 7, "omega": 0.9, "t_min": 0.15, "top_fraction": 0.001},
    DegradationKind.DEBLURRING: {"sigma": 1.5, "amount": 1.2},
    DegradationKind.DERAINING: {"length": 9, "shifts": 5, "mix": 0.7},
    DegradationKind.ENHANCEMENT: {"gamma": 2.2, "low_pct": 1.0, "high_pct": 99.0},
    DegradationKind.SUPER_RESOLUTION: {"scale": 2, "sigma": 1.0, "amount": 0.5},
}


# -- operators ---------------------------------------------------------------


def bilateral_mean(image, radius=2, sigma_space=2.0, sigma_range=0.1):
    """Edge-preserving weighted mean over a ``(2r+1)^2`` window (RGB range distance)."""
    h, w = image.shape[:2]
    src = image.astype(np.float32)
    pad = np.pad(src, ((radius, radius), (radius, radius), (0, 0)), mode="edge")
    num = np.zeros_like(src)
    den = np.zeros((h, w, 1), np.float32)
    inv_r = np.float32(-0.5 / sigma_range**2)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            nb = pad[radius + dy : radius + dy + h, radius + dx : radius + dx + w]
            diff = nb - src
            d2 = np.einsum("ijk,ijk->ij", diff, diff)[..., None]
            wgt = np.float32(np.exp(-0.5 * (dx * dx + dy * dy) / sigma_space**2)) * np.exp(inv_r * d2)
            num += wgt * nb
            den += wgt
    return (num / den).astype(np.float64)


def estimate_airlight(image, dark, top_fraction=0.001):
    """Mean colour of the input at the brightest ``top_fraction`` of dark-channel pixels."""
    flat = dark.ravel()
    n = max(1, int(round(flat.size * top_fraction)))
    idx = np.argpartition(flat, flat.size - n)[flat.size - n :]
    return image.reshape(-1, 3)[idx].mean(axis=0)


def dark_channel_dehaze(image, airlight=None, window=7, omega=0.9, t_min=0.15, top_fraction=0.001):
    """Dark-channel-prior dehazing.  ``airlight=None`` estimates it from the image."""
    if airlight is None:
        airlight = estimate_airlight(image, dark_channel(image, window), top_fraction)
    airlight = np.maximum(np.broadcast_to(np.asarray(airlight, dtype=np.float64), (3,)), 1e-3)
    t = 1.0 - omega * dark_channel(image / airlight, window)
    t = np.maximum(t, t_min)[..., None]
    return (image - airlight) / t + airlight


def unsharp_mask(image, sigma=1.5, amount=1.2):
    return image + amount * (image - gaussian_blur(image, sigma))


def derain_median(image, length=9, shifts=5, mix=0.7):
    """Min over horizontally shifted vertical medians, mixed back with the input.

    Bright near-vertical streaks are narrow, so at least one neighbouring
    column's vertical median sees background and the minimum drops the streak.
    """
    med = ndimage.median_filter(image, size=(length, 1, 1), mode="nearest")
    half = shifts // 2
    pad = np.pad(med, ((0, 0), (half, half), (0, 0)), mode="edge")
    w = image.shape[1]
    lowest = med.copy()
    for dx in range(-half, half + 1):
        np.minimum(lowest, pad[:, half + dx : half + dx + w], out=lowest)
    return mix * lowest + (1.0 - mix) * image


def lift_and_stretch(image, gamma=2.2, low_pct=1.0, high_pct=99.0):
    lifted = image ** (1.0 / gamma)
    lo, hi = np.percentile(lifted, [low_pct, high_pct])
    if hi - lo < 1e-6:
        return lifted
    return (lifted - lo) / (hi - lo)


def upscale_sharpen(image, scale=2, sigma=1.0, amount=0.5):
    h, w = image.shape[:2]
    if max(h, w) > MAX_UPSCALE_SIDE:
        raise OversizeForUpscale(f"{w}x{h} exceeds {MAX_UPSCALE_SIDE} before upscaling")
    up = resize(image, w * scale, h * scale, method="bicubic")
    return unsharp_mask(up, sigma, amount)


def _builtin(kind, image, params):
    p = params
    if kind is DegradationKind.DENOISING:
        out = bilateral_mean(image, p["radius"], p["sigma_space"], p["sigma_range"])
    elif kind is DegradationKind.DEHAZING_INDOOR:
        out = dark_channel_dehaze(image, p["airlight"], p["window"], p["omega"], p["t_min"])
    elif kind is DegradationKind.DEHAZING_OUTDOOR:
        out = dark_channel_dehaze(image, None, p["window"], p["omega"], p["t_min"], p["top_fraction"])
    elif kind is DegradationKind.DEBLURRING:
        out = unsharp_mask(image, p["sigma"], p["amount"])
    elif kind is DegradationKind.DERAINING:
        out = derain_median(image, p["length"], p["shifts"], p["mix"])
    elif kind is DegradationKind.ENHANCEMENT:
        out = lift_and_stretch(image, p["gamma"], p["low_pct"], p["high_pct"])
    else:
        out = upscale_sharpen(image, p["scale"], p["sigma"], p["amount"])
    return np.clip(out, 0.0, 1.0)


# -- registry ------------------------------------------------------------------


@dataclass
class ExternalHook:
    template: str
    timeout: float = 10.0

    def argv(self, in_path, out_path) -> list[str]:
        return [tok.replace("{in}", str(in_path)).replace("{out}", str(out_path)) for tok in shlex.split(self.template)]


@dataclass
class RestorerRegistry:
    """Restoration function per degradation kind.

    ``params`` overrides the built-in defaults per kind; ``functions`` swaps
    in arbitrary ``image -> image`` callables (handy for stubs); ``external``
    routes a kind through a subprocess.
    """

    params: dict = field(default_factory=dict)
    functions: dict = field(default_factory=dict)
    external: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def __post_init__(self):
        merged = {k: dict(v) for k, v in DEFAULT_PARAMS.items()}
        for k, v in self.params.items():
            merged[DegradationKind.parse(k)].update(v)
        self.params = merged
        self.functions = {DegradationKind.parse(k): f for k, f in self.functions.items()}
        self.external = {DegradationKind.parse(k): h for k, h in self.external.items()}
        self._locks = {k: threading.Lock() for k in KINDS}

    def __deepcopy__(self, memo):
        return RestorerRegistry(copy.deepcopy(self.params), dict(self.functions), dict(self.external))

    def kinds(self):
        return KINDS

    def builtin(self, kind, image):
        kind = DegradationKind.parse(kind)
        return _builtin(kind, image, self.params[kind])

    def __call__(self, kind, image):
        kind = DegradationKind.parse(kind)
        image = check_image(image)
        if kind in self.functions:
            return check_image(self.functions[kind](image))
        hook = self.external.get(kind)
        if hook is not None:
            with self._locks[kind]:
                out = self._run_external(kind, hook, image)
            if out is not None:
                return out
        return self.builtin(kind, image)

    def _warn(self, msg):
        log.warning(msg)
        self.warnings.append(msg)

    def _run_external(self, kind, hook, image):
        with tempfile.TemporaryDirectory(prefix="adaptrestore-") as tmp:
            src, dst = Path(tmp) / "in.ppm", Path(tmp) / "out.ppm"
            save_image(image, src)
            try:
                proc = subprocess.run(hook.argv(src, dst), capture_output=True, timeout=hook.timeout)
            except subprocess.TimeoutExpired:
                self._warn(f"{kind.label}: external restorer timed out after {hook.timeout}s; using built-in")
                return None
            except OSError as exc:
                self._warn(f"{kind.label}: external restorer failed to start ({exc}); using built-in")
                return None
            if proc.returncode != 0:
                self._warn(f"{kind.label}: external restorer exited with {proc.returncode}; using built-in")
                return None
            try:
                return load_image(dst)
            except Exception as exc:  # any unreadable output means fallback
                self._warn(f"{kind.label}: external restorer output unreadable ({exc}); using built-in")
                return None


def set_external(kind, command_template: str, registry: RestorerRegistry | None = None, timeout: float = 10.0):
    """Return a copy of ``registry`` routing ``kind`` through ``command_template``.

    The template must contain ``{in}`` and ``{out}``; they are replaced by
    PPM file paths.  Exit code 0 means success.
    """
    if "{in}" not in command_template or "{out}" not in command_template:
        raise TemplateInvalid("command template needs both {in} and {out} placeholders")
    try:
        shlex.split(command_template)
    except ValueError as exc:
        raise TemplateInvalid(str(exc)) from exc
    new = copy.deepcopy(registry) if registry is not None else RestorerRegistry()
    new.external[DegradationKind.parse(kind)] = ExternalHook(command_template, float(timeout))
    return new


def restore(kind, image, registry: RestorerRegistry | None = None) -> np.ndarray:
    """Apply the restoration function for ``kind``.

    Output has the input's dimensions, except SUPER_RESOLUTION which doubles them.
    """
    registry = registry if registry is not None else RestorerRegistry()
    return registry(kind, image)
