"""Hand-crafted 16-slot degradation descriptor.

Slot order is fixed (see :data:`FEATURE_NAMES`).  Raw values are mapped to
roughly ``[0, 1]`` by the frozen constants in :data:`NORMALIZATION`; nothing
here is fit to data.
"""

from __future__ import annotations

import cv2
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import TooSmall
from .imaging import LAPLACIAN, check_image, filter2d, resize

FEATURE_NAMES = (
    "laplacian_var",
    "gradient_p95",
    "noise_sigma",
    "residual_tail_mass",
    "dark_channel_mean",
    "rms_contrast",
    "gradient_anisotropy",
    "streak_density",
    "mean_luminance",
    "luminance_entropy",
    "shadow_fraction",
    "hf_energy_ratio",
    "width",
    "height",
    "saturation_mean",
    "dark_channel_top_minus_bottom",
)
N_FEATURES = len(FEATURE_NAMES)

# Frozen per-slot maps to roughly [0, 1].
#   ("lin", offset, scale):  (raw - offset) / scale
#   ("log", knee, top):      log1p(raw / knee) / log1p(top / knee)
# The log form is used for slots whose raw values span several decades
# (sharpness, noise, component density, HF ratio); it maps 0 to 0 and is
# strictly increasing, so monotone probes carry over from raw to normalized.
NORMALIZATION = (
    ("log", 1e-4, 0.3),  # laplacian_var
    ("log", 0.01, 0.4),  # gradient_p95
    ("log", 1e-3, 0.15),  # noise_sigma
    ("lin", 0.0, 0.4),  # residual_tail_mass
    ("lin", 0.0, 1.0),  # dark_channel_mean
    ("lin", 0.0, 0.3),  # rms_contrast
    ("lin", 0.0, 1.0),  # gradient_anisotropy
    ("log", 1e-4, 0.006),  # streak_density (components per pixel)
    ("lin", 0.0, 1.0),  # mean_luminance
    ("lin", 0.0, 8.0),  # luminance_entropy (bits)
    ("lin", 0.0, 1.0),  # shadow_fraction
    ("log", 0.01, 0.2),  # hf_energy_ratio
    ("lin", 0.0, 1.0),  # width (already /1024)
    ("lin", 0.0, 1.0),  # height (already /1024)
    ("lin", 0.0, 1.0),  # saturation_mean
    ("lin", -0.2, 0.4),  # dark_channel_top_minus_bottom
)
_LOG = np.array([kind == "log" for kind, _, _ in NORMALIZATION])
_A = np.array([a for _, a, _ in NORMALIZATION])
_B = np.array([b for _, _, b in NORMALIZATION])
_LOG_DEN = np.where(_LOG, np.log1p(_B / np.where(_LOG, _A, 1.0)), 1.0)

DARK_WINDOW = 7
MIN_SIDE = 16

_NOISE_KERNEL = np.array([[1.0, -2.0, 1.0], [-2.0, 4.0, -2.0], [1.0, -2.0, 1.0]]) / 6.0
_DARK_ELEMENT = np.ones((DARK_WINDOW, DARK_WINDOW), np.uint8)
_STREAK_ELEMENT = np.ones((1, 5), np.uint8)
_STREAK_THRESHOLD = 0.06


def dark_channel(image, window: int = DARK_WINDOW) -> np.ndarray:
    """Per-pixel RGB minimum followed by a ``window x window`` minimum filter."""
    r, g, b = cv2.split(np.asarray(image, dtype=np.float64))
    m = np.minimum(np.minimum(r, g), b)
    return cv2.erode(m, np.ones((window, window), np.uint8), borderType=cv2.BORDER_REPLICATE)


def _gradient_energies(lum):
    dx = lum[:, 1:] - lum[:, :-1]
    dy = lum[1:] - lum[:-1]
    return float(np.sum(dx * dx)), float(np.sum(dy * dy))


def gradient_anisotropy(lum) -> float:
    """Share of gradient energy carried by horizontal differences.

    Vertical streaks push this toward 1; a 90 degree rotation maps ``a`` to ``1 - a``.
    """
    eh, ev = _gradient_energies(lum)
    total = eh + ev
    if total == 0.0:
        return 0.5
    return eh / total


def _streak_count(lum) -> int:
    opened = cv2.morphologyEx(lum.astype(np.float32), cv2.MORPH_OPEN, _STREAK_ELEMENT, borderType=cv2.BORDER_REPLICATE)
    mask = ((lum - opened) > _STREAK_THRESHOLD).astype(np.uint8)
    n, _, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
    if n <= 1:
        return 0
    w = stats[1:, cv2.CC_STAT_WIDTH]
    h = stats[1:, cv2.CC_STAT_HEIGHT]
    return int(np.count_nonzero((h >= 6) & (h >= 2 * w)))


def raw_features(image) -> np.ndarray:
    """The 16 descriptor values before normalization."""
    image = check_image(image)
    h, w = image.shape[:2]
    if h < MIN_SIDE or w < MIN_SIDE:
        raise TooSmall(f"features need at least {MIN_SIDE}x{MIN_SIDE}, got {w}x{h}")
    r, g, b = cv2.split(image)
    lum = 0.299 * r + 0.587 * g + 0.114 * b
    mn = np.minimum(np.minimum(r, g), b)
    mx = np.maximum(np.maximum(r, g), b)
    f = np.zeros(N_FEATURES)

    lap = filter2d(lum, LAPLACIAN)
    f[0] = lap.var()

    gx = np.empty_like(lum)
    gy = np.empty_like(lum)
    gx[:, 1:-1] = 0.5 * (lum[:, 2:] - lum[:, :-2])
    gx[:, 0], gx[:, -1] = lum[:, 1] - lum[:, 0], lum[:, -1] - lum[:, -2]
    gy[1:-1] = 0.5 * (lum[2:] - lum[:-2])
    gy[0], gy[-1] = lum[1] - lum[0], lum[-1] - lum[-2]
    grad = np.sqrt(gx * gx + gy * gy).ravel()
    k = int(round(0.95 * (grad.size - 1)))
    f[1] = np.partition(grad, k)[k]

    resid = filter2d(image, _NOISE_KERNEL).ravel()
    a = np.abs(resid)
    f[2] = np.median(a) / 0.6745
    # tail mass beyond 3 robust sigmas: 0.27% for Gaussian noise, large for sparse edges/streaks
    f[3] = np.count_nonzero(a > 3.0 * f[2]) / a.size if f[2] > 0 else float(np.any(a > 0))

    dark = cv2.erode(mn, _DARK_ELEMENT, borderType=cv2.BORDER_REPLICATE)
    f[4] = dark.mean()
    f[5] = lum.std() if lum.max() > lum.min() else 0.0
    eh, ev = _gradient_energies(lum)
    f[6] = 0.5 if eh + ev == 0.0 else eh / (eh + ev)
    f[7] = _streak_count(lum) / float(h * w)
    f[8] = lum.mean()

    q = np.clip((lum * 256).astype(np.intp), 0, 255)
    hist = np.bincount(q.ravel(), minlength=256) / q.size
    nz = hist[hist > 0]
    f[9] = -np.sum(nz * np.log2(nz))
    f[10] = np.count_nonzero(lum < 0.1) / lum.size

    # energy lost by a 2x down/up cycle relative to gradient energy;
    # near zero for content that is already band-limited to half resolution
    grad_energy = eh + ev
    if grad_energy > 1e-20:
        h2, w2 = h // 2, w // 2
        small = cv2.resize(lum[: 2 * h2, : 2 * w2], (w2, h2), interpolation=cv2.INTER_AREA)
        back = cv2.resize(small, (w, h), interpolation=cv2.INTER_CUBIC)
        d = lum - back
        f[11] = float(np.sum(d * d)) / grad_energy
    f[12] = min(w / 1024.0, 1.0)
    f[13] = min(h / 1024.0, 1.0)

    sat = np.divide(mx - mn, mx, out=np.zeros_like(mx), where=mx > 0)
    f[14] = sat.mean()

    third = max(1, h // 3)
    f[15] = dark[:third].mean() - dark[-third:].mean()
    return f


def normalize(raw) -> np.ndarray:
    """Apply the frozen per-slot maps in :data:`NORMALIZATION`."""
    raw = np.asarray(raw, dtype=np.float64)
    lin = (raw - _A) / _B
    log = np.log1p(np.maximum(raw, 0.0) / np.where(_LOG, _A, 1.0)) / _LOG_DEN
    return np.where(_LOG, log, lin)


def extract_features(image) -> np.ndarray:
    """Normalized 16-slot descriptor of ``image`` (which must be >= 16x16)."""
    return normalize(raw_features(image))


def working_copy(image, working_size=(256, 256)) -> np.ndarray:
    w, h = working_size
    return resize(image, int(w), int(h), method="bicubic")


class DegradationFeatures(TransformerMixin, BaseEstimator):
    """Stateless transformer: images -> ``(n_samples, 16)`` descriptor matrix.

    Parameters
    ----------
    working_size : (int, int) or None
        Every image is resampled to this ``(width, height)`` before
        extraction; ``None`` keeps native resolution.
    normalize : bool
        Apply the frozen affine normalization.
    """

    def __init__(self, working_size=(256, 256), normalize=True):
        self.working_size = working_size
        self.normalize = normalize

    def fit(self, X, y=None):
        self.n_features_out_ = N_FEATURES
        return self

    def transform(self, X):
        rows = []
        for image in X:
            if self.working_size is not None:
                image = working_copy(image, self.working_size)
            rows.append(extract_features(image) if self.normalize else raw_features(image))
        return np.array(rows).reshape(-1, N_FEATURES)

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags
