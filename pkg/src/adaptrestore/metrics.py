"""Classification metrics from confusion matrices, and image-quality metrics."""

from __future__ import annotations

import math

import cv2
import numpy as np

from .exceptions import (
    DimensionMismatch,
    EmptyColumn,
    EmptyMatrix,
    EmptyRow,
    IndexOutOfRange,
    LengthMismatch,
    NonPositiveTime,
    TooSmall,
)
from .imaging import LUMA_WEIGHTS, check_image


def confusion(truth, predicted, n_classes: int) -> np.ndarray:
    """``C[i, j]`` counts samples with true class ``i`` predicted as ``j``."""
    truth = np.asarray(truth, dtype=np.int64).ravel()
    predicted = np.asarray(predicted, dtype=np.int64).ravel()
    if truth.shape != predicted.shape:
        raise LengthMismatch(f"{truth.size} truths vs {predicted.size} predictions")
    for arr in (truth, predicted):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise IndexOutOfRange(f"class index outside [0, {n_classes})")
    C = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(C, (truth, predicted), 1)
    return C


def accuracy(C) -> float:
    C = np.asarray(C)
    total = C.sum()
    if total <= 0:
        raise EmptyMatrix("confusion matrix has no counts")
    return float(np.trace(C) / total)


def sensitivity(C, i: int) -> float:
    """Row-normalized diagonal ``C[i, i] / sum_j C[i, j]`` (recall of class ``i``)."""
    C = np.asarray(C)
    row = C[i].sum()
    if row <= 0:
        raise EmptyRow(f"class {i} has no true samples")
    return float(C[i, i] / row)


def specificity(C, j: int) -> float:
    """Column-normalized diagonal ``C[j, j] / sum_i C[i, j]``.

    This is the per-class formula in its published form, which is what is
    usually called precision / positive predictive value.  See
    :func:`conventional_specificity` for the true-negative rate.
    """
    C = np.asarray(C)
    col = C[:, j].sum()
    if col <= 0:
        raise EmptyColumn(f"class {j} was never predicted")
    return float(C[j, j] / col)


def conventional_specificity(C, j: int) -> float:
    """True-negative rate ``TN / (TN + FP)`` of class ``j`` in one-vs-rest form."""
    C = np.asarray(C)
    total = C.sum()
    tp = C[j, j]
    fp = C[:, j].sum() - tp
    fn = C[j].sum() - tp
    tn = total - tp - fp - fn
    if tn + fp <= 0:
        raise EmptyRow(f"no negatives for class {j}")
    return float(tn / (tn + fp))


def multilabel_confusions(Y_true, P, theta: float) -> np.ndarray:
    """Per-class binarized ``2 x 2`` matrices (rows truth 0/1, cols predicted 0/1)."""
    Y_true = np.asarray(Y_true) > 0.5
    Y_pred = np.asarray(P) >= theta
    out = np.zeros((Y_true.shape[1], 2, 2), dtype=np.int64)
    for k in range(Y_true.shape[1]):
        out[k] = confusion(Y_true[:, k].astype(int), Y_pred[:, k].astype(int), 2)
    return out


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``math.inf`` for identical inputs."""
    a, b = check_image(a), check_image(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _gauss(x):
    return cv2.GaussianBlur(x, (SSIM_WINDOW, SSIM_WINDOW), SSIM_SIGMA, borderType=cv2.BORDER_REPLICATE)


def ssim(a, b, peak: float = 1.0) -> float:
    """Mean SSIM of the luminance planes (11x11 Gaussian window, sigma 1.5)."""
    a, b = check_image(a), check_image(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise TooSmall(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    x = a @ LUMA_WEIGHTS
    y = b @ LUMA_WEIGHTS
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mx, my = _gauss(x), _gauss(y)
    sxx = _gauss(x * x) - mx * mx
    syy = _gauss(y * y) - my * my
    sxy = _gauss(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def efficiency(acc: float, elapsed: float) -> float:
    """Accuracy per second of execution time."""
    if not elapsed > 0:
        raise NonPositiveTime(f"elapsed time must be positive, got {elapsed}")
    return acc / elapsed
