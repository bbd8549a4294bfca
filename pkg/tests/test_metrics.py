import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptrestore.exceptions import (
    DimensionMismatch,
    EmptyColumn,
    EmptyMatrix,
    EmptyRow,
    IndexOutOfRange,
    LengthMismatch,
    NonPositiveTime,
    TooSmall,
)
from adaptrestore.metrics import (
    accuracy,
    confusion,
    conventional_specificity,
    efficiency,
    multilabel_confusions,
    psnr,
    sensitivity,
    ssim,
    specificity,
)
from adaptrestore.synth import make_scene

C_WORKED = np.array([[8, 2], [1, 9]])


def test_confusion_examples():
    np.testing.assert_array_equal(confusion([0, 1, 2], [0, 1, 2], 3), np.eye(3, dtype=int))
    np.testing.assert_array_equal(confusion([], [], 3), np.zeros((3, 3), int))
    np.testing.assert_array_equal(confusion([0, 0, 1], [0, 1, 1], 2), [[1, 1], [0, 1]])


def test_confusion_errors():
    with pytest.raises(LengthMismatch):
        confusion([0, 1], [0], 2)
    with pytest.raises(IndexOutOfRange):
        confusion([0, 2], [0, 1], 2)
    with pytest.raises(IndexOutOfRange):
        confusion([0, -1], [0, 1], 2)


def test_worked_case():
    assert accuracy(C_WORKED) == 0.85
    assert sensitivity(C_WORKED, 0) == 0.8
    assert specificity(C_WORKED, 1) == 9 / 11
    assert accuracy(np.diag([3, 4, 5])) == 1.0
    assert sensitivity(np.eye(4), 2) == 1.0 and specificity(np.eye(4), 3) == 1.0


def test_conventional_specificity():
    # class 1 negatives are row 0: TN = 8, FP = 2
    assert conventional_specificity(C_WORKED, 1) == 0.8
    assert conventional_specificity(C_WORKED, 0) == 0.9


def test_metric_errors():
    with pytest.raises(EmptyMatrix):
        accuracy(np.zeros((3, 3)))
    with pytest.raises(EmptyRow):
        sensitivity(np.array([[1, 0], [0, 0]]), 1)
    with pytest.raises(EmptyColumn):
        specificity(np.array([[1, 0], [1, 0]]), 1)


def counting_oracles(truth, pred, P):
    n = len(truth)
    acc = sum(t == p for t, p in zip(truth, pred)) / n
    sens, spec = {}, {}
    for k in range(P):
        row = [p for t, p in zip(truth, pred) if t == k]
        col = [t for t, p in zip(truth, pred) if p == k]
        if row:
            sens[k] = sum(p == k for p in row) / len(row)
        if col:
            spec[k] = sum(t == k for t in col) / len(col)
    return acc, sens, spec


def test_random_matrices_match_oracles():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 80))
        truth = rng.integers(0, 7, n)
        pred = np.where(rng.random(n) < 0.6, truth, rng.integers(0, 7, n))
        C = confusion(truth, pred, 7)
        acc, sens, spec = counting_oracles(truth.tolist(), pred.tolist(), 7)
        assert accuracy(C) == acc
        for k, v in sens.items():
            assert sensitivity(C, k) == v
        for k, v in spec.items():
            assert specificity(C, k) == v


@settings(max_examples=100)
@given(st.lists(st.integers(0, 50), min_size=49, max_size=49).filter(lambda v: sum(v) > 0))
def test_accuracy_is_prevalence_weighted_sensitivity(counts):
    C = np.array(counts).reshape(7, 7)
    total = C.sum()
    weighted = sum(C[i].sum() / total * sensitivity(C, i) for i in range(7) if C[i].sum() > 0)
    assert abs(accuracy(C) - weighted) <= 1e-12
    assert 0 <= accuracy(C) <= 1


def test_multilabel_confusions():
    Y = np.array([[1, 0], [1, 1], [0, 0]])
    P = np.array([[0.9, 0.1], [0.5, 0.86], [0.86, 0.0]])
    M = multilabel_confusions(Y, P, 0.85)
    np.testing.assert_array_equal(M[0], [[0, 1], [1, 1]])
    np.testing.assert_array_equal(M[1], [[2, 0], [0, 1]])


def test_psnr_examples(scene):
    assert psnr(scene, scene) == math.inf
    a = np.full((8, 8, 3), 0.5)
    assert psnr(a, a + 1 / 255) == pytest.approx(20 * math.log10(255), abs=1e-9)
    b = np.clip(scene + 0.03, 0, 1)
    assert psnr(scene, b) == psnr(b, scene)
    with pytest.raises(DimensionMismatch):
        psnr(scene, scene[:10])


def test_psnr_decreasing_in_noise(scene):
    noise = np.random.default_rng(0).normal(size=scene.shape)
    vals = [psnr(scene, scene + s * noise * 0.01) for s in (1, 2, 4, 8)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_ssim_examples():
    x = make_scene(48, 48, seed=3)
    assert abs(ssim(x, x) - 1.0) <= 1e-9
    assert ssim(x, 1 - x) < 0.2
    y = np.clip(x + np.random.default_rng(1).normal(0, 0.05, x.shape), 0, 1)
    assert abs(ssim(x, y) - ssim(y, x)) <= 1e-9
    assert -1 <= ssim(x, y) < 1
    with pytest.raises(TooSmall):
        ssim(np.zeros((10, 40, 3)), np.zeros((10, 40, 3)))
    with pytest.raises(DimensionMismatch):
        ssim(x, x[:20])


def test_efficiency():
    assert efficiency(0.88, 108) == pytest.approx(0.008148148, rel=1e-6)
    assert efficiency(1.0, 1.0) == 1.0
    assert efficiency(0.9, 20) == efficiency(0.9, 10) / 2
    for bad in (0, -1):
        with pytest.raises(NonPositiveTime):
            efficiency(0.9, bad)
