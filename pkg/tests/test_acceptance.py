"""Acceptance criteria 1-10.

Each test prints one ``[PASS]`` / ``[FAIL]`` line and then asserts.  Run
alone with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

import json
import sys
import time

import numpy as np
import pytest

from adaptrestore.blend import aggregate, weights
from adaptrestore.classify import (
    Hyperparams,
    OptimizerState,
    ResidualHead,
    ResidualHeadClassifier,
    adam_step,
    sgd_momentum_step,
)
from adaptrestore.features import DegradationFeatures, extract_features, working_copy
from adaptrestore.imaging import resize, save_image
from adaptrestore.metrics import accuracy, confusion, psnr, sensitivity, specificity
from adaptrestore.pipeline import AdaptiveRestorer, PipelineConfig, run_pipeline
from adaptrestore.restore import RestorerRegistry, restore
from adaptrestore.route import RouterConfig, SeverityBand, band, decide
from adaptrestore.synth import (
    KINDS,
    DegradationKind,
    Recipe,
    apply_degradation,
    build_corpus,
    make_scene,
    stratified_split,
    write_scenes,
)

D = DegradationKind


@pytest.fixture
def report(capsys):
    def _report(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] AC{number:<2} {title}: {detail}")
        assert ok, f"AC{number} {title}: {detail}"

    return _report


# -- 1 -----------------------------------------------------------------------------


def test_ac01_formula_oracles(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(30, 300))
        truth = rng.integers(0, 7, n)
        pred = np.where(rng.random(n) < 0.7, truth, rng.integers(0, 7, n))
        C = confusion(truth, pred, 7)
        pairs = list(zip(truth.tolist(), pred.tolist()))
        mismatches += accuracy(C) != sum(t == p for t, p in pairs) / n
        for k in range(7):
            row = [p for t, p in pairs if t == k]
            col = [t for t, p in pairs if p == k]
            if row:
                mismatches += sensitivity(C, k) != sum(p == k for p in row) / len(row)
            if col:
                mismatches += specificity(C, k) != sum(t == k for t in col) / len(col)
    W = np.array([[8, 2], [1, 9]])
    worked = accuracy(W) == 0.85 and sensitivity(W, 0) == 0.8 and specificity(W, 1) == 9 / 11
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and worked and elapsed < 5
    report(1, "formula oracles", ok, f"mismatches={mismatches} worked_case={worked} time={elapsed:.2f}s")


# -- 2 -----------------------------------------------------------------------------


def test_ac02_router_equivalence(report):
    rng = np.random.default_rng(7)
    n = 100_000
    mismatches = 0
    t0 = time.perf_counter()
    for theta in (0.5, 0.85, 0.99):
        P = rng.random((n, 7))
        # plant exact-boundary values so p == theta is exercised
        P[rng.random((n, 7)) < 0.05] = theta
        cfg = RouterConfig(theta, 0.4)
        counts = (P >= theta).sum(axis=1)
        expected = np.where(counts == 0, "Undamaged", np.where(counts == 1, "Single", "Multiple"))
        for row, exp in zip(P.tolist(), expected.tolist()):
            mismatches += decide(row, cfg).name != exp
    elapsed = time.perf_counter() - t0
    boundary = decide([0.85, 0, 0, 0, 0, 0, 0]).name == "Single"
    ok = mismatches == 0 and boundary and elapsed < 5
    report(2, "router equivalence", ok, f"vectors=3x{n} mismatches={mismatches} boundary_ok={boundary} time={elapsed:.2f}s")


# -- 3 -----------------------------------------------------------------------------


def _oracle_blend(image, probs, theta, fns):
    active = [k for k in KINDS if probs[int(k)] >= theta]
    mu = 1.0 / sum(probs[int(k)] for k in active)
    outs = {k: fns[k](image) for k in active}
    res = np.empty_like(image)
    h, w, c = image.shape
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                res[y, x, ch] = mu * sum(probs[int(k)] * outs[k][y, x, ch] for k in active)
    return res


def test_ac03_aggregation_fidelity(report):
    worst = 0.0
    for case in range(20):
        rng = np.random.default_rng(300 + case)
        fns = {}
        for k in KINDS[:6]:
            g, b = rng.uniform(0.1, 0.9), rng.uniform(0, 0.1)
            fns[k] = lambda x, g=g, b=b: g * x + b
        probs = list(rng.uniform(0, 0.84, 6)) + [0.0]
        for i in rng.choice(6, int(rng.integers(2, 7)), replace=False):
            probs[i] = rng.uniform(0.85, 1.0)
        img = rng.random((7, 6, 3))
        out = aggregate(img, probs, 0.85, RestorerRegistry(functions=fns))
        worst = max(worst, float(np.max(np.abs(out - _oracle_blend(img, probs, 0.85, fns)))))

    scene = make_scene(64, 64, 1)
    single = aggregate(scene, [0.95, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1], 0.85)
    bit_exact = single.tobytes() == restore(D.DENOISING, scene).tobytes()
    w = weights([0.9, 0.85, 0, 0, 0, 0, 0], 0.85).weights
    w_err = max(abs(w[0] - 18 / 35), abs(w[1] - 17 / 35))
    ok = worst <= 1e-12 and bit_exact and w_err <= 1e-12
    report(3, "aggregation fidelity", ok, f"max_err={worst:.2e} single_bit_exact={bit_exact} weight_err={w_err:.1e}")


# -- 4 -----------------------------------------------------------------------------


def test_ac04_optimizer_fidelity(report):
    st = OptimizerState("sgd_momentum", lr=0.1, momentum=0.9)
    w1 = sgd_momentum_step(st, np.zeros(1), np.ones(1))[0]
    # exact in the sense of matching the recurrence evaluated in floating point
    one_step = w1 == 0.0 - 0.1 * (0.9 * 0.0 + (1 - 0.9) * 1.0) and abs(w1 + 0.01) < 1e-15

    rng = np.random.default_rng(4)
    st = OptimizerState("sgd_momentum", lr=0.03, momentum=0.0)
    w = ref = rng.normal(size=5)
    plain = True
    for _ in range(100):
        g = rng.normal(size=5)
        w = sgd_momentum_step(st, w, g)
        ref = ref - 0.03 * g
        plain &= bool(np.array_equal(w, ref))

    st = OptimizerState("adam", lr=0.05)
    v = np.array([1.0, 1.0])
    steps = None
    for i in range(1, 501):
        v = adam_step(st, v, v)
        if steps is None and np.linalg.norm(v) < 1e-3:
            steps = i
    norm = float(np.linalg.norm(v))
    ok = one_step and plain and norm < 1e-3
    report(4, "optimizer fidelity", ok, f"dW={float(w1)!r} beta0_equals_sgd={plain} adam_norm_500={norm:.1e} first_below={steps}")


# -- 5 -----------------------------------------------------------------------------


def test_ac05_gradient_check(report):
    t0 = time.perf_counter()
    worst = 0.0
    eps = 1e-5
    for draw in range(100):
        rng = np.random.default_rng(5000 + draw)
        hidden = int(rng.integers(3, 7))
        head = ResidualHead.initialize(16, hidden, 7, seed=draw)
        head.b_in[:] = rng.normal(0, 0.2, hidden)
        head.b_res[:] = rng.normal(0, 0.2, hidden)
        X = rng.normal(size=(int(rng.integers(1, 5)), 16))
        Y = (rng.random((len(X), 7)) < 0.3).astype(float)
        mode = "sigmoid" if draw % 2 == 0 else "softmax"
        _, grads = head.loss_and_grads(X, Y, mode)
        params = head.params()
        a, n = [], []
        for i, p in enumerate(params):
            for idx in np.ndindex(p.shape):
                plus = [q.copy() for q in params]
                minus = [q.copy() for q in params]
                plus[i][idx] += eps
                minus[i][idx] -= eps
                lp = head.with_params(plus).loss(X, Y, mode)
                lm = head.with_params(minus).loss(X, Y, mode)
                n.append((lp - lm) / (2 * eps))
                a.append(grads[i][idx])
        a, n = np.array(a), np.array(n)
        worst = max(worst, float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12)))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 30
    report(5, "gradient check", ok, f"draws=100 max_rel_err={worst:.2e} time={elapsed:.1f}s")


# -- 6 -----------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_corpus(tmp_path_factory):
    clean = tmp_path_factory.mktemp("ac_clean")
    write_scenes(clean, 64, size=256, seed=2026)
    return clean, build_corpus(clean, Recipe.uniform(100, severity_range=(0.5, 0.9)), seed=6)


def test_ac06_desk_scale_classification(report, desk_corpus):
    _, corpus = desk_corpus
    t0 = time.perf_counter()
    train_set, test_set = stratified_split(corpus, 0.2, seed=6)
    feats = DegradationFeatures()
    Xtr = feats.transform([s.image for s in train_set])
    Xte = feats.transform([s.image for s in test_set])
    ytr = train_set.label_matrix().argmax(axis=1)
    yte = test_set.label_matrix().argmax(axis=1)
    hp = Hyperparams()
    clf = ResidualHeadClassifier(
        hidden=hp.hidden,
        optimizer="adam",
        learning_rate=0.001,
        epochs=35,
        batch_size=64,
        random_state=0,
    ).fit(Xtr, ytr)
    acc = float((clf.predict(Xte) == yte).mean())
    elapsed = time.perf_counter() - t0
    ok = len(corpus) == 700 and len(test_set) == 140 and acc >= 0.85 and elapsed < 300
    report(6, "desk-scale classification", ok, f"n={len(corpus)} test={len(test_set)} accuracy={acc:.3f} time={elapsed:.1f}s")


# -- 7 -----------------------------------------------------------------------------


def test_ac07_restoration_quality(report):
    t0 = time.perf_counter()
    rates = {}
    for kind in KINDS:
        wins = 0
        for i in range(50):
            clean = make_scene(256, 256, seed=70_000 + i)
            deg = apply_degradation(clean, kind, 0.6, seed=i)
            out = restore(kind, deg)
            if kind is D.SUPER_RESOLUTION:
                wins += psnr(out, clean) >= psnr(resize(deg, 256, 256, "bicubic"), clean)
            else:
                wins += psnr(out, clean) > psnr(deg, clean)
        rates[kind] = wins / 50
    elapsed = time.perf_counter() - t0
    ok = all(r >= (0.6 if k is D.SUPER_RESOLUTION else 0.8) for k, r in rates.items()) and elapsed < 180
    detail = " ".join(f"{k.label}={r:.2f}" for k, r in rates.items())
    report(7, "restoration quality", ok, f"{detail} time={elapsed:.1f}s")


# -- 8 -----------------------------------------------------------------------------


def test_ac08_threshold_bands(report):
    got = {p: band(p) for p in (0.3, 0.6, 0.85)}
    edges = band(0.5) is SeverityBand.TOLERABLE and band(np.nextafter(0.85, 0)) is SeverityBand.TOLERABLE
    ok = (
        got[0.3] is SeverityBand.NONE
        and got[0.6] is SeverityBand.TOLERABLE
        and got[0.85] is SeverityBand.SIGNIFICANT
        and edges
    )
    report(8, "threshold bands", ok, " ".join(f"{p}->{b.value}" for p, b in got.items()) + f" edges_ok={edges}")


# -- 9 -----------------------------------------------------------------------------


def test_ac09_pipeline_determinism(report, desk_corpus, tmp_path):
    clean_dir, corpus = desk_corpus
    extra = build_corpus(clean_dir, Recipe(clean=100), seed=60)
    X = DegradationFeatures().transform([s.image for s in corpus.samples + extra.samples])
    Y = np.vstack([corpus.label_matrix(), extra.label_matrix()])
    head = ResidualHeadClassifier(random_state=0).fit(X, Y).head_

    src = tmp_path / "src"
    src.mkdir()
    for i in range(8):
        save_image(make_scene(256, 256, 90_000 + i), src / f"clean_{i}.ppm")
    for i, kind in enumerate((D.DENOISING, D.DERAINING, D.DEHAZING_INDOOR, D.ENHANCEMENT)):
        save_image(apply_degradation(make_scene(256, 256, 91_000 + i), kind, 0.8, i), src / f"deg_{i}.ppm")

    logs, summaries = [], []
    for jobs in (1, 8):
        cfg = PipelineConfig(
            source=str(src),
            out_dir=str(tmp_path / f"out{jobs}"),
            log_path=str(tmp_path / f"log{jobs}.jsonl"),
            jobs=jobs,
            seed=9,
            log_timings=False,
        )
        summaries.append(run_pipeline(cfg, model=head))
        logs.append((tmp_path / f"log{jobs}.jsonl").read_text().replace(f"out{jobs}", "OUT"))
    same_logs = logs[0] == logs[1]
    undamaged = [json.loads(line) for line in logs[0].splitlines() if json.loads(line).get("verdict") == "Undamaged"]
    identical = all(
        (tmp_path / "out1" / rec["output"].split("/")[-1]).read_bytes() == open(rec["source"], "rb").read()
        for rec in undamaged
    )
    ok = same_logs and identical and len(undamaged) > 0
    report(9, "pipeline determinism", ok, f"logs_equal(jobs 1 vs 8)={same_logs} undamaged={len(undamaged)} byte_identical={identical}")


# -- 10 ----------------------------------------------------------------------------


def test_ac10_throughput(report):
    head = ResidualHead.initialize(16, 64, 7, seed=0)
    frames = [apply_degradation(make_scene(256, 256, 100 + i), KINDS[i % 6], 0.7, i) for i in range(30)]
    for f in frames[:3]:
        extract_features(working_copy(f))
    t0 = time.perf_counter()
    for f in frames:
        head.logits(extract_features(working_copy(f)))
    classify_fps = len(frames) / (time.perf_counter() - t0)

    # full path with the verdict forced to Single for each kind in turn
    t0 = time.perf_counter()
    for i, f in enumerate(frames):
        probs = np.full(7, 0.01)
        probs[i % 6] = 0.95
        est = AdaptiveRestorer(head)
        est._ready()
        est.probabilities(f)
        est.restore_one(f, probs=probs)
    single_fps = len(frames) / (time.perf_counter() - t0)
    ok = classify_fps >= 30 and single_fps >= 5
    report(10, "throughput", ok, f"classify={classify_fps:.1f} fps (target 30) single_restore={single_fps:.1f} fps (target 5)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
