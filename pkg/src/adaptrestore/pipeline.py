"""Frame pipeline: classify, route, restore or blend, write, log.

Configuration is a TOML file flattened to dotted keys (``blend.mode``,
``restorers.Denoising.radius`` ...); any key can be overridden with a
``--dotted.key value`` flag on the command line.
"""

from __future__ import annotations

import glob
import json
import shutil
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli
from sklearn.base import BaseEstimator, TransformerMixin

from .blend import aggregate, weights
from .classify.activations import sigmoid
from .classify.estimator import ResidualHeadClassifier
from .classify.head import ProbabilityVector, ResidualHead, load_model
from .exceptions import AdaptRestoreError, ConfigError, EmptySource, ModelLoadFailure, NoMatches
from .features import MIN_SIDE, extract_features, working_copy
from .imaging import load_image, save_image
from .metrics import efficiency
from .restore import RestorerRegistry, set_external
from .route import RouterConfig, SeverityBand, band, decide, verdict_to_dict
from .synth import DegradationKind, Recipe, degrade_sample, derive_seed, make_scene

IMAGE_SUFFIXES = (".ppm", ".png")


# -- configuration -------------------------------------------------------------


@dataclass
class PipelineConfig:
    model_path: str | None = None
    theta: float = 0.85
    band_low: float = 0.5
    blend_mode: str = "parallel"
    restorers: dict = field(default_factory=dict)
    external: dict = field(default_factory=dict)
    external_timeout: float = 10.0
    source: str | None = None
    out_dir: str | None = None
    log_path: str | None = None
    working_size: tuple = (256, 256)
    jobs: int = 1
    seed: int = 0
    log_timings: bool = True

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ConfigError(f"theta must lie in (0, 1), got {self.theta}")
        if self.blend_mode not in ("parallel", "sequential"):
            raise ConfigError(f"blend.mode must be parallel or sequential, got {self.blend_mode!r}")
        ws = self.working_size
        if isinstance(ws, (int, float)):
            ws = (int(ws), int(ws))
        self.working_size = tuple(int(v) for v in ws)
        if len(self.working_size) != 2 or min(self.working_size) < MIN_SIDE:
            raise ConfigError(f"working_size must be two sides >= {MIN_SIDE}")
        if int(self.jobs) < 1:
            raise ConfigError("jobs must be >= 1")
        self.jobs = int(self.jobs)
        try:
            RouterConfig(self.theta, self.band_low)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def router(self) -> RouterConfig:
        return RouterConfig(self.theta, self.band_low)

    def registry(self) -> RestorerRegistry:
        reg = RestorerRegistry(params=self.restorers)
        for kind, template in self.external.items():
            reg = set_external(kind, template, reg, self.external_timeout)
        return reg

    @classmethod
    def from_flat(cls, flat: dict) -> "PipelineConfig":
        kw: dict = {"restorers": {}, "external": {}}
        simple = {
            "model": "model_path",
            "model_path": "model_path",
            "theta": "theta",
            "band_low": "band_low",
            "blend.mode": "blend_mode",
            "source": "source",
            "out": "out_dir",
            "out_dir": "out_dir",
            "log": "log_path",
            "log_path": "log_path",
            "log.timings": "log_timings",
            "working_size": "working_size",
            "jobs": "jobs",
            "seed": "seed",
            "external_timeout": "external_timeout",
        }
        for key, value in flat.items():
            if key in simple:
                kw[simple[key]] = value
                continue
            parts = key.split(".")
            if parts[0] == "restorers" and len(parts) == 3:
                try:
                    kind = DegradationKind.parse(parts[1])
                except ValueError as exc:
                    raise ConfigError(f"unknown degradation kind in {key!r}") from exc
                if parts[2] == "external":
                    kw["external"][kind] = str(value)
                else:
                    kw["restorers"].setdefault(kind, {})[parts[2]] = value
                continue
            raise ConfigError(f"unknown configuration key {key!r}")
        return cls(**kw)


def _flatten(d: dict, prefix="") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_value(text: str):
    """Interpret an override as a TOML value, falling back to a bare string."""
    try:
        return tomli.loads(f"v = {text}")["v"]
    except tomli.TOMLDecodeError:
        return text


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    flat = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                flat = _flatten(tomli.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        flat[key] = parse_value(value) if isinstance(value, str) else value
    return PipelineConfig.from_flat(flat)


# -- frame sources -------------------------------------------------------------


@dataclass
class Frame:
    index: int
    source: str
    path: Path | None = None
    image: np.ndarray | None = None
    labels: frozenset | None = None
    clean: np.ndarray | None = None

    def load(self) -> np.ndarray:
        return self.image if self.image is not None else load_image(self.path)


def _synth_recipe(body: str) -> tuple[Recipe, int]:
    """Comma-separated ``Kind=n``, ``A+B=n``, ``clean=n``, ``size=S`` items; a bare ``n`` means ``clean=n``."""
    size = 256
    singles, combos, clean = {}, {}, 0
    for item in filter(None, (s.strip() for s in body.split(","))):
        key, _, val = item.partition("=")
        if not val and key.isdigit():
            key, val = "clean", key
        if not val:
            raise ConfigError(f"bad synth recipe item {item!r}")
        if key == "clean":
            clean = int(val)
        elif key == "size":
            size = int(val)
        elif "+" in key:
            combos[key] = int(val)
        else:
            singles[key] = int(val)
    recipe = Recipe.from_dict({"singles": singles, "combos": combos, "clean": clean})
    return recipe, size


def synth_frames(recipe: Recipe, seed: int = 0, size: int = 256) -> list[Frame]:
    """Scenes generated on the fly; frame ``i`` depends only on ``(seed, i)``."""
    out = []
    for i, labels in enumerate(recipe.label_sets()):
        s = derive_seed(seed, i)
        clean = make_scene(size, size, s)
        img, _ = degrade_sample(clean, labels, s, recipe.severity_range, recipe.sr_upsample)
        out.append(Frame(i, f"synth:{i}", image=img, labels=frozenset(labels), clean=clean))
    return out


def frames(spec, seed: int = 0) -> list[Frame]:
    """Resolve a source spec into an ordered frame list.

    Accepted forms: a directory (its .ppm/.png files), a glob pattern, a
    comma-separated file list or a list of paths, and ``synth:<recipe>``.
    Directory and glob results are sorted lexicographically.
    """
    if spec is None:
        raise EmptySource("no source given")
    if isinstance(spec, (list, tuple)):
        paths = [Path(p) for p in spec]
    elif str(spec).startswith("synth:"):
        recipe, size = _synth_recipe(str(spec)[len("synth:") :])
        result = synth_frames(recipe, seed, size)
        if not result:
            raise EmptySource(f"{spec}: recipe yields no frames")
        return result
    elif Path(spec).is_dir():
        paths = sorted(p for p in Path(spec).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not paths:
            raise EmptySource(f"{spec}: no images")
    elif any(ch in str(spec) for ch in "*?["):
        paths = [Path(p) for p in sorted(glob.glob(str(spec)))]
        if not paths:
            raise NoMatches(f"{spec}: no matches")
    else:
        paths = [Path(p.strip()) for p in str(spec).split(",") if p.strip()]
    if not paths:
        raise EmptySource(f"{spec}: no frames")
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        raise NoMatches(f"no such file(s): {', '.join(missing)}")
    return [Frame(i, str(p), path=p) for i, p in enumerate(paths)]


# -- estimator -------------------------------------------------------------------


def classifier_from(model) -> ResidualHeadClassifier:
    if isinstance(model, ResidualHeadClassifier):
        return model
    if isinstance(model, ResidualHead):
        return ResidualHeadClassifier.from_head(model)
    try:
        return ResidualHeadClassifier.from_head(load_model(model))
    except (OSError, ValueError) as exc:
        raise ModelLoadFailure(f"cannot load model {model}: {exc}") from exc


class AdaptiveRestorer(TransformerMixin, BaseEstimator):
    """Images in, restored images out, routed by the degradation classifier.

    ``fit`` trains the classification head on images and label-indicator
    rows; alternatively pass a trained ``model`` (head, classifier or model
    file path) and call ``transform`` directly.

    Parameters
    ----------
    model : ResidualHead, ResidualHeadClassifier, path or None
    theta, band_low : float
    blend_mode : {"parallel", "sequential"}
    registry : RestorerRegistry or None
    working_size : (int, int)
    classifier_params : dict or None
        Passed to :class:`ResidualHeadClassifier` by ``fit``.
    """

    def __init__(
        self,
        model=None,
        theta=0.85,
        band_low=0.5,
        blend_mode="parallel",
        registry=None,
        working_size=(256, 256),
        classifier_params=None,
    ):
        self.model = model
        self.theta = theta
        self.band_low = band_low
        self.blend_mode = blend_mode
        self.registry = registry
        self.working_size = working_size
        self.classifier_params = classifier_params

    def _features(self, image):
        return extract_features(working_copy(image, self.working_size))

    def fit(self, X, y):
        F = np.array([self._features(img) for img in X])
        self.classifier_ = ResidualHeadClassifier(**(self.classifier_params or {})).fit(F, y)
        self.registry_ = self.registry if self.registry is not None else RestorerRegistry()
        return self

    def _ready(self):
        if not hasattr(self, "classifier_"):
            if self.model is None:
                raise ModelLoadFailure("no model: call fit or pass model=")
            self.classifier_ = classifier_from(self.model)
            self.registry_ = self.registry if self.registry is not None else RestorerRegistry()

    def probabilities(self, image) -> ProbabilityVector:
        self._ready()
        z = self.classifier_.head_.logits(self._features(image))[0]
        return ProbabilityVector(sigmoid(z), "sigmoid", z)

    def predict_proba(self, X):
        return np.array([self.probabilities(img).p for img in X])

    def predict(self, X):
        """Verdict per image."""
        cfg = RouterConfig(self.theta, self.band_low)
        return [decide(self.probabilities(img), cfg) for img in X]

    def restore_one(self, image, probs=None, timings=None, executor=None):
        """``(output, verdict)``; undamaged frames come back as the input object."""
        self._ready()
        probs = probs if probs is not None else self.probabilities(image)
        verdict = decide(probs, RouterConfig(self.theta, self.band_low))
        if not verdict.active:
            return image, verdict
        out = aggregate(image, probs, self.theta, self.registry_, self.blend_mode, executor, timings)
        return out, verdict

    def transform(self, X):
        return [self.restore_one(img)[0] for img in X]


# -- running -----------------------------------------------------------------------


def _percentiles(values) -> dict:
    if not values:
        return {"p50": None, "p95": None, "mean": None}
    a = np.asarray(values, dtype=np.float64)
    return {"p50": float(np.percentile(a, 50)), "p95": float(np.percentile(a, 95)), "mean": float(a.mean())}


def _output_path(out_dir: Path, frame: Frame) -> Path:
    if frame.path is not None:
        return out_dir / f"{frame.index:05d}_{frame.path.name}"
    return out_dir / f"{frame.index:05d}.ppm"


def process_frame(restorer: AdaptiveRestorer, frame: Frame, cfg: PipelineConfig) -> dict:
    """Run one frame end to end and return its log record."""
    t0 = time.perf_counter()
    rec: dict = {"frame_id": frame.index, "source": frame.source}
    try:
        image = frame.load()
        tc = time.perf_counter()
        probs = restorer.probabilities(image)
        classify_ms = 1000.0 * (time.perf_counter() - tc)
        timings = {"classify_ms": classify_ms, "restore_ms": 0.0, "blend_ms": 0.0}
        out, verdict = restorer.restore_one(image, probs, timings)
        router = cfg.router()
        rec.update(verdict_to_dict(verdict, probs, router))
        rec["probs"] = [float(v) for v in probs.p]
        rec["weights"] = weights(probs, cfg.theta).to_list() if verdict.active else []
        rec["tolerable"] = any(band(float(p), router) is SeverityBand.TOLERABLE for p in probs.p)
        rec["output"] = None
        if cfg.out_dir is not None:
            dst = _output_path(Path(cfg.out_dir), frame)
            if not verdict.active and frame.path is not None:
                shutil.copyfile(frame.path, dst)
            else:
                save_image(out, dst)
            rec["output"] = str(dst)
        timings["total_ms"] = 1000.0 * (time.perf_counter() - t0)
        if cfg.log_timings:
            rec["timings"] = timings
    except (AdaptRestoreError, OSError) as exc:
        rec["error"] = f"{type(exc).__name__}: {exc}"
    return rec


@dataclass
class RunSummary:
    n_frames: int
    counts: dict
    n_tolerable: int
    n_errors: int
    latency_ms: dict
    wall_s: float
    records: list = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "frames": self.n_frames,
            "counts": self.counts,
            "tolerable": self.n_tolerable,
            "errors": self.n_errors,
            "latency_ms": self.latency_ms,
            "wall_s": self.wall_s,
        }


def run_pipeline(config: PipelineConfig, model=None) -> RunSummary:
    """Process every frame of ``config.source``.

    Frames are processed by up to ``config.jobs`` threads but written to the
    log in source order.  Per-frame failures are logged and skipped.
    """
    restorer = AdaptiveRestorer(
        model if model is not None else config.model_path,
        config.theta,
        config.band_low,
        config.blend_mode,
        config.registry(),
        config.working_size,
    )
    restorer._ready()
    stream = frames(config.source, config.seed)
    if config.out_dir is not None:
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)

    log_fh = None
    if config.log_path is not None:
        Path(config.log_path).parent.mkdir(parents=True, exist_ok=True)
        log_fh = open(config.log_path, "w")
    lock = threading.Lock()
    records = []
    t0 = time.perf_counter()
    try:
        with ThreadPoolExecutor(config.jobs) as pool:
            # map yields in submission order, which gives ordered emission
            for rec in pool.map(lambda f: process_frame(restorer, f, config), stream):
                with lock:
                    records.append(rec)
                    if log_fh is not None:
                        log_fh.write(json.dumps(rec, sort_keys=True) + "\n")
    finally:
        if log_fh is not None:
            log_fh.close()
    wall = time.perf_counter() - t0

    counts = {"Undamaged": 0, "Single": 0, "Multiple": 0}
    for rec in records:
        if "verdict" in rec:
            counts[rec["verdict"]] += 1
    totals = [r["timings"]["total_ms"] for r in records if "timings" in r]
    return RunSummary(
        n_frames=len(records),
        counts=counts,
        n_tolerable=sum(1 for r in records if r.get("tolerable")),
        n_errors=sum(1 for r in records if "error" in r),
        latency_ms=_percentiles(totals),
        wall_s=wall,
        records=records,
    )


@dataclass
class BenchReport:
    stages: dict
    frames: int
    repetitions: int
    accuracy: float | None = None
    classify_elapsed_s: float | None = None
    efficiency: float | None = None

    def rows(self) -> list[dict]:
        out = []
        for stage, st in self.stages.items():
            fps = 1000.0 / st["mean"] if st["mean"] else None
            out.append({"stage": stage, **st, "fps": fps})
        return out

    def to_dict(self) -> dict:
        return {
            "frames": self.frames,
            "repetitions": self.repetitions,
            "stages": self.rows(),
            "accuracy": self.accuracy,
            "classify_elapsed_s": self.classify_elapsed_s,
            "efficiency": self.efficiency,
        }


def bench(config: PipelineConfig, repetitions: int = 1, model=None) -> BenchReport:
    """Time each stage over ``repetitions`` passes of the source, in memory.

    When frames carry ground-truth labels (``synth:`` sources), accuracy is
    the share of frames whose active set equals the true label set, and
    efficiency is that accuracy over the total classification time.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    restorer = AdaptiveRestorer(
        model if model is not None else config.model_path,
        config.theta,
        config.band_low,
        config.blend_mode,
        config.registry(),
        config.working_size,
    )
    restorer._ready()
    stream = frames(config.source, config.seed)
    images = [f.load() for f in stream]
    samples = {k: [] for k in ("classify", "restore", "blend", "total")}
    hits = 0
    for _ in range(repetitions):
        for frame, image in zip(stream, images):
            t0 = time.perf_counter()
            probs = restorer.probabilities(image)
            t1 = time.perf_counter()
            timings = {}
            _, verdict = restorer.restore_one(image, probs, timings)
            t2 = time.perf_counter()
            samples["classify"].append(1000.0 * (t1 - t0))
            samples["restore"].append(timings.get("restore_ms", 0.0))
            samples["blend"].append(timings.get("blend_ms", 0.0))
            samples["total"].append(1000.0 * (t2 - t0))
            if frame.labels is not None:
                hits += frozenset(k for k, _ in verdict.active) == frame.labels
    report = BenchReport({k: _percentiles(v) for k, v in samples.items()}, len(stream), repetitions)
    if all(f.labels is not None for f in stream):
        report.accuracy = hits / (len(stream) * repetitions)
        report.classify_elapsed_s = sum(samples["classify"]) / 1000.0
        report.efficiency = efficiency(report.accuracy, report.classify_elapsed_s)
    return report
