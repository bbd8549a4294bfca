"""Synthetic degradations, labeled corpora and stratified splitting."""

from __future__ import annotations

import colorsys
import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import EmptyCleanSet, StratumTooSmall, UnwritableManifest
from .imaging import box_downsample, check_image, filter2d, load_image, resize, save_image


class DegradationKind(enum.IntEnum):
    """The seven degradation classes, indexed 0..6 in canonical order."""

    DENOISING = 0
    DEHAZING_INDOOR = 1
    DEHAZING_OUTDOOR = 2
    DEBLURRING = 3
    DERAINING = 4
    ENHANCEMENT = 5
    SUPER_RESOLUTION = 6

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def parse(cls, value) -> "DegradationKind":
        """Accept an index, a member, a label (``"DehazingIndoor"``) or a member name."""
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        key = str(value).replace("_", "").replace("-", "").lower()
        for kind in cls:
            if key in (kind.label.lower(), kind.name.replace("_", "").lower()):
                return kind
        raise ValueError(f"unknown degradation kind {value!r}")


_LABELS = {
    DegradationKind.DENOISING: "Denoising",
    DegradationKind.DEHAZING_INDOOR: "DehazingIndoor",
    DegradationKind.DEHAZING_OUTDOOR: "DehazingOutdoor",
    DegradationKind.DEBLURRING: "Deblurring",
    DegradationKind.DERAINING: "Deraining",
    DegradationKind.ENHANCEMENT: "Enhancement",
    DegradationKind.SUPER_RESOLUTION: "SuperResolution",
}

KINDS = tuple(DegradationKind)
N_KINDS = len(KINDS)

NOISE_SIGMA_MAX = 0.12
INDOOR_AIRLIGHT = np.array([0.85, 0.85, 0.85])
INDOOR_HAZE_K = 0.7
OUTDOOR_AIRLIGHT = np.array([0.92, 0.95, 0.98])
OUTDOOR_HAZE_K = 0.9
MAX_BLUR_EXTRA = 14
RAIN_DENSITY_MAX = 0.02
RAIN_INTENSITY_MAX = 0.6


def _rng(seed: int, *extra: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *extra]))


def derive_seed(seed: int, *extra: int) -> int:
    """A 64-bit seed that depends only on ``(seed, *extra)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *extra])
    return int(ss.generate_state(1, np.uint64)[0])


# -- clean scene generator ---------------------------------------------------


def _scene_color(rng) -> np.ndarray:
    # saturated-ish HSV colours keep one channel low, as in natural photos
    return np.array(colorsys.hsv_to_rgb(rng.uniform(0, 1), rng.uniform(0.3, 1.0), rng.uniform(0.15, 0.95)))


def make_scene(width: int = 256, height: int = 256, seed: int = 0) -> np.ndarray:
    """Deterministic structured test scene: gradient backdrop, shapes, stripes, texture."""
    rng = _rng(seed, 0x5CE)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    u, v = xx / max(width - 1, 1), yy / max(height - 1, 1)

    angle = rng.uniform(0, 2 * np.pi)
    ramp = (np.cos(angle) * (u - 0.5) + np.sin(angle) * (v - 0.5)) / np.sqrt(2) + 0.5
    c0, c1 = _scene_color(rng), _scene_color(rng)
    img = c0 + ramp[..., None] * (c1 - c0)

    for _ in range(rng.integers(5, 11)):
        color = _scene_color(rng)
        cx, cy = rng.uniform(0, 1, 2)
        rx, ry = rng.uniform(0.05, 0.3, 2)
        shape = rng.integers(3)
        if shape == 0:
            mask = (np.abs(u - cx) < rx) & (np.abs(v - cy) < ry)
        elif shape == 1:
            mask = ((u - cx) / rx) ** 2 + ((v - cy) / ry) ** 2 < 1.0
        else:
            period = rng.uniform(0.04, 0.1)
            theta = rng.uniform(0, np.pi)
            phase = (np.cos(theta) * u + np.sin(theta) * v) / period
            mask = ((np.abs(u - cx) < rx) & (np.abs(v - cy) < ry)) & (np.floor(phase) % 2 == 0)
        shade = 1.0 + 0.25 * (u - cx)[..., None]
        img = np.where(mask[..., None], color * shade, img)

    grain = rng.normal(0.0, 1.0, (height, width, 1))
    grain = filter2d(grain[..., 0], np.full((3, 3), 1.0 / 9.0))[..., None]
    img = img + 0.02 * grain
    return np.clip(img, 0.0, 1.0)


def write_scenes(directory, count: int, size: int = 256, seed: int = 0) -> list[Path]:
    """Write ``count`` generated scenes as PPM files; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        p = directory / f"scene_{i:04d}.ppm"
        save_image(make_scene(size, size, derive_seed(seed, i)), p)
        paths.append(p)
    return paths


# -- degradation operators ---------------------------------------------------


def motion_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Normalized linear motion-blur stencil of the given length and angle."""
    if length <= 1:
        return np.ones((1, 1))
    size = length if length % 2 == 1 else length + 1
    c = size // 2
    k = np.zeros((size, size))
    theta = np.deg2rad(angle_deg)
    ts = np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, 8 * length)
    xs = c + ts * np.cos(theta)
    ys = c - ts * np.sin(theta)
    x0, y0 = np.floor(xs).astype(int), np.floor(ys).astype(int)
    fx, fy = xs - x0, ys - y0
    for dx, dy, w in ((0, 0, (1 - fx) * (1 - fy)), (1, 0, fx * (1 - fy)), (0, 1, (1 - fx) * fy), (1, 1, fx * fy)):
        xi, yi = np.clip(x0 + dx, 0, size - 1), np.clip(y0 + dy, 0, size - 1)
        np.add.at(k, (yi, xi), w)
    return k / k.sum()


def _add_noise(img, severity, rng):
    sigma = severity * NOISE_SIGMA_MAX
    return img + rng.normal(0.0, sigma, img.shape)


def _haze(img, severity, airlight, k, vertical):
    h = img.shape[0]
    if vertical:
        # denser at the top: full strength on row 0, half strength on the last row
        g = 1.0 - 0.5 * np.arange(h) / max(h - 1, 1)
        t = (1.0 - severity * k * g)[:, None, None]
    else:
        t = 1.0 - severity * k
    return img * t + airlight * (1.0 - t)


def _blur(img, severity, rng):
    length = 1 + int(round(severity * MAX_BLUR_EXTRA))
    angle = rng.uniform(0.0, 180.0)
    return filter2d(img, motion_kernel(length, angle))


def _rain(img, severity, rng):
    h, w = img.shape[:2]
    n = rng.poisson(severity * RAIN_DENSITY_MAX * w * h)
    if n == 0:
        return img
    x0 = rng.uniform(0, w, n)
    y0 = rng.uniform(0, h, n)
    length = rng.uniform(8, 24, n)
    theta = np.deg2rad(rng.uniform(70, 110, n))
    steps = np.arange(24)
    ts = steps[None, :] * np.ones((n, 1))
    valid = ts <= length[:, None]
    xs = np.rint(x0[:, None] + ts * np.cos(theta)[:, None]).astype(int)
    ys = np.rint(y0[:, None] + ts * np.sin(theta)[:, None]).astype(int)
    valid &= (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    layer = np.zeros((h, w))
    layer[ys[valid], xs[valid]] = severity * RAIN_INTENSITY_MAX
    return img + layer[..., None]


def _darken(img, severity):
    gamma = 1.0 + severity * 3.0
    out = img**gamma
    mean = out.mean(axis=(0, 1), keepdims=True)
    return mean + (out - mean) * (1.0 - severity * 0.5)


def apply_degradation(clean, kind, severity: float, seed: int, sr_upsample: bool = False) -> np.ndarray:
    """Synthesize one degradation; deterministic in all arguments.

    ``severity == 0`` returns an exact copy.  Only SUPER_RESOLUTION changes
    the dimensions (halved, floor) unless ``sr_upsample`` restores them.
    """
    kind = DegradationKind.parse(kind)
    if not 0.0 <= severity <= 1.0:
        raise ValueError(f"severity must lie in [0, 1], got {severity}")
    img = check_image(clean, copy=True)
    if severity == 0.0:
        return img
    rng = _rng(seed, int(kind))
    if kind is DegradationKind.DENOISING:
        out = _add_noise(img, severity, rng)
    elif kind is DegradationKind.DEHAZING_INDOOR:
        out = _haze(img, severity, INDOOR_AIRLIGHT, INDOOR_HAZE_K, vertical=False)
    elif kind is DegradationKind.DEHAZING_OUTDOOR:
        out = _haze(img, severity, OUTDOOR_AIRLIGHT, OUTDOOR_HAZE_K, vertical=True)
    elif kind is DegradationKind.DEBLURRING:
        out = _blur(img, severity, rng)
    elif kind is DegradationKind.DERAINING:
        out = _rain(img, severity, rng)
    elif kind is DegradationKind.ENHANCEMENT:
        out = _darken(img, severity)
    else:
        out = box_downsample(img, 2)
        if sr_upsample:
            out = resize(out, img.shape[1], img.shape[0], method="nearest")
    return np.clip(out, 0.0, 1.0)


# -- corpora -----------------------------------------------------------------


@dataclass
class LabeledSample:
    image: np.ndarray
    labels: frozenset
    severities: dict
    seed: int
    clean_ref: str | None = None
    path: str | None = None

    def __post_init__(self):
        self.labels = frozenset(DegradationKind.parse(k) for k in self.labels)
        self.severities = {DegradationKind.parse(k): float(v) for k, v in self.severities.items()}
        if set(self.severities) != set(self.labels):
            raise ValueError("severities must be keyed exactly by the labels")
        if any(not 0.0 <= s <= 1.0 for s in self.severities.values()):
            raise ValueError("severities must lie in [0, 1]")

    @property
    def stratum(self) -> tuple:
        return tuple(sorted(int(k) for k in self.labels))

    def label_vector(self) -> np.ndarray:
        y = np.zeros(N_KINDS)
        for k in self.labels:
            y[int(k)] = 1.0
        return y

    def manifest_entry(self, root=None) -> dict:
        path = self.path
        if path is not None and root is not None:
            try:
                path = str(Path(path).resolve().relative_to(Path(root).resolve()))
            except ValueError:
                pass
        return {
            "path": path,
            "labels": [k.label for k in sorted(self.labels)],
            "severities": {k.label: round(v, 12) for k, v in sorted(self.severities.items())},
            "seed": self.seed,
            "clean_ref": self.clean_ref,
        }


@dataclass
class Corpus:
    samples: list
    manifest_path: Path | None = None

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def label_matrix(self) -> np.ndarray:
        return np.array([s.label_vector() for s in self.samples]).reshape(-1, N_KINDS)

    def subset(self, indices) -> "Corpus":
        return Corpus([self.samples[i] for i in indices], self.manifest_path)

    def write_manifest(self, path) -> Path:
        path = Path(path)
        root = path.parent.resolve()
        lines = [json.dumps(s.manifest_entry(root), sort_keys=True) for s in self.samples]
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("".join(line + "\n" for line in lines))
        except OSError as exc:
            raise UnwritableManifest(f"{path}: {exc}") from exc
        return path


def read_manifest(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def load_corpus(manifest_path) -> Corpus:
    """Rebuild a corpus from a JSON-lines manifest, loading every image."""
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    samples = []
    for entry in read_manifest(manifest_path):
        img_path = Path(entry["path"])
        if not img_path.is_absolute():
            img_path = root / img_path
        img_path = img_path.resolve()
        samples.append(
            LabeledSample(
                image=load_image(img_path),
                labels=entry["labels"],
                severities=entry["severities"],
                seed=int(entry["seed"]),
                clean_ref=entry.get("clean_ref"),
                path=str(img_path),
            )
        )
    return Corpus(samples, manifest_path)


@dataclass
class Recipe:
    """What :func:`build_corpus` should generate.

    ``singles`` maps kind -> count of single-label samples, ``combos`` maps a
    tuple of kinds -> count of multi-label samples, ``clean`` counts
    undegraded samples (empty label set).
    """

    singles: dict = field(default_factory=dict)
    combos: dict = field(default_factory=dict)
    clean: int = 0
    severity_range: tuple = (0.5, 0.9)
    working_size: tuple = (256, 256)
    sr_upsample: bool = False

    @classmethod
    def uniform(cls, per_kind: int, **kwargs) -> "Recipe":
        return cls(singles={k: per_kind for k in KINDS}, **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "Recipe":
        d = dict(d)
        singles = {DegradationKind.parse(k): int(v) for k, v in d.pop("singles", {}).items()}
        combos = {}
        for key, v in d.pop("combos", {}).items():
            parts = key.split("+") if isinstance(key, str) else key
            combos[tuple(DegradationKind.parse(p) for p in parts)] = int(v)
        for key in ("severity_range", "working_size"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(singles=singles, combos=combos, **d)

    def label_sets(self) -> list[tuple]:
        out = []
        for kind in KINDS:
            out += [(kind,)] * int(self.singles.get(kind, 0))
        for combo, n in self.combos.items():
            out += [tuple(sorted(set(DegradationKind.parse(k) for k in combo)))] * int(n)
        out += [()] * int(self.clean)
        return out


def _clean_paths(clean_dir) -> list[Path]:
    clean_dir = Path(clean_dir)
    if not clean_dir.is_dir():
        raise EmptyCleanSet(f"{clean_dir} is not a directory")
    paths = sorted(p for p in clean_dir.iterdir() if p.suffix.lower() in (".ppm", ".png"))
    if not paths:
        raise EmptyCleanSet(f"no .ppm/.png images in {clean_dir}")
    return paths


def degrade_sample(clean, labels, seed: int, severity_range=(0.5, 0.9), sr_upsample=False):
    """Draw severities and apply every label's degradation in kind order."""
    rng = _rng(seed, 0xDE6)
    lo, hi = severity_range
    severities = {k: float(rng.uniform(lo, hi)) for k in sorted(labels)}
    img = clean
    for k in sorted(labels):
        img = apply_degradation(img, k, severities[k], seed, sr_upsample=sr_upsample)
    return img, severities


def build_corpus(clean_dir, recipe: Recipe, seed: int, out_dir=None, jobs: int = 1) -> Corpus:
    """Generate a labeled corpus from the images in ``clean_dir``.

    Sample ``i`` depends only on ``(seed, i)``, so the result is independent
    of ``jobs``.  When ``out_dir`` is given, degraded images are written as
    PPM under ``out_dir/images`` together with ``out_dir/manifest.jsonl``.
    """
    paths = _clean_paths(clean_dir)
    width, height = recipe.working_size
    cache = {}

    def clean_image(j):
        if j not in cache:
            cache[j] = resize(load_image(paths[j]), width, height, "bicubic")
        return cache[j]

    # load serially so worker threads only read the cache
    for j in range(len(paths)):
        clean_image(j)

    label_sets = recipe.label_sets()
    if not label_sets:
        raise ValueError("recipe requests no samples")
    if out_dir is not None:
        out_dir = Path(out_dir)
        try:
            (out_dir / "images").mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise UnwritableManifest(f"{out_dir}: {exc}") from exc

    def make(i):
        sample_seed = derive_seed(seed, i)
        j = int(_rng(sample_seed, 0xC1EA).integers(len(paths)))
        img, sev = degrade_sample(clean_image(j), label_sets[i], sample_seed, recipe.severity_range, recipe.sr_upsample)
        sample = LabeledSample(img, frozenset(label_sets[i]), sev, sample_seed, str(paths[j].resolve()))
        if out_dir is not None:
            p = out_dir / "images" / f"{i:05d}.ppm"
            save_image(img, p)
            sample.path = str(p.resolve())
        return sample

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            samples = list(pool.map(make, range(len(label_sets))))
    else:
        samples = [make(i) for i in range(len(label_sets))]

    corpus = Corpus(samples)
    if out_dir is not None:
        corpus.manifest_path = corpus.write_manifest(out_dir / "manifest.jsonl")
    return corpus


# -- stratified split ----------------------------------------------------------


def allocate_test_counts(sizes, test_fraction: float) -> list[int]:
    """Per-stratum test counts.

    Each count is ``floor`` or ``ceil`` of ``size * test_fraction``; the
    leftover units go to the largest fractional parts so the total equals
    ``round(N * test_fraction)``.  Every stratum keeps at least one sample on
    each side.
    """
    sizes = [int(s) for s in sizes]
    ideal = [s * test_fraction for s in sizes]
    counts = [math.floor(q) for q in ideal]
    target = math.floor(sum(sizes) * test_fraction + 0.5)
    order = sorted(range(len(sizes)), key=lambda i: (-(ideal[i] - counts[i]), i))
    for i in order[: max(0, target - sum(counts))]:
        counts[i] += 1
    return [min(max(c, 1), s - 1) for c, s in zip(counts, sizes)]


def stratified_indices(strata, test_fraction: float, seed: int):
    """Split positions ``0..len(strata)-1`` by stratum key, without replacement.

    Returns sorted ``(train_idx, test_idx)`` integer arrays.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    groups = {}
    for i, key in enumerate(strata):
        groups.setdefault(key, []).append(i)
    keys = sorted(groups, key=lambda k: (len(k), k) if isinstance(k, tuple) else (0, k))
    for key in keys:
        if len(groups[key]) < 2:
            raise StratumTooSmall(f"stratum {key!r} has {len(groups[key])} sample(s); need >= 2")
    counts = allocate_test_counts([len(groups[k]) for k in keys], test_fraction)
    train, test = [], []
    for s, (key, n_test) in enumerate(zip(keys, counts)):
        members = np.array(groups[key])
        perm = _rng(seed, 0x5B17, s).permutation(len(members))
        test.extend(members[perm[:n_test]])
        train.extend(members[perm[n_test:]])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(test, dtype=int))


def stratified_split(corpus: Corpus, test_fraction: float, seed: int):
    """Split a corpus into (train, test) preserving each label-set stratum's share."""
    train_idx, test_idx = stratified_indices([s.stratum for s in corpus.samples], test_fraction, seed)
    return corpus.subset(train_idx), corpus.subset(test_idx)
