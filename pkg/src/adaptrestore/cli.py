"""``adaptrestore`` command line.

Exit codes: 0 success, 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .classify import Hyperparams, lr_sweep, momentum_sweep, save_model, train
from .exceptions import AdaptRestoreError, ConfigError
from .features import FEATURE_NAMES, extract_features, working_copy
from .imaging import load_image, resize, save_image
from .metrics import (
    accuracy,
    confusion,
    conventional_specificity,
    psnr,
    sensitivity,
    specificity,
)
from .pipeline import AdaptiveRestorer, bench, frames, load_config, run_pipeline
from .restore import restore
from .route import verdict_to_dict
from .synth import KINDS, N_KINDS, DegradationKind, Recipe, build_corpus, load_corpus, stratified_split, write_scenes

USAGE, RUNTIME = 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p, *names):
    opts = {
        "config": dict(metavar="PATH", help="TOML configuration file"),
        "model": dict(metavar="PATH", help="trained model file"),
        "theta": dict(type=float, metavar="FLOAT", help="activation threshold"),
        "source": dict(metavar="SPEC", help="directory, glob, comma list, or synth:<recipe>"),
        "out": dict(metavar="DIR", help="output directory"),
        "log": dict(metavar="PATH", help="JSON-lines frame log"),
        "jobs": dict(type=int, metavar="N", help="worker threads"),
        "seed": dict(type=int, metavar="N", help="random seed"),
    }
    for n in names:
        p.add_argument(f"--{n}", **opts[n])


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="adaptrestore", description="Degradation-aware image restoration.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("degrade", help="generate a labeled synthetic corpus")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--clean-dir", metavar="DIR", help="clean images (default: generate scenes)")
    p.add_argument("--scenes", type=int, default=64, help="scenes to generate when --clean-dir is absent")
    p.add_argument("--per-kind", type=int, default=100)
    p.add_argument("--clean", type=int, default=0, help="undegraded samples")
    p.add_argument("--recipe", metavar="JSON", help="recipe file or inline JSON (overrides --per-kind/--clean)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("split", help="stratified train/test split of a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="DIR", help="where train/test manifests go (default: beside input)")

    for name, helptext in (("train", "train the classification head"), ("sweep", "learning-rate or momentum sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--manifest", required=True)
        p.add_argument("--epochs", type=int, default=35)
        p.add_argument("--batch-size", type=int, default=64)
        p.add_argument("--hidden", type=int, default=64)
        p.add_argument("--mode", choices=("sigmoid", "softmax"), default="sigmoid")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--validation-fraction", type=float, default=0.2)
        if name == "train":
            p.add_argument("--model", required=True, metavar="PATH")
            p.add_argument("--optimizer", choices=("adam", "sgd_momentum"), default="adam")
            p.add_argument("--lr", type=float, default=0.001)
            p.add_argument("--momentum", type=float, default=0.9)
            p.add_argument("--history", metavar="CSV")
        else:
            p.add_argument("--rates", type=float, nargs="*", help="Adam learning rates")
            p.add_argument("--momenta", type=float, nargs="*", help="SGD momentum values")
            p.add_argument("--out", metavar="CSV")

    p = sub.add_parser("classify", help="print per-frame probabilities and verdicts")
    _common(p, "config", "model", "theta", "source", "seed")
    p.add_argument("--dump-features", metavar="CSV")

    p = sub.add_parser("restore", help="apply one restorer to one image")
    _common(p, "config")
    p.add_argument("--kind", required=True)
    p.add_argument("--in", dest="input", required=True, metavar="PATH")
    p.add_argument("--out", required=True, metavar="PATH")

    p = sub.add_parser("run", help="run the full pipeline")
    _common(p, "config", "model", "theta", "source", "out", "log", "jobs", "seed")

    p = sub.add_parser("eval", help="classification and restoration metrics on a manifest")
    _common(p, "config", "model", "theta")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", metavar="CSV")

    p = sub.add_parser("bench", help="per-stage latency report")
    _common(p, "config", "model", "theta", "source", "seed")
    p.add_argument("--repetitions", type=int, default=1)
    return ap


def _overrides(args, extra) -> dict:
    """Named flags plus any ``--dotted.key value`` leftovers."""
    out = {}
    for flag, key in (("model", "model"), ("theta", "theta"), ("source", "source"), ("log", "log"), ("jobs", "jobs"), ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            out[key] = v
    if args.command == "run" and args.out is not None:
        out["out"] = args.out
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"{tok} needs a value")
            value = extra[i + 1]
            i += 2
        out[key] = value
    return out


def _config(args, extra):
    try:
        return load_config(getattr(args, "config", None), _overrides(args, extra))
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


# -- subcommands ---------------------------------------------------------------


def cmd_degrade(args, extra):
    out = Path(args.out)
    if args.recipe:
        text = Path(args.recipe).read_text() if Path(args.recipe).is_file() else args.recipe
        try:
            recipe = Recipe.from_dict(json.loads(text))
        except (json.JSONDecodeError, ValueError, TypeError) as exc:
            raise UsageError(f"bad recipe: {exc}") from exc
    else:
        recipe = Recipe.uniform(args.per_kind, clean=args.clean)
    clean_dir = args.clean_dir
    if clean_dir is None:
        clean_dir = out / "clean"
        write_scenes(clean_dir, args.scenes, recipe.working_size[0], args.seed)
    corpus = build_corpus(clean_dir, recipe, args.seed, out, args.jobs)
    print(json.dumps({"samples": len(corpus), "manifest": str(corpus.manifest_path)}))


def cmd_split(args, extra):
    corpus = load_corpus(args.manifest)
    tr, te = stratified_split(corpus, args.test_fraction, args.seed)
    out = Path(args.out) if args.out else Path(args.manifest).parent
    ptr = tr.write_manifest(out / "train.jsonl")
    pte = te.write_manifest(out / "test.jsonl")
    print(json.dumps({"train": len(tr), "test": len(te), "train_manifest": str(ptr), "test_manifest": str(pte)}))


def _hyper(args, **kw) -> Hyperparams:
    return Hyperparams(
        epochs=args.epochs,
        batch_size=args.batch_size,
        hidden=args.hidden,
        validation_fraction=args.validation_fraction,
        seed=args.seed,
        **kw,
    )


def cmd_train(args, extra):
    corpus = load_corpus(args.manifest)
    hyper = _hyper(args, optimizer=args.optimizer, learning_rate=args.lr, momentum=args.momentum)
    head, history = train(corpus, hyper, args.mode)
    save_model(head, args.model)
    if args.history:
        history.to_csv(args.history)
    print(
        json.dumps(
            {
                "model": args.model,
                "epochs": len(history.epoch),
                "train_loss": history.train_loss[-1],
                "val_loss": history.val_loss[-1],
                "val_accuracy": history.val_accuracy[-1],
            }
        )
    )


def cmd_sweep(args, extra):
    if args.rates is not None and args.momenta is not None:
        raise UsageError("give --rates or --momenta, not both")
    corpus = load_corpus(args.manifest)
    hyper = _hyper(args)
    if args.momenta is not None:
        best, rows = momentum_sweep(corpus, args.momenta, hyper, args.mode)
        name = "momentum"
    else:
        best, rows = lr_sweep(corpus, args.rates if args.rates is not None else (0.001, 0.003, 0.01), hyper, args.mode)
        name = "learning_rate"
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name, "val_accuracy", "val_loss", "selected"])
        for r in rows:
            w.writerow([r.value, r.val_accuracy, r.val_loss, int(r.value == best)])
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_classify(args, extra):
    cfg = _config(args, extra)
    restorer = AdaptiveRestorer(cfg.model_path, cfg.theta, cfg.band_low, working_size=cfg.working_size)
    dump = None
    if args.dump_features:
        dump = csv.writer(open(args.dump_features, "w", newline=""), lineterminator="\n")
        dump.writerow(["frame_id", "source", *FEATURE_NAMES])
    for frame in frames(cfg.source, cfg.seed):
        image = frame.load()
        probs = restorer.probabilities(image)
        verdict = restorer.predict([image])[0]
        rec = {"frame_id": frame.index, "source": frame.source, "probs": [float(v) for v in probs.p]}
        rec.update(verdict_to_dict(verdict, probs, cfg.router()))
        print(json.dumps(rec, sort_keys=True))
        if dump is not None:
            f = extract_features(working_copy(image, cfg.working_size))
            dump.writerow([frame.index, frame.source, *[repr(float(v)) for v in f]])


def cmd_restore(args, extra):
    cfg = _config(args, extra)
    try:
        kind = DegradationKind.parse(args.kind)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    registry = cfg.registry()
    save_image(restore(kind, load_image(args.input), registry), args.out)
    for w in registry.warnings:
        print(w, file=sys.stderr)


def cmd_run(args, extra):
    cfg = _config(args, extra)
    summary = run_pipeline(cfg)
    print(json.dumps(summary.to_dict(), sort_keys=True))
    return RUNTIME if summary.n_errors and summary.n_errors == summary.n_frames else 0


def evaluate(model, manifest, cfg) -> list[dict]:
    """Rows of per-kind classification and restoration metrics plus an overall row."""
    corpus = load_corpus(manifest)
    restorer = AdaptiveRestorer(model, cfg.theta, cfg.band_low, cfg.blend_mode, cfg.registry(), cfg.working_size)
    truth, pred = [], []
    quality = {k: {"psnr_in": [], "psnr_out": []} for k in KINDS}
    for s in corpus:
        probs = restorer.probabilities(s.image)
        if len(s.labels) != 1:
            continue
        (kind,) = s.labels
        truth.append(int(kind))
        pred.append(int(np.argmax(probs.p)))
        if s.clean_ref is None or not Path(s.clean_ref).is_file():
            continue
        out, _ = restorer.restore_one(s.image, probs)
        h, w = out.shape[:2]
        clean = resize(load_image(s.clean_ref), w, h, "bicubic")
        quality[kind]["psnr_out"].append(psnr(out, clean))
        if s.image.shape == clean.shape:
            quality[kind]["psnr_in"].append(psnr(s.image, clean))
    if not truth:
        raise AdaptRestoreError("manifest has no single-label samples")
    C = confusion(truth, pred, N_KINDS)

    def safe(fn, *a):
        try:
            return fn(*a)
        except AdaptRestoreError:
            return float("nan")

    def mean(v):
        v = [x for x in v if np.isfinite(x)]
        return float(np.mean(v)) if v else float("nan")

    rows = []
    for k in KINDS:
        i = int(k)
        rows.append(
            {
                "kind": k.label,
                "support": int(C[i].sum()),
                "sensitivity": safe(sensitivity, C, i),
                "specificity": safe(specificity, C, i),
                "conventional_specificity": safe(conventional_specificity, C, i),
                "psnr_in": mean(quality[k]["psnr_in"]),
                "psnr_out": mean(quality[k]["psnr_out"]),
            }
        )
    rows.append({"kind": "overall", "support": int(C.sum()), "accuracy": accuracy(C)})
    return rows


def cmd_eval(args, extra):
    cfg = _config(args, extra)
    rows = evaluate(cfg.model_path, args.manifest, cfg)
    cols = ["kind", "support", "sensitivity", "specificity", "conventional_specificity", "psnr_in", "psnr_out", "accuracy"]
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.DictWriter(fh, cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_bench(args, extra):
    cfg = _config(args, extra)
    report = bench(cfg, args.repetitions)
    print(json.dumps(report.to_dict(), sort_keys=True))


COMMANDS = {
    "degrade": cmd_degrade,
    "split": cmd_split,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "classify": cmd_classify,
    "restore": cmd_restore,
    "run": cmd_run,
    "eval": cmd_eval,
    "bench": cmd_bench,
}
# dotted overrides only make sense where a pipeline config is built
_TAKES_OVERRIDES = {"classify", "restore", "run", "eval", "bench"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if extra and args.command not in _TAKES_OVERRIDES:
            raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        rc = COMMANDS[args.command](args, extra)
        return int(rc or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE
    except (AdaptRestoreError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return RUNTIME


if __name__ == "__main__":
    sys.exit(main())
