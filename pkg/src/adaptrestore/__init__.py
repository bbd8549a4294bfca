"""Degradation-aware image restoration.

Classify which degradations a frame suffers from, then route it to the
matching restorer, or blend several restorers weighted by probability.
"""

from .blend import ActiveSet, aggregate, weights
from .classify import Hyperparams, ProbabilityVector, ResidualHead, ResidualHeadClassifier, load_model, save_model, train
from .exceptions import AdaptRestoreError
from .features import FEATURE_NAMES, DegradationFeatures, extract_features
from .imaging import load_image, save_image
from .pipeline import AdaptiveRestorer, PipelineConfig, bench, frames, load_config, run_pipeline
from .restore import RestorerRegistry, restore, set_external
from .route import RouterConfig, SeverityBand, band, decide
from .synth import DegradationKind, Recipe, apply_degradation, build_corpus, make_scene, stratified_split

__version__ = "0.1.0"

__all__ = [
    "ActiveSet",
    "AdaptRestoreError",
    "AdaptiveRestorer",
    "DegradationFeatures",
    "DegradationKind",
    "FEATURE_NAMES",
    "Hyperparams",
    "PipelineConfig",
    "ProbabilityVector",
    "Recipe",
    "ResidualHead",
    "ResidualHeadClassifier",
    "RestorerRegistry",
    "RouterConfig",
    "SeverityBand",
    "aggregate",
    "apply_degradation",
    "band",
    "bench",
    "build_corpus",
    "decide",
    "extract_features",
    "frames",
    "load_config",
    "load_image",
    "load_model",
    "make_scene",
    "restore",
    "run_pipeline",
    "save_image",
    "save_model",
    "set_external",
    "stratified_split",
    "train",
    "weights",
]
