import numpy as np
import pytest

from adaptrestore.classify import Hyperparams, train
from adaptrestore.synth import Recipe, build_corpus, make_scene, write_scenes


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def scene():
    return make_scene(64, 64, seed=7)


@pytest.fixture(scope="session")
def clean_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("clean")
    write_scenes(d, 24, size=256, seed=11)
    return d


@pytest.fixture(scope="session")
def trained(clean_dir, tmp_path_factory):
    """Head trained on every single kind plus undegraded scenes, and its corpus."""
    out = tmp_path_factory.mktemp("corpus")
    corpus = build_corpus(clean_dir, Recipe.uniform(60, clean=60), seed=3, out_dir=out)
    head, history = train(corpus, Hyperparams(seed=0))
    return head, history, corpus
