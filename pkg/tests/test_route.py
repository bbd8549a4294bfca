import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptrestore.classify import ProbabilityVector
from adaptrestore.exceptions import OutOfRange, WrongMode
from adaptrestore.route import (
    Multiple,
    RouterConfig,
    SeverityBand,
    Single,
    Undamaged,
    band,
    decide,
    verdict_from_dict,
    verdict_to_dict,
)
from adaptrestore.synth import KINDS, DegradationKind

probs7 = st.lists(st.floats(0, 1), min_size=7, max_size=7)


def oracle(p, theta):
    n = sum(1 for v in p if v >= theta)
    return "Undamaged" if n == 0 else "Single" if n == 1 else "Multiple"


def test_single_denoising():
    v = decide([0.9, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1], RouterConfig(0.85))
    assert v == Single(DegradationKind.DENOISING, 0.9)


def test_all_zero_undamaged():
    assert decide(np.zeros(7)) == Undamaged()


def test_all_active():
    v = decide(np.full(7, 0.86))
    assert isinstance(v, Multiple)
    assert [k for k, _ in v.active] == list(KINDS)


def test_boundary_counts_as_degraded():
    assert isinstance(decide([0.85, 0, 0, 0, 0, 0, 0]), Single)
    below = np.nextafter(0.85, 0)
    assert isinstance(decide([below, 0, 0, 0, 0, 0, 0]), Undamaged)


def test_active_ordering():
    v = decide([0.9, 0.95, 0.0, 0.9, 0.0, 0.99, 0.0])
    assert [int(k) for k, _ in v.active] == [5, 1, 0, 3]


def test_softmax_rejected():
    with pytest.raises(WrongMode):
        decide(ProbabilityVector(np.full(7, 1 / 7), "softmax"))


def test_accepts_probability_vector():
    v = decide(ProbabilityVector(np.array([0.1, 0.1, 0.1, 0.1, 0.9, 0.1, 0.1])))
    assert v.kind is DegradationKind.DERAINING


@pytest.mark.parametrize("p,expected", [(0.3, "NONE"), (0.6, "TOLERABLE"), (0.85, "SIGNIFICANT")])
def test_bands(p, expected):
    assert band(p) is SeverityBand[expected]


def test_band_edges():
    assert band(0.5) is SeverityBand.TOLERABLE
    assert band(np.nextafter(0.5, 0)) is SeverityBand.NONE
    assert band(0.0) is SeverityBand.NONE and band(1.0) is SeverityBand.SIGNIFICANT
    for bad in (-0.01, 1.01):
        with pytest.raises(OutOfRange):
            band(bad)


def test_config_invariants():
    for lo, th in ((0.5, 0.5), (0.9, 0.85), (0.0, 0.5), (0.5, 1.0)):
        with pytest.raises(ValueError):
            RouterConfig(th, lo)


def test_trichotomy_grid():
    grid = np.round(np.arange(0, 1.0001, 0.05), 10)
    theta = 0.85
    for a, b, c in itertools.product(grid, repeat=3):
        p = [a, b, c, 0, 0, 0, 0]
        v = decide(p, RouterConfig(theta))
        assert v.name == oracle(p, theta)


@settings(max_examples=300)
@given(probs7, st.sampled_from([0.5, 0.85, 0.99]))
def test_matches_oracle(p, theta):
    assert decide(p, RouterConfig(theta, 0.4)).name == oracle(p, theta)


RANK = {"Undamaged": 0, "Single": 1, "Multiple": 2}


@settings(max_examples=300)
@given(probs7, st.integers(0, 6), st.floats(0, 1))
def test_monotonicity(p, i, new):
    raised = list(p)
    raised[i] = max(p[i], new)
    assert RANK[decide(raised).name] >= RANK[decide(p).name]


@settings(max_examples=100)
@given(probs7)
def test_json_round_trip(p):
    v = decide(p)
    d = json.loads(json.dumps(verdict_to_dict(v, p)))
    assert verdict_from_dict(d) == v
    assert len(d["bands"]) == 7
    assert all(e["p"] >= 0.85 for e in d["active"])


def test_serialized_shape():
    d = verdict_to_dict(decide([0.9, 0.6, 0, 0, 0, 0, 0.86]), [0.9, 0.6, 0, 0, 0, 0, 0.86])
    assert d == {
        "verdict": "Multiple",
        "active": [{"kind": "Denoising", "p": 0.9}, {"kind": "SuperResolution", "p": 0.86}],
        "bands": ["Significant", "Tolerable", "None", "None", "None", "None", "Significant"],
    }
