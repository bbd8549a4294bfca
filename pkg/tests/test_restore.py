import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptrestore.exceptions import OversizeForUpscale, TemplateInvalid
from adaptrestore.features import raw_features
from adaptrestore.imaging import resize, to_uint8
from adaptrestore.metrics import psnr
from adaptrestore.restore import DEFAULT_PARAMS, RestorerRegistry, restore, set_external
from adaptrestore.synth import KINDS, DegradationKind, apply_degradation, make_scene

D = DegradationKind


def test_all_kinds_registered():
    reg = RestorerRegistry()
    assert set(reg.params) == set(KINDS) == set(DEFAULT_PARAMS)


def test_denoise_constant():
    img = np.full((20, 20, 3), 0.3)
    assert np.max(np.abs(restore(D.DENOISING, img) - img)) < 1e-6


def test_sr_doubles():
    assert restore(D.SUPER_RESOLUTION, make_scene(64, 64, 0)).shape == (128, 128, 3)


def test_sr_oversize():
    with pytest.raises(OversizeForUpscale):
        restore(D.SUPER_RESOLUTION, np.zeros((10, 2049, 3)))


def test_outdoor_dehaze_raises_contrast():
    clean = make_scene(128, 128, seed=4)
    foggy = apply_degradation(clean, D.DEHAZING_OUTDOOR, 0.7, seed=1)
    assert raw_features(restore(D.DEHAZING_OUTDOOR, foggy))[5] > raw_features(foggy)[5]


@pytest.mark.parametrize("kind", KINDS)
def test_deterministic_and_in_range_twice(kind):
    img = apply_degradation(make_scene(48, 48, 2), kind, 0.6, seed=3)
    a = restore(kind, img)
    b = restore(kind, img)
    assert a.tobytes() == b.tobytes()
    twice = restore(kind, a)
    assert np.all((twice >= 0) & (twice <= 1)) and np.all(np.isfinite(twice))


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(KINDS), st.integers(0, 1000))
def test_output_range_property(kind, seed):
    img = np.random.default_rng(seed).random((20, 24, 3))
    out = restore(kind, img)
    assert np.all((out >= 0) & (out <= 1))
    expected = (40, 48, 3) if kind is D.SUPER_RESOLUTION else img.shape
    assert out.shape == expected


@pytest.mark.parametrize("kind", [k for k in KINDS if k is not D.SUPER_RESOLUTION])
def test_quality_small_sample(kind):
    wins = 0
    for i in range(10):
        clean = make_scene(128, 128, seed=500 + i)
        deg = apply_degradation(clean, kind, 0.6, seed=i)
        wins += psnr(restore(kind, deg), clean) > psnr(deg, clean)
    assert wins >= 7


def test_sr_beats_bicubic_small_sample():
    wins = 0
    for i in range(10):
        clean = make_scene(128, 128, seed=700 + i)
        low = apply_degradation(clean, D.SUPER_RESOLUTION, 0.6, seed=i)
        wins += psnr(restore(D.SUPER_RESOLUTION, low), clean) >= psnr(resize(low, 128, 128, "bicubic"), clean)
    assert wins >= 6


def test_param_override():
    reg = RestorerRegistry(params={"Deblurring": {"amount": 0.0}})
    img = make_scene(32, 32, 1)
    np.testing.assert_allclose(reg(D.DEBLURRING, img), img, atol=1e-12)
    assert reg.params[D.DEBLURRING]["sigma"] == DEFAULT_PARAMS[D.DEBLURRING]["sigma"]


def test_function_stub_takes_priority():
    reg = RestorerRegistry(functions={D.ENHANCEMENT: lambda x: x * 0})
    assert not reg(D.ENHANCEMENT, np.ones((4, 4, 3))).any()


def test_template_validation():
    for bad in ("cp {in} out.ppm", "cp in {out}", "cp '{in} {out}"):
        with pytest.raises(TemplateInvalid):
            set_external(D.DENOISING, bad)


def test_external_identity_command():
    img = make_scene(32, 32, 5)
    reg = set_external(D.DENOISING, "cp {in} {out}")
    out = reg(D.DENOISING, img)
    np.testing.assert_array_equal(out, to_uint8(img) / 255.0)
    assert reg.warnings == []


def test_set_external_does_not_mutate_original():
    base = RestorerRegistry()
    set_external(D.DENOISING, "cp {in} {out}", base)
    assert base.external == {}


def test_external_failure_falls_back():
    img = make_scene(32, 32, 5)
    reg = set_external(D.DENOISING, f"{sys.executable} -c 'import sys; sys.exit(3)' {{in}} {{out}}")
    out = reg(D.DENOISING, img)
    np.testing.assert_array_equal(out, RestorerRegistry().builtin(D.DENOISING, img))
    assert len(reg.warnings) == 1 and "exited with 3" in reg.warnings[0]


def test_external_timeout_falls_back():
    img = make_scene(32, 32, 5)
    cmd = f"{sys.executable} -c 'import time; time.sleep(5)' {{in}} {{out}}"
    reg = set_external(D.DEBLURRING, cmd, timeout=0.3)
    out = reg(D.DEBLURRING, img)
    np.testing.assert_array_equal(out, RestorerRegistry().builtin(D.DEBLURRING, img))
    assert "timed out" in reg.warnings[0]


def test_external_missing_program_falls_back():
    reg = set_external(D.DENOISING, "/nonexistent/tool {in} {out}")
    reg(D.DENOISING, np.full((8, 8, 3), 0.5))
    assert "failed to start" in reg.warnings[0]


def test_external_unreadable_output_falls_back():
    reg = set_external(D.DENOISING, f"{sys.executable} -c 'open(\"{{out}}\", \"w\").write(\"junk\")' {{in}}")
    reg(D.DENOISING, np.full((8, 8, 3), 0.5))
    assert "unreadable" in reg.warnings[0]
