import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from renderwait.augment import (
    AugmentKind,
    AugmentSpec,
    apply,
    blend,
    draw_spec,
    inject_loading,
    shade,
    spinner_mask,
    stitch,
    synthesize,
)
from renderwait.errors import InvalidArgument
from renderwait.imaging import Frame
from renderwait.states import LOADING, TRANSITING, Label


def rand(rng, h=40, w=30, color=False):
    shape = (h, w, 3) if color else (h, w)
    return Frame(rng.integers(0, 256, shape, dtype=np.uint8))


def const(v, h=40, w=30):
    return Frame(np.full((h, w), v, dtype=np.uint8))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 1.0))
def test_stitch_seam_columns(seed, frac):
    rng = np.random.default_rng(seed)
    a, b = rand(rng), rand(rng)
    out, state = stitch(a, b, frac)
    k = int(np.floor(frac * a.width + 0.5))
    assert state == TRANSITING
    assert np.array_equal(out.pixels[:, :k], a.pixels[:, :k])
    assert np.array_equal(out.pixels[:, k:], b.pixels[:, k:])


def test_stitch_identities():
    rng = np.random.default_rng(0)
    a, b = rand(rng), rand(rng)
    assert stitch(a, a, 0.37)[0].pixels.tobytes() == a.pixels.tobytes()
    assert np.array_equal(stitch(a, b, 1.0)[0].pixels, a.pixels)


def test_blend_endpoints_and_midpoint():
    rng = np.random.default_rng(1)
    a, b = rand(rng, color=True), rand(rng, color=True)
    assert np.array_equal(blend(a, b, 1.0)[0].pixels, a.pixels)
    assert np.array_equal(blend(a, b, 0.0)[0].pixels, b.pixels)
    out, state = blend(const(100), const(200), 0.5)
    assert state == TRANSITING
    assert np.all(out.pixels == 150)


def test_blend_rounds_half_up():
    out, _ = blend(const(0), const(1), 0.5)
    assert np.all(out.pixels == 1)


def test_shade_factor():
    px = np.arange(256, dtype=np.uint8).reshape(16, 16)
    full = shade(px, 1.0)
    assert np.array_equal(full, np.floor(px * 0.4 + 0.5).astype(np.uint8))
    assert np.array_equal(shade(px, 0.0), px)


def test_loading_without_shadow_only_touches_ticks():
    f = const(200, 60, 60)
    spec = AugmentSpec(AugmentKind.LOADING_INJECT, 0,
                       {"cx": 30.0, "cy": 30.0, "radius": 10.0, "phase": 3, "shadow_intensity": 0.0})
    out, state = inject_loading(f, spec)
    mask, _ = spinner_mask(60, 60, 30.0, 30.0, 10.0, 3)
    assert state == LOADING
    changed = out.pixels != f.pixels
    assert changed.any() and not (changed & ~mask).any()


def test_loading_with_full_shadow_scales_background():
    f = const(201, 60, 60)
    spec = AugmentSpec(AugmentKind.LOADING_INJECT, 0,
                       {"cx": 30.0, "cy": 30.0, "radius": 10.0, "phase": 0, "shadow_intensity": 1.0})
    out, _ = inject_loading(f, spec)
    mask, _ = spinner_mask(60, 60, 30.0, 30.0, 10.0, 0)
    assert np.all(out.pixels[~mask] == 80)  # 201 * 0.4 = 80.4


def test_spinner_phase_rotates_darkest_tick():
    m0, l0 = spinner_mask(80, 80, 40.0, 40.0, 20.0, 0)
    m3, l3 = spinner_mask(80, 80, 40.0, 40.0, 20.0, 3)
    assert np.array_equal(m0, m3)
    assert not np.array_equal(l0[m0], l3[m3])
    assert l0[m0].min() == 40.0 and l0[m0].max() == 210.0


def test_spinner_bounds_checked():
    with pytest.raises(InvalidArgument):
        spinner_mask(40, 40, 5.0, 20.0, 10.0, 0)
    with pytest.raises(InvalidArgument):
        spinner_mask(40, 40, 20.0, 20.0, 1.0, 0)


def test_geometry_and_range_errors():
    rng = np.random.default_rng(2)
    a = rand(rng)
    with pytest.raises(InvalidArgument):
        stitch(a, rand(rng, 40, 31), 0.5)
    with pytest.raises(InvalidArgument):
        blend(a, rand(rng, 41, 30), 0.5)
    with pytest.raises(InvalidArgument):
        blend(a, a, 1.2)
    with pytest.raises(InvalidArgument):
        stitch(a, a, 0.0)
    with pytest.raises(InvalidArgument):
        apply(draw_spec(AugmentKind.BLEND, 1, 30, 40), a)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63 - 1), st.sampled_from(list(AugmentKind)))
def test_specs_are_deterministic_and_in_range(seed, kind):
    rng = np.random.default_rng(seed % 2**32)
    a, b = rand(rng, 64, 36), rand(rng, 64, 36)
    s1, s2 = draw_spec(kind, seed, 36, 64), draw_spec(kind, seed, 36, 64)
    assert s1 == s2
    o1, st1 = apply(s1, a, b)
    o2, _ = apply(s2, a, b)
    assert o1.pixels.tobytes() == o2.pixels.tobytes()
    assert o1.pixels.shape == a.pixels.shape
    assert st1.label is Label.PARTIAL
    if kind is AugmentKind.BLEND:
        assert 0.2 <= s1.params["alpha"] <= 0.8
    if kind is AugmentKind.LOADING_INJECT:
        assert 0.2 <= s1.params["shadow_intensity"] <= 1.0


def test_synthesize_pairs_same_geometry_only():
    rng = np.random.default_rng(3)
    full = [rand(rng, 64, 36), rand(rng, 64, 36), rand(rng, 50, 30)]
    out = synthesize(full, 40, seed=5)
    assert len(out) == 40
    for s in out:
        assert s.state.label is Label.PARTIAL
        if len(s.sources) == 2:
            assert full[s.sources[0]].pixels.shape == full[s.sources[1]].pixels.shape
        if 2 in s.sources:
            assert s.spec.kind is AugmentKind.LOADING_INJECT
    again = synthesize(full, 40, seed=5)
    assert [s.frame.digest() for s in out] == [s.frame.digest() for s in again]
    with pytest.raises(InvalidArgument):
        synthesize([], 3, 0)
