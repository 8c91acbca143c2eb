from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from mssgn.errors import ConfigurationError
from mssgn.preprocess import (
    DETERMINISTIC_FIRST,
    RANDOM,
    AugmentConfig,
    SamplerConfig,
    apply_rotation,
    clip_indices,
    group_by_source,
    make_views,
    rotate_augment,
    rotation_matrix,
    sample_clips,
    sample_rng,
    split_multi_person,
    translate_to_first_frame,
)
from mssgn.skeleton_io import SkeletonSequence, is_ghost

coords_strategy = hnp.arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 6), st.just(3)),
                             elements=st.floats(-10, 10))


def brute_force_clips(T, n):
    """Clip i covers the real interval [i*T/n, (i+1)*T/n); its first frame is the integer frame
    whose unit interval contains the clip start."""
    starts = []
    for i in range(n):
        t = Fraction(i * T, n)
        starts.append(next(f for f in range(T) if f <= t < f + 1))
    return starts


# ---- translation ------------------------------------------------------------------------------

def test_translation_zeroes_reference_joint():
    c = np.random.default_rng(0).normal(size=(4, 25, 3))
    c[0, 1] = (1, 2, 3)
    out = translate_to_first_frame(c)
    assert np.array_equal(out[0, 1], [0, 0, 0])
    assert np.allclose(out[2] - out[1], c[2] - c[1])


def test_translation_of_centered_sequence_is_identity():
    c = np.random.default_rng(1).normal(size=(3, 5, 3))
    c[0, 1] = 0
    assert np.array_equal(translate_to_first_frame(c), c)


@given(coords_strategy)
def test_translation_idempotent(c):
    once = translate_to_first_frame(c)
    assert np.array_equal(translate_to_first_frame(once), once)


def test_translation_keeps_metadata():
    s = SkeletonSequence(coords=np.ones((2, 25, 3)), label=4, source_path="S001C001P001R001A005")
    out = translate_to_first_frame(s, ref_joint=0)
    assert out.label == 4 and out.source == s.source and np.all(out.coords == 0)


@settings(max_examples=50)
@given(coords_strategy, st.tuples(*[st.floats(-180, 180)] * 3))
def test_translation_commutes_with_rotation(c, angles):
    R = rotation_matrix(*angles)
    a = translate_to_first_frame(apply_rotation(c, R))
    b = apply_rotation(translate_to_first_frame(c), R)
    assert np.allclose(a, b, atol=1e-9)


# ---- persons ----------------------------------------------------------------------------------

def _body(bid, src="S001C001P001R001A007", coords=None):
    c = np.random.default_rng(ord(bid)).normal(size=(3, 25, 3)) if coords is None else coords
    return SkeletonSequence(coords=c, label=6, body_id=bid, source_path=src, is_ghost=is_ghost(c))


def test_one_body_one_sample():
    assert len(split_multi_person([_body("a")])) == 1


def test_two_bodies_two_samples_same_label_and_source():
    out = split_multi_person([_body("a"), _body("b")])
    assert len(out) == 2
    assert {s.label for s in out} == {6} and len({s.source for s in out}) == 1
    assert list(group_by_source(out).values()) == [[0, 1]]


def test_no_valid_bodies_logs_warning(caplog):
    with caplog.at_level("WARNING"):
        out = split_multi_person([_body("g", coords=np.zeros((3, 25, 3)))])
    assert out == []
    assert "no valid bodies" in caplog.text


# ---- clip sampling ----------------------------------------------------------------------------

def test_identity_when_T_equals_n():
    assert np.array_equal(clip_indices(20, 20), np.arange(20))


def test_equal_clips_of_two():
    # zero-based 0, 2, ..., 38 are the 1-based frames 1, 3, ..., 39
    assert np.array_equal(clip_indices(40, 20), np.arange(0, 40, 2))


def test_short_sequence_boundary_rule():
    expected = [0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3, 4, 4, 4, 4]
    assert clip_indices(5, 20).tolist() == expected
    assert brute_force_clips(5, 20) == expected


@given(st.integers(1, 200), st.integers(1, 40))
def test_first_frame_matches_brute_force(T, n):
    assert clip_indices(T, n).tolist() == brute_force_clips(T, n)


@given(st.integers(1, 200), st.integers(1, 40), st.integers(0, 2**31))
def test_random_mode_stays_in_clip(T, n, seed):
    idx = clip_indices(T, n, RANDOM, np.random.default_rng(seed))
    lo = np.array(brute_force_clips(T, n))
    hi = np.append(lo[1:], T)
    assert np.all(idx >= lo)
    assert np.all((idx < hi) | (idx == lo))
    assert np.all(np.diff(idx) >= 0)
    if T >= n:
        assert np.all(np.diff(idx) > 0)


def test_random_mode_covers_clip():
    rng = np.random.default_rng(0)
    seen = {int(clip_indices(40, 20, RANDOM, rng)[3]) for _ in range(200)}
    assert seen == {6, 7}


def test_sample_clips_on_sequence():
    s = SkeletonSequence(coords=np.arange(40 * 75, dtype=float).reshape(40, 25, 3))
    out = sample_clips(s, 20)
    assert out.frames == 20 and np.array_equal(out.coords, s.coords[::2])


def test_bad_clip_count():
    with pytest.raises(ConfigurationError):
        clip_indices(10, 0)
    with pytest.raises(ConfigurationError):
        SamplerConfig(scales=(15, 15))
    with pytest.raises(ConfigurationError):
        clip_indices(10, 3, mode="middle")


# ---- rotation ---------------------------------------------------------------------------------

def test_zero_angles_identity():
    assert np.array_equal(rotation_matrix(0, 0, 0), np.eye(3))


def test_ninety_about_z():
    assert np.allclose(rotation_matrix(0, 0, 90) @ [1, 0, 0], [0, 1, 0], atol=1e-15)
    assert np.allclose(rotation_matrix(90, 0, 0) @ [0, 1, 0], [0, 0, 1], atol=1e-15)
    assert np.allclose(rotation_matrix(0, 90, 0) @ [0, 0, 1], [1, 0, 0], atol=1e-15)


def test_composition_order():
    R = rotation_matrix(30, 40, 50)
    assert np.allclose(R, rotation_matrix(0, 0, 50) @ rotation_matrix(0, 40, 0) @ rotation_matrix(30, 0, 0))


@settings(max_examples=50)
@given(coords_strategy, st.integers(0, 2**31))
def test_rotation_preserves_distances(c, seed):
    out = rotate_augment(c, AugmentConfig(17.0), np.random.default_rng(seed))
    d = lambda x: np.linalg.norm(x[:, :, None] - x[:, None, :], axis=-1)
    assert np.allclose(d(out), d(c), atol=1e-6)
    assert np.allclose(np.linalg.norm(out.mean(1), axis=-1), np.linalg.norm(c.mean(1), axis=-1), atol=1e-6)


def test_angles_within_range():
    rng = np.random.default_rng(0)
    for _ in range(50):
        out = rotate_augment(np.eye(3)[None], AugmentConfig((5.0, 0.0, 0.0)), rng)[0]
        angle = np.degrees(np.arctan2(out[1, 2], out[1, 1]))
        assert abs(angle) <= 5.0 and np.allclose(out[0], [1, 0, 0])


def test_disabled_or_invalid_augment():
    c = np.ones((2, 3, 3))
    assert rotate_augment(c, AugmentConfig(30, enabled=False)) is c
    with pytest.raises(ConfigurationError):
        AugmentConfig(-1.0)


# ---- per-sample streams -----------------------------------------------------------------------

def test_pipeline_deterministic_given_seed():
    c = np.random.default_rng(0).normal(size=(50, 25, 3))
    a = make_views(c, (15, 20, 25), RANDOM, sample_rng(3, 1, 7), AugmentConfig())
    b = make_views(c, (15, 20, 25), RANDOM, sample_rng(3, 1, 7), AugmentConfig())
    assert all(np.array_equal(a[s], b[s]) for s in a)
    d = make_views(c, (15, 20, 25), RANDOM, sample_rng(3, 2, 7), AugmentConfig())
    assert not np.array_equal(a[20], d[20])


def test_views_share_one_rotation():
    c = np.random.default_rng(0).normal(size=(30, 25, 3))
    v = make_views(c, (15, 30), DETERMINISTIC_FIRST, np.random.default_rng(1), AugmentConfig(30))
    # the 30-frame view is the whole rotated sequence; the 15-frame view is every other frame of it
    assert np.allclose(v[15], v[30][::2])
