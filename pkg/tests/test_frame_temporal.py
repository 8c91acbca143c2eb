import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mssgn.errors import ConfigurationError
from mssgn.frame_temporal import (
    FrameIndexEmbedder,
    FrameLevel,
    add_frame_semantics,
    fl_forward,
    probe_csv,
    probe_summary,
    smp_probe,
    spatial_max_pool,
)
from mssgn.numerics import Parameter, Tensor, grad_check
from mssgn.numerics import functional as F


def mk_fl(T=4, c3=6, c4=7, K=5, kernel=3, fi=True, seed=0, dtype=np.float64):
    return FrameLevel(T, c3, c4, K, kernel, fi, fi_hidden=3, rng=np.random.default_rng(seed), dtype=dtype)


def randomize_bn(fl, rng):
    for bn in (fl.head.bn1, fl.head.bn2):
        bn.running_mean[...] = rng.normal(0, 0.3, bn.running_mean.shape)
        bn.running_var[...] = rng.uniform(0.5, 2, bn.running_var.shape)
        bn.gamma.data[...] = rng.uniform(0.5, 1.5, bn.gamma.shape)
        bn.beta.data[...] = rng.normal(0, 0.3, bn.beta.shape)


# ---- frame semantics -------------------------------------------------------------------------

def test_zero_embedder_is_identity():
    emb = FrameIndexEmbedder(4, 3, 6, rng=np.random.default_rng(0), dtype=np.float64)
    emb.zero_()
    z = np.random.default_rng(1).normal(size=(2, 4, 5, 6))
    assert np.array_equal(add_frame_semantics(Tensor(z), emb).data, z)
    t = Tensor(z)
    assert add_frame_semantics(t, None) is t


def test_zero_features_give_embedding_per_joint():
    emb = FrameIndexEmbedder(4, 3, 6, rng=np.random.default_rng(0), dtype=np.float64)
    out = add_frame_semantics(Tensor(np.zeros((1, 4, 5, 6))), emb).data
    f = emb.embed().data
    for k in range(5):
        assert np.array_equal(out[0, :, k], f)


@given(st.integers(0, 2**31))
def test_additivity(seed):
    rng = np.random.default_rng(seed)
    emb = FrameIndexEmbedder(3, 2, 4, rng=rng, dtype=np.float64)
    a, c = rng.normal(size=(2, 3, 5, 4)), rng.normal(size=(2, 3, 5, 4))
    assert np.allclose(add_frame_semantics(Tensor(a), emb).data + c, add_frame_semantics(Tensor(a + c), emb).data)


def test_width_mismatch():
    emb = FrameIndexEmbedder(4, 3, 6, dtype=np.float64)
    with pytest.raises(ConfigurationError):
        add_frame_semantics(Tensor(np.zeros((1, 4, 5, 7))), emb)


# ---- spatial max pooling ---------------------------------------------------------------------

def test_single_joint_is_identity():
    x = np.random.default_rng(0).normal(size=(2, 3, 1, 4))
    out = spatial_max_pool(Tensor(x))
    assert np.array_equal(out.data, x) and np.all(out.argmax == 0)


def test_dominant_joint_fills_argmax():
    x = np.random.default_rng(1).normal(size=(2, 3, 5, 4))
    x[:, :, 2] = 100 + x[:, :, 2]
    out = spatial_max_pool(Tensor(x))
    assert np.array_equal(out.data[:, :, 0], x[:, :, 2])
    assert np.all(out.argmax == 2)


@given(st.integers(0, 2**31))
def test_brute_force_max(seed):
    x = np.random.default_rng(seed).normal(size=(2, 4, 3, 5))
    out = spatial_max_pool(Tensor(x))
    for n in range(2):
        for t in range(4):
            for c in range(5):
                vals = [x[n, t, j, c] for j in range(3)]
                assert out.data[n, t, 0, c] == max(vals)
                assert out.argmax.reshape(2, 4, 5)[n, t, c] == vals.index(max(vals))


# ---- FL forward ------------------------------------------------------------------------------

def test_single_frame_pipeline():
    fl = mk_fl(T=1).eval()
    out = fl(Tensor(np.random.default_rng(0).normal(size=(2, 1, 5, 6))))
    assert out.shape == (2, 5) and np.all(np.isfinite(out.data))


def test_pipeline_by_hand():
    rng = np.random.default_rng(3)
    fl = mk_fl(T=3, kernel=3).eval()
    randomize_bn(fl, rng)
    x = rng.normal(size=(2, 3, 5, 6))
    h = x + fl.frame_index.embed().data[None, :, None, :]
    h = h.max(axis=2)                                        # [N, T, C3]
    W, b = fl.head.tconv.weight.data, fl.head.tconv.bias.data
    hp = np.pad(h, ((0, 0), (1, 1), (0, 0)))
    conv = np.stack([sum(hp[:, t + k] @ W[:, :, k].T for k in range(3)) + b for t in range(3)], axis=1)

    def bn(v, st):
        return st.gamma.data * (v - st.running_mean) / np.sqrt(st.running_var + st.eps) + st.beta.data

    h = np.maximum(bn(conv, fl.head.bn1), 0)
    h = np.maximum(bn(h @ fl.head.pconv.weight.data[:, :, 0].T + fl.head.pconv.bias.data, fl.head.bn2), 0)
    logits = h.max(axis=1) @ fl.head.classifier.weight.data.T + fl.head.classifier.bias.data
    assert np.allclose(fl(Tensor(x)).data, logits, atol=1e-12)


def test_frame_count_mismatch():
    fl = mk_fl(T=4)
    with pytest.raises(ConfigurationError):
        fl(Tensor(np.zeros((2, 5, 3, 6))))


def test_even_kernel_rejected():
    with pytest.raises(ConfigurationError):
        mk_fl(kernel=2)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_order_blind_without_fi_and_tconv(seed):
    rng = np.random.default_rng(seed)
    fl = mk_fl(T=6, kernel=1, fi=False, seed=seed).eval()
    randomize_bn(fl, rng)
    x = rng.normal(size=(2, 6, 5, 6))
    perm = rng.permutation(6)
    assert np.abs(fl(Tensor(x[:, perm])).data - fl(Tensor(x)).data).max() < 1e-12


def test_order_sensitive_with_fi():
    rng = np.random.default_rng(0)
    fl = mk_fl(T=6, kernel=1, fi=True).eval()
    x = rng.normal(size=(2, 6, 5, 6))
    base = fl(Tensor(x)).data
    diffs = [np.abs(fl(Tensor(x[:, rng.permutation(6)])).data - base).max() for _ in range(10)]
    assert max(diffs) > 1e-3


def test_zero_classifier_gives_bias():
    fl = mk_fl()
    fl.head.classifier.weight.data[...] = 0
    out = fl(Tensor(np.random.default_rng(0).normal(size=(3, 4, 5, 6)))).data
    assert np.array_equal(out, np.tile(fl.head.classifier.bias.data, (3, 1)))


def test_grad_check_eval_mode():
    rng = np.random.default_rng(4)
    fl = mk_fl(T=4).eval()
    randomize_bn(fl, rng)
    x = rng.normal(size=(3, 4, 5, 6))
    labels = [0, 3, 1]
    rep = grad_check(lambda: F.cross_entropy_label_smoothed(fl(Tensor(x)), labels, 0.1),
                     list(fl.named_parameters()), max_coords=15, rng=rng)
    assert rep.passed, rep.summary()


def test_grad_check_input_train_mode():
    rng = np.random.default_rng(5)
    fl = mk_fl(T=3, fi=False)
    x = Parameter(rng.normal(size=(3, 3, 4, 6)))
    w = rng.normal(size=(3, 5))
    rep = grad_check(lambda: F.sum(F.mul(fl(x), w)), [("x", x)], rng=rng)
    assert rep.passed, rep.summary()


# ---- SMP probe -------------------------------------------------------------------------------

def test_probe_single_dominant_joint():
    x = np.random.default_rng(0).normal(size=(4, 7, 6))
    x[:, 5] += 100
    counts, top = smp_probe(Tensor(x))
    assert counts[5] == 6 * 4 and counts.sum() == 24
    assert top == [5, 0, 1, 2, 3]


@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 8))
def test_probe_conservation(seed, T, J):
    rng = np.random.default_rng(seed)
    emb = FrameIndexEmbedder(T, 2, 5, rng=rng, dtype=np.float64)
    counts, _ = smp_probe(Tensor(rng.normal(size=(T, J, 5))), emb)
    assert counts.sum() == 5 * T and len(counts) == J


def test_probe_two_joint_alternation():
    # joint 0 wins even channels on every frame, joint 1 wins odd channels on frames 0 and 2 only
    T, C = 3, 4
    x = np.zeros((T, 2, C))
    x[:, 0, 0::2] = 1.0
    x[[0, 2], 1, 1::2] = 1.0
    x[1, 0, 1::2] = 1.0
    counts, top = smp_probe(Tensor(x))
    assert counts.tolist() == [2 * 3 + 2 * 1, 2 * 2]
    assert top == [0, 1]


def test_probe_tie_goes_to_lower_joint():
    counts, top = smp_probe(Tensor(np.ones((2, 3, 4))))
    assert counts.tolist() == [8, 0, 0] and top == [0, 1, 2]


def test_probe_outputs():
    assert probe_csv(np.array([3, 1])) == "joint_index,count\n0,3\n1,1\n"
    assert json.loads(probe_summary({2: [4, 1]})) == {"2": [4, 1]}
    with pytest.raises(ConfigurationError):
        smp_probe(Tensor(np.zeros((2, 3, 4, 5))))
