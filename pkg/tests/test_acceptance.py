"""End-to-end acceptance criteria, one test per criterion.

Each test prints a PASS/FAIL line (also repeated in the terminal summary) and
asserts at the stated tolerance.  Run with ``pytest tests/test_acceptance.py -s``.
"""

import copy
import io
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, FIXTURES, TINY_CONFIG
from mssgn import cli, presets, synthetic
from mssgn.model import MSSGN, count_parameters, multi_scale_loss
from mssgn.numerics import Tensor, cross_entropy_label_smoothed
from mssgn.preprocess import DETERMINISTIC_FIRST, clip_indices
from mssgn.skeleton_io import dump_canonical, load_canonical, parse_ntu_file, split_protocol
from mssgn.trainer import TrainConfig, Trainer, evaluate, lr_at, prepare
from mssgn.verify import model_grad_check, randomize_bn


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def within(value, target, rel):
    return abs(value / target - 1) <= rel


# ---- shared overfit run ----------------------------------------------------------------------

OVERFIT_EPOCHS = 40
PAIR_BLIND = dict(frame_index=False, tconv_kernel=1, use_velocity=False)


@pytest.fixture(scope="module")
def synthetic_data():
    train, test = synthetic.make_dataset(80, 40, seed=0)
    return prepare(train), prepare(test)


def train_synthetic(data, epochs=OVERFIT_EPOCHS, **model_kw):
    train, test = data
    model = MSSGN(presets.overfit(**model_kw))
    trainer = Trainer(model, TrainConfig(epochs=epochs, decay_epochs=(), batch_size=16, seed=0), train)
    t0 = time.perf_counter()
    rows = trainer.fit()
    secs = time.perf_counter() - t0
    return model, rows, evaluate(model, test, n_views=5, seed=0), secs


@pytest.fixture(scope="module")
def overfit_run(synthetic_data):
    return train_synthetic(synthetic_data)


# ---- 1 ---------------------------------------------------------------------------------------

def test_c01_parameter_counts():
    t0 = time.perf_counter()
    ss = count_parameters(MSSGN(presets.ntu120(scales=(20,))))
    ms = count_parameters(MSSGN(presets.ntu120()))
    sep = count_parameters(MSSGN(presets.ntu120(share_trunk=False)))
    secs = time.perf_counter() - t0
    checks = {
        "SS 0.73M +-3%": within(ss, 0.73e6, 0.03),
        "MS 1.50M +-3%": within(ms, 1.50e6, 0.03),
        "sep > MS": sep > ms,
        "sep 2.19M +-5%": within(sep, 2.19e6, 0.05),
        "runtime < 1 s": secs < 1.0,
    }
    failed = [k for k, v in checks.items() if not v]
    report("1 parameter counts", not failed,
           f"SS={ss} ({ss / 0.73e6 - 1:+.2%}), MS={ms} ({ms / 1.50e6 - 1:+.2%}), "
           f"sep={sep} ({sep / 2.19e6 - 1:+.2%}), {secs:.2f}s" + (f"; failed: {failed}" if failed else ""))


# ---- 2 ---------------------------------------------------------------------------------------

def test_c02_gradient_check():
    t0 = time.perf_counter()
    rep = model_grad_check(seed=0)
    secs = time.perf_counter() - t0
    checked = sum(g.checked for g in rep.groups)
    ok = rep.max_rel_error < 1e-4 and all(g.checked for g in rep.groups) and secs < 120
    report("2 gradient check", ok, f"{len(rep.groups)} parameter groups, {checked} coordinates, "
           f"max rel err {rep.max_rel_error:.2e}, {secs:.1f}s")


# ---- 3 ---------------------------------------------------------------------------------------

def test_c03_adjacency_rows():
    model = MSSGN(presets.ntu120(scales=(20,)))
    rng = np.random.default_rng(3)
    worst, positive, frames = 0.0, True, 0
    for _ in range(5):
        G = model.graphs(rng.standard_normal((20, 25, 3)), 20)
        frames += G.shape[0]
        worst = max(worst, float(np.abs(G.sum(-1) - 1).max()))
        positive &= bool(np.all(G > 0))
    report("3 adjacency normalization", frames == 100 and worst < 1e-6 and positive,
           f"{frames} frames, max |row sum - 1| = {worst:.1e}, all positive: {positive}")


# ---- 4 ---------------------------------------------------------------------------------------

def test_c04_joint_permutation():
    details, ok = [], True
    for precision, tol in (("float32", 1e-5), ("float64", 1e-10)):
        cfg = presets.overfit(scales=(15, 20), precision=precision)
        model = MSSGN(cfg).eval()
        rng = np.random.default_rng(4)
        randomize_bn(model, rng)
        coords = rng.standard_normal((2, 30, 25, 3))
        views = {s: coords[:, np.linspace(0, 29, s).round().astype(int)].astype(cfg.dtype) for s in cfg.scales}
        base = model(views)
        worst = 0.0
        for _ in range(20):
            perm = rng.permutation(25)
            out = model({s: v[:, :, perm] for s, v in views.items()}, joint_types=perm)
            worst = max(worst, max(float(np.abs(out[s].data - base[s].data).max()) for s in base))
        ok &= worst < tol
        details.append(f"{precision} max change {worst:.1e} (< {tol:g})")
    report("4 joint-permutation invariance", ok, ", ".join(details))


# ---- 5 ---------------------------------------------------------------------------------------

def test_c05_frame_order():
    rng = np.random.default_rng(5)
    coords = rng.standard_normal((2, 20, 25, 3))

    def max_change(**kw):
        model = MSSGN(presets.overfit(scales=(20,), precision="float64", **kw)).eval()
        randomize_bn(model, np.random.default_rng(0))
        base = model.ss_forward(coords, 20).data
        return max(float(np.abs(model.ss_forward(coords[:, rng.permutation(20)], 20).data - base).max())
                   for _ in range(10))

    blind = max_change(**PAIR_BLIND)
    aware = max_change(tconv_kernel=1, use_velocity=False)
    report("5 frame-order contract", blind < 1e-5 and aware > 1e-3,
           f"without frame index {blind:.1e} (< 1e-5), with frame index {aware:.1e} (> 1e-3)")


# ---- 6 ---------------------------------------------------------------------------------------

@pytest.mark.slow
def test_c06_overfit_oracle(overfit_run):
    _, rows, res, secs = overfit_run
    first = next((r.epoch for r in rows if r.train_acc == 1.0), None)
    ok = first is not None and first <= 300 and res.accuracy >= 0.9 and secs < 1800
    report("6 overfit oracle", ok,
           f"100% train first at epoch {first}, test {res.accuracy:.3f} after {len(rows)} epochs, {secs:.0f}s")


def pair_accuracy(res):
    """Fraction of test sources whose prediction picks the right member of its reversed pair."""
    same_pair = res.predictions // 2 == res.labels // 2
    return float((res.predictions[same_pair] == res.labels[same_pair]).sum() / len(res.labels))


@pytest.mark.slow
def test_c06_reversed_pairs_need_frame_order(synthetic_data):
    accs = {}
    for name, kw in (("blind", PAIR_BLIND), ("frame index", dict(PAIR_BLIND, frame_index=True)),
                     ("kernel 3", dict(PAIR_BLIND, tconv_kernel=3))):
        accs[name] = pair_accuracy(train_synthetic(synthetic_data, **kw)[2])
    ok = accs["blind"] <= 0.75 and accs["frame index"] >= 0.9 and accs["kernel 3"] >= 0.9
    report("6 reversed-pair ablation", ok, ", ".join(f"{k} {v:.3f}" for k, v in accs.items())
           + " (blind <= 0.75, others >= 0.9)")


# ---- 7 ---------------------------------------------------------------------------------------

def test_c07_schedule():
    cfg = TrainConfig()
    ranges = {1e-3: (1, 59), 1e-4: (60, 89), 1e-5: (90, 109), 1e-6: (110, 120)}
    bad = [(e, lr_at(e, cfg)) for lr, (a, b) in ranges.items() for e in range(a, b + 1) if lr_at(e, cfg) != lr]
    report("7 schedule table", not bad, "exact on all 120 epochs" if not bad else f"mismatches {bad[:5]}")


# ---- 8 ---------------------------------------------------------------------------------------

def test_c08_closed_form_losses():
    K = 120
    one = float(cross_entropy_label_smoothed(Tensor(np.zeros((4, K))), [0, 5, 17, 119], 0.1).data)
    three = float(multi_scale_loss({s: Tensor(np.zeros((4, K))) for s in (15, 20, 25)}, [0, 5, 17, 119], 0.1).data)
    e1, e3 = abs(one - math.log(K)), abs(three - 3 * math.log(K))
    report("8 closed-form losses", e1 < 1e-9 and e3 < 1e-9, f"|CE - ln K| = {e1:.1e}, |sum - 3 ln K| = {e3:.1e}")


# ---- 9 ---------------------------------------------------------------------------------------

def test_c09_roundtrip_and_digest():
    seqs = [s for p in sorted(FIXTURES.glob("*.skeleton")) for s in parse_ntu_file(p)]
    buf = io.StringIO()
    dump_canonical(seqs, buf)
    back = load_canonical(io.StringIO(buf.getvalue()))
    again = io.StringIO()
    dump_canonical(back, again)
    exact = len(back) == len(seqs) and all(a.same_as(b) for a, b in zip(seqs, back))
    stable = again.getvalue() == buf.getvalue()

    moved = copy.deepcopy(seqs)
    for s in moved:
        s.coords = s.coords + np.float32(1.0)
    digests = {split_protocol(r, "cross-subject").digest() for r in (seqs, back, moved)}
    pure = len(digests) == 1
    report("9 round trip and split purity", exact and stable and pure,
           f"{len(seqs)} records exact: {exact}, re-dump identical: {stable}, one digest: {pure}")


# ---- 10 --------------------------------------------------------------------------------------

@pytest.mark.slow
def test_c10_smp_probe(overfit_run, synthetic_data):
    model, _, res, _ = overfit_run
    test = synthetic_data[1]
    c3, scale = model.cfg.c3, max(model.scales)
    conserved, hits, top1, correct = True, 0, 0, 0
    for i, s in enumerate(test):
        clip = s.coords[clip_indices(s.frames, scale, DETERMINISTIC_FIRST)]
        counts, top = model.smp_counts(clip, scale, top=5)
        conserved &= int(counts.sum()) == c3 * scale
        if res.predictions[i] != res.labels[i]:
            continue
        correct += 1
        moving = set(synthetic.MOVING_PART[s.label])
        hits += bool(moving & set(top))
        top1 += top[0] in moving
    frac = hits / max(correct, 1)
    report("10 SMP probe", conserved and correct > 0 and frac >= 0.9,
           f"counts sum to C3*T={c3 * scale} for all: {conserved}; moving-part joint in top-5 for "
           f"{hits}/{correct} correct ({frac:.0%}); top-1 in moving part {top1}/{correct} (informational)")


# ---- 11 --------------------------------------------------------------------------------------

def test_c11_determinism_and_resume(tmp_path):
    args = ["--config", TINY_CONFIG, "--seed", "1"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["train", *args, "--out-dir", str(a)]) == 0
    assert cli.main(["train", *args, "--out-dir", str(b)]) == 0
    identical = (a / "metrics.csv").read_bytes() == (b / "metrics.csv").read_bytes()

    f64 = [*args, "--set", 'model.precision="float64"', "--set", "train.checkpoint_every=1"]
    full, resumed = tmp_path / "full", tmp_path / "resumed"
    assert cli.main(["train", *f64, "--out-dir", str(full)]) == 0
    assert cli.main(["resume", "--checkpoint", str(full / "ckpt_epoch0001.npz"), "--out-dir", str(resumed)]) == 0
    same_metrics = (full / "metrics.csv").read_bytes() == (resumed / "metrics.csv").read_bytes()
    pa, pb = np.load(full / "last.npz"), np.load(resumed / "last.npz")
    same_params = all(np.array_equal(pa[k], pb[k]) for k in pa.files if k.startswith("model/"))
    report("11 determinism and resume", identical and same_metrics and same_params,
           f"metrics CSV byte-identical: {identical}; 64-bit resume metrics identical: {same_metrics}, "
           f"parameters identical: {same_params}")
