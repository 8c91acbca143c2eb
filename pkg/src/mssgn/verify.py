"""Property checks behind the ``verify`` command."""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass

import numpy as np

from . import presets
from .model import MSSGN, multi_scale_loss
from .numerics import BatchNorm, Parameter, Tensor, grad_check
from .numerics import functional as F
from .skeleton_io import dump_canonical, format_ntu_skeleton, load_canonical, parse_ntu_skeleton, split_protocol
from .trainer import TrainConfig, lr_at


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""
    seconds: float = 0.0


def _p(rng, *shape):
    return Parameter(rng.standard_normal(shape))


def _grad_result(rep) -> tuple:
    return rep.passed, f"max rel err {rep.max_rel_error:.2e}"


def check_grad_affine(rng):
    x, W, b = _p(rng, 3, 4), _p(rng, 2, 4), _p(rng, 2)
    w = rng.standard_normal((3, 2))
    return _grad_result(grad_check(lambda: F.sum(F.mul(F.affine(x, W, b), w)), [x, W, b]))


def check_grad_relu(rng):
    x = Parameter(np.sign(rng.standard_normal((4, 5))) * rng.uniform(0.01, 1, (4, 5)))
    w = rng.standard_normal((4, 5))
    return _grad_result(grad_check(lambda: F.sum(F.mul(F.relu(x), w)), [x]))


def check_grad_softmax(rng):
    x = _p(rng, 3, 5)
    w = rng.standard_normal((3, 5))
    return _grad_result(grad_check(lambda: F.sum(F.mul(F.softmax_rows(x), w)), [x]))


def check_grad_temporal_conv(rng):
    x, W, b = _p(rng, 2, 3, 5), _p(rng, 2, 3, 3), _p(rng, 2)
    w = rng.standard_normal((2, 2, 5))
    return _grad_result(grad_check(lambda: F.sum(F.mul(F.temporal_conv(x, W, b), w)), [x, W, b]))


def check_grad_max_pool(rng):
    x = Parameter(rng.permutation(24).reshape(2, 3, 4) * 0.1)
    w = rng.standard_normal((2, 1, 4))
    return _grad_result(grad_check(lambda: F.sum(F.mul(F.max_pool(x, axis=1), w)), [x]))


def check_grad_batch_norm(rng):
    bn = BatchNorm(3, axis=1, dtype=np.float64)
    bn.gamma.data[:] = rng.uniform(0.5, 1.5, 3)
    x = _p(rng, 4, 3, 2)
    w = rng.standard_normal((4, 3, 2))
    return _grad_result(grad_check(lambda: F.sum(F.mul(bn(x), w)), [x, bn.gamma, bn.beta]))


def check_grad_cross_entropy(rng):
    z = _p(rng, 4, 3)
    return _grad_result(grad_check(lambda: F.cross_entropy_label_smoothed(z, [0, 2, 1, 2], 0.1), [z]))


def randomize_bn(model, rng) -> None:
    """Give every batch-norm layer non-trivial eval statistics and affine parameters."""
    for m in model.modules():
        if isinstance(m, BatchNorm):
            m.running_mean[:] = rng.normal(0, 0.3, m.running_mean.shape)
            m.running_var[:] = rng.uniform(0.5, 2.0, m.running_var.shape)
            m.gamma.data[:] = rng.uniform(0.5, 1.5, m.gamma.shape)
            m.beta.data[:] = rng.normal(0, 0.3, m.beta.shape)


def tiny_batch(cfg, rng, batch: int = 4) -> tuple:
    coords = rng.standard_normal((batch, 8, cfg.num_joints, 3))
    views = {s: coords[:, np.linspace(0, 7, s).round().astype(int)] for s in cfg.scales}
    labels = rng.integers(0, cfg.num_classes, batch)
    return views, labels


def model_grad_check(max_coords=None, seed: int = 0):
    """Central-difference check of the tiny multi-scale model, batch-norm in eval mode."""
    rng = np.random.default_rng(seed)
    cfg = presets.tiny()
    model = MSSGN(cfg)
    randomize_bn(model, rng)
    # a near-uniform adjacency leaves theta/phi gradients at roundoff level
    for name, p in model.named_parameters():
        if ".adjacency." in name:
            p.data *= 4.0
    model.eval()
    views, labels = tiny_batch(cfg, rng)
    return grad_check(lambda: multi_scale_loss(model(views), labels, 0.1), list(model.named_parameters()),
                      max_coords=max_coords, rng=rng)


def check_grad_model(rng):
    return _grad_result(model_grad_check(max_coords=20))


def check_adjacency(rng):
    model = MSSGN(presets.tiny())
    worst = 0.0
    for _ in range(10):
        coords = rng.standard_normal((1, 5, 5, 3)) * rng.uniform(0.1, 10)
        G = model.graphs(coords[0], 5)
        worst = max(worst, float(np.abs(G.sum(-1) - 1).max()))
        if not np.all(G > 0):
            return False, "non-positive adjacency entry"
    return worst < 1e-6, f"max |row sum - 1| = {worst:.1e}"


def check_joint_permutation(rng):
    cfg = presets.tiny()
    model = MSSGN(cfg).eval()
    views, _ = tiny_batch(cfg, rng, 2)
    base = model(views)
    worst = 0.0
    for _ in range(5):
        perm = rng.permutation(cfg.num_joints)
        out = model({s: v[:, :, perm] for s, v in views.items()}, joint_types=perm)
        worst = max(worst, max(float(np.abs(out[s].data - base[s].data).max()) for s in base))
    return worst < 1e-10, f"max logit change {worst:.1e}"


def check_frame_order(rng):
    cfg = presets.tiny(frame_index=False, tconv_kernel=1, use_velocity=False)
    model = MSSGN(cfg).eval()
    views, _ = tiny_batch(cfg, rng, 2)
    base = model(views)
    worst = 0.0
    for s, v in views.items():
        out = model.ss_forward(v[:, rng.permutation(s)], s)
        worst = max(worst, float(np.abs(out.data - base[s].data).max()))
    return worst < 1e-10, f"max logit change {worst:.1e}"


def check_parser_roundtrip(rng):
    frames = [[("72057594037931101", rng.normal(size=(25, 3)))] for _ in range(3)]
    text = format_ntu_skeleton(frames)
    seqs = parse_ntu_skeleton(io.StringIO(text), name="S001C002P003R002A060.skeleton")
    buf = io.StringIO()
    dump_canonical(seqs, buf)
    back = load_canonical(io.StringIO(buf.getvalue()))
    ok = len(back) == len(seqs) and all(a.same_as(b) for a, b in zip(seqs, back))
    m1 = split_protocol(seqs, "cross-view").digest()
    m2 = split_protocol(back, "cross-view").digest()
    return ok and m1 == m2, f"{len(seqs)} sequence(s)"


def check_schedule(rng):
    cfg = TrainConfig()
    expected = {1: 1e-3, 59: 1e-3, 60: 1e-4, 89: 1e-4, 90: 1e-5, 109: 1e-5, 110: 1e-6, 120: 1e-6}
    bad = {e: lr_at(e, cfg) for e, v in expected.items() if lr_at(e, cfg) != v}
    return not bad, f"mismatches: {bad}" if bad else "60/90/110 step decay"


def check_closed_form_loss(rng):
    logits = {s: Tensor(np.zeros((2, 120))) for s in (15, 20, 25)}
    total = float(multi_scale_loss(logits, [3, 7], 0.1).data)
    return abs(total - 3 * math.log(120)) < 1e-9, f"{total:.10f} vs 3 ln 120"


CHECKS: dict = {
    "grad:affine": check_grad_affine,
    "grad:relu": check_grad_relu,
    "grad:softmax_rows": check_grad_softmax,
    "grad:temporal_conv": check_grad_temporal_conv,
    "grad:max_pool": check_grad_max_pool,
    "grad:batch_norm": check_grad_batch_norm,
    "grad:cross_entropy": check_grad_cross_entropy,
    "grad:model": check_grad_model,
    "adjacency:row_stochastic": check_adjacency,
    "equivariance:joint_permutation": check_joint_permutation,
    "equivariance:frame_order": check_frame_order,
    "io:parser_roundtrip": check_parser_roundtrip,
    "schedule:step_decay": check_schedule,
    "loss:closed_form": check_closed_form_loss,
}


def run_all(seed: int = 0, checks: dict = None) -> list:
    results = []
    for name, fn in (checks or CHECKS).items():
        t0 = time.perf_counter()
        try:
            ok, detail = fn(np.random.default_rng(seed))
        except Exception as exc:  # a crashing check is a failed check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results
