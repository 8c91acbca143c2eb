"""Frame-level module: frame-index semantics, spatial/temporal max pooling, CNN head."""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .errors import ConfigurationError
from .numerics import BatchNorm, Linear, MLPEmbed, Module, TemporalConv, Tensor, one_hot
from .numerics import functional as F


class FrameIndexEmbedder(MLPEmbed):
    def __init__(self, num_frames: int, hidden: int = 64, c3: int = 256, rng=None, dtype=np.float32):
        super().__init__(num_frames, hidden, c3, rng=rng, dtype=dtype)
        self.num_frames = num_frames

    def embed(self) -> Tensor:
        return self(Tensor(one_hot(np.arange(self.num_frames), self.num_frames, dtype=self.fc1.weight.dtype)))


class FrameLevelHead(Module):
    def __init__(self, c3: int = 256, c4: int = 512, num_classes: int = 120, kernel_size: int = 3,
                 rng=None, dtype=np.float32, bn_momentum=0.1, bn_eps=1e-5):
        if kernel_size % 2 == 0:
            raise ConfigurationError(f"temporal kernel size must be odd, got {kernel_size}")
        self.tconv = TemporalConv(c3, c3, kernel_size, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm(c3, axis=1, momentum=bn_momentum, eps=bn_eps, dtype=dtype)
        self.pconv = TemporalConv(c3, c4, 1, rng=rng, dtype=dtype)
        self.bn2 = BatchNorm(c4, axis=1, momentum=bn_momentum, eps=bn_eps, dtype=dtype)
        self.classifier = Linear(c4, num_classes, rng=rng, dtype=dtype)


class FrameLevel(Module):
    """One scale's frame-level branch: optional frame-index embedder plus the CNN head."""

    def __init__(self, num_frames: int, c3: int = 256, c4: int = 512, num_classes: int = 120,
                 kernel_size: int = 3, frame_index: bool = True, fi_hidden: int = 64,
                 rng=None, dtype=np.float32, bn_momentum=0.1, bn_eps=1e-5):
        self.num_frames = num_frames
        self.frame_index = FrameIndexEmbedder(num_frames, fi_hidden, c3, rng=rng, dtype=dtype) if frame_index else None
        self.head = FrameLevelHead(c3, c4, num_classes, kernel_size, rng=rng, dtype=dtype,
                                   bn_momentum=bn_momentum, bn_eps=bn_eps)

    def forward(self, x: Tensor) -> Tensor:
        return fl_forward(x, self.head, self.frame_index)


def add_frame_semantics(z: Tensor, embedder) -> Tensor:
    """Add the frame-index embedding of frame t to every joint of frame t."""
    if embedder is None:
        return z
    f = embedder.embed()  # [T, C3]
    if f.shape[-1] != z.shape[-1]:
        raise ConfigurationError(f"frame embedding width {f.shape[-1]} != feature width {z.shape[-1]}")
    return F.add(z, F.reshape(f, (1, f.shape[0], 1, f.shape[1])))


def spatial_max_pool(x: Tensor) -> Tensor:
    """``[N, T, J, C] -> [N, T, 1, C]``; ``.argmax`` holds the winning joint per (n, t, c)."""
    return F.max_pool(x, axis=2)


def _check_frames(x: Tensor, embedder) -> None:
    if embedder is not None and x.shape[1] != embedder.num_frames:
        raise ConfigurationError(f"sequence has {x.shape[1]} frames, frame-index embedding expects {embedder.num_frames}")


def fl_forward(x: Tensor, head: FrameLevelHead, embedder=None) -> Tensor:
    """``[N, T, J, C3]`` joint features -> ``[N, K]`` raw logits."""
    _check_frames(x, embedder)
    N, T = x.shape[0], x.shape[1]
    h = spatial_max_pool(add_frame_semantics(x, embedder))
    h = F.transpose(F.reshape(h, (N, T, h.shape[-1])), (0, 2, 1))  # [N, C3, T]
    h = F.relu(head.bn1(head.tconv(h)))
    h = F.relu(head.bn2(head.pconv(h)))
    h = F.reshape(F.max_pool(h, axis=2), (N, h.shape[1]))
    return head.classifier(h)


def smp_probe(x: Tensor, embedder=None, top: int = 5) -> tuple:
    """Count how often each joint wins the spatial max pooling over all channels and frames.

    ``x`` is one sample's ``[T, J, C3]`` (or ``[1, T, J, C3]``) joint features.
    Returns ``(counts[J], top joints)``; ties rank the lower joint index first.
    """
    if x.ndim == 3:
        x = F.reshape(x, (1,) + x.shape)
    if x.shape[0] != 1:
        raise ConfigurationError("smp_probe takes a single sample")
    _check_frames(x, embedder)
    pooled = spatial_max_pool(add_frame_semantics(x, embedder))
    J = x.shape[2]
    counts = np.bincount(pooled.argmax.reshape(-1), minlength=J)
    order = sorted(range(J), key=lambda j: (-counts[j], j))
    return counts, order[:top]


def probe_csv(counts) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["joint_index", "count"])
    for j, c in enumerate(counts):
        w.writerow([j, int(c)])
    return buf.getvalue()


def probe_summary(top_by_action: dict) -> str:
    return json.dumps({str(k): [int(j) for j in v] for k, v in top_by_action.items()}, indent=2, sort_keys=True)
