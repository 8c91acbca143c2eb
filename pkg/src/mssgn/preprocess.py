"""Sequence normalization, clip sampling and rotation augmentation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from .errors import ConfigurationError
from .skeleton_io import MIDDLE_OF_SPINE, SkeletonSequence

log = logging.getLogger(__name__)

RANDOM = "random"
DETERMINISTIC_FIRST = "deterministic-first"


@dataclass
class SamplerConfig:
    scales: tuple = (15, 20, 25)
    mode: str = RANDOM
    seed: int = 0

    def __post_init__(self):
        self.scales = tuple(int(s) for s in self.scales)
        if not self.scales or any(s < 1 for s in self.scales) or len(set(self.scales)) != len(self.scales):
            raise ConfigurationError(f"clip counts must be positive and distinct, got {self.scales}")
        if self.mode not in (RANDOM, DETERMINISTIC_FIRST):
            raise ConfigurationError(f"unknown sampling mode {self.mode!r}")


@dataclass
class AugmentConfig:
    rotation_deg: Union[float, tuple] = 17.0
    enabled: bool = True

    def __post_init__(self):
        r = np.broadcast_to(np.asarray(self.rotation_deg, dtype=float), (3,))
        if np.any(r < 0):
            raise ConfigurationError(f"rotation range must be non-negative, got {self.rotation_deg}")

    @property
    def ranges(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.rotation_deg, dtype=float), (3,)).copy()


def _coords(x) -> np.ndarray:
    return x.coords if isinstance(x, SkeletonSequence) else np.asarray(x)


def _rewrap(x, coords):
    return replace(x, coords=coords) if isinstance(x, SkeletonSequence) else coords


def translate_to_first_frame(seq, ref_joint: int = MIDDLE_OF_SPINE):
    """Subtract the first frame's reference joint from every joint of every frame."""
    c = _coords(seq)
    return _rewrap(seq, c - c[0, ref_joint])


def split_multi_person(bodies: Sequence[SkeletonSequence]) -> list:
    """One independent sample per valid body; each keeps the label and source of its file."""
    out = [b for b in bodies if not b.is_ghost]
    if not out:
        src = bodies[0].source if bodies else "?"
        log.warning("source %s has no valid bodies", src)
    return out


def group_by_source(samples: Sequence[SkeletonSequence]) -> dict:
    groups: dict = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.source or f"#{i}", []).append(i)
    return groups


def clip_indices(T: int, n: int, mode: str = DETERMINISTIC_FIRST, rng=None) -> np.ndarray:
    """Zero-based frame index chosen from each of ``n`` equal contiguous clips of ``range(T)``.

    Clip ``i`` starts at ``floor(i*T/n)`` and ends before the next start; when
    ``T < n`` a clip may be empty and then reuses its start frame.
    """
    if n < 1:
        raise ConfigurationError(f"clip count must be >= 1, got {n}")
    starts = (np.arange(n + 1) * T) // n
    lo = np.minimum(starts[:-1], T - 1)
    hi = np.maximum(starts[1:], lo + 1)
    if mode == DETERMINISTIC_FIRST:
        return lo
    if mode != RANDOM:
        raise ConfigurationError(f"unknown sampling mode {mode!r}")
    rng = rng if rng is not None else np.random.default_rng()
    return lo + np.floor(rng.random(n) * (hi - lo)).astype(np.int64)


def sample_clips(seq, n: int, mode: str = DETERMINISTIC_FIRST, rng=None):
    c = _coords(seq)
    return _rewrap(seq, c[clip_indices(c.shape[0], n, mode, rng)])


def rotation_matrix(deg_x: float, deg_y: float, deg_z: float) -> np.ndarray:
    """``Rz @ Ry @ Rx`` of counterclockwise rotations about the right-handed axes."""
    ax, ay, az = np.deg2rad([deg_x, deg_y, deg_z])
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def apply_rotation(seq, R: np.ndarray):
    c = _coords(seq)
    return _rewrap(seq, (c @ R.T).astype(c.dtype, copy=False))


def rotate_augment(seq, cfg: AugmentConfig, rng=None):
    """Rotate the whole sequence by one random angle per axis drawn from the configured range."""
    if not cfg.enabled:
        return seq
    rng = rng if rng is not None else np.random.default_rng()
    r = cfg.ranges
    angles = rng.uniform(-r, r)
    return apply_rotation(seq, rotation_matrix(*angles))


def sample_rng(seed: int, epoch: int, sample_id: int) -> np.random.Generator:
    """Independent stream per (seed, epoch, sample)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, int(epoch), int(sample_id)])


def make_views(coords: np.ndarray, scales: Sequence[int], mode: str = RANDOM, rng=None,
               augment: AugmentConfig = None) -> dict:
    """Multi-scale views of one (already translated) sequence.

    The optional rotation is drawn once and shared by all scales.
    """
    rng = rng if rng is not None else np.random.default_rng()
    c = np.asarray(coords)
    if augment is not None and augment.enabled:
        c = rotate_augment(c, augment, rng)
    return {n: c[clip_indices(c.shape[0], n, mode, rng)] for n in scales}
