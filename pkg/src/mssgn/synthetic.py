"""Generated four-class skeleton dataset for overfitting and ablation checks.

Classes (25-joint NTU layout):

0. left arm raised sideways
1. left arm lowered (class 0 played backwards)
2. right leg lifted forward
3. right leg lowered (class 2 played backwards)

A class and its reversal visit the same poses, so only frame order separates
them.
"""

from __future__ import annotations

import numpy as np

from .preprocess import rotation_matrix
from .skeleton_io import SkeletonSequence

REST_POSE = np.array([
    [0.00, 0.00, 0.00], [0.00, 0.30, 0.00], [0.00, 0.55, 0.00], [0.00, 0.70, 0.00],
    [-0.18, 0.50, 0.00], [-0.20, 0.25, 0.00], [-0.22, 0.02, 0.00], [-0.22, -0.05, 0.00],
    [0.18, 0.50, 0.00], [0.20, 0.25, 0.00], [0.22, 0.02, 0.00], [0.22, -0.05, 0.00],
    [-0.10, -0.05, 0.00], [-0.10, -0.45, 0.00], [-0.10, -0.85, 0.00], [-0.10, -0.90, 0.10],
    [0.10, -0.05, 0.00], [0.10, -0.45, 0.00], [0.10, -0.85, 0.00], [0.10, -0.90, 0.10],
    [0.00, 0.50, 0.00], [-0.22, -0.12, 0.00], [-0.19, -0.07, 0.03], [0.22, -0.12, 0.00],
    [0.19, -0.07, 0.03],
])

LEFT_ARM = (5, 6, 7, 21, 22)
LEFT_SHOULDER = 4
RIGHT_LEG = (17, 18, 19)
RIGHT_HIP = 16
MOVING_PART = {0: (4,) + LEFT_ARM, 1: (4,) + LEFT_ARM, 2: (16,) + RIGHT_LEG, 3: (16,) + RIGHT_LEG}
CLASS_NAMES = ("raise left arm", "lower left arm", "lift right leg", "lower right leg")
NUM_CLASSES = 4


def _ramp(T: int, rng) -> np.ndarray:
    t0 = rng.uniform(0.0, 0.2) * (T - 1)
    t1 = rng.uniform(0.8, 1.0) * (T - 1)
    s = np.clip((np.arange(T) - t0) / max(t1 - t0, 1e-6), 0.0, 1.0)
    return s * s * (3 - 2 * s)


def _rotate_about(points, pivot, R):
    return (points - pivot) @ R.T + pivot


def forward_motion(kind: str, rng, frames=(30, 60)) -> np.ndarray:
    """One raise ("arm") or lift ("leg") performance, ``[T, 25, 3]``."""
    T = int(rng.integers(frames[0], frames[1] + 1))
    scale = rng.uniform(0.9, 1.1)
    pose = REST_POSE * scale
    s = _ramp(T, rng)
    out = np.repeat(pose[None], T, axis=0)
    if kind == "arm":
        peak = rng.uniform(100, 150)
        for t in range(T):
            R = rotation_matrix(0, 0, -peak * s[t])
            out[t, list(LEFT_ARM)] = _rotate_about(pose[list(LEFT_ARM)], pose[LEFT_SHOULDER], R)
    else:
        peak = rng.uniform(50, 80)
        for t in range(T):
            R = rotation_matrix(-peak * s[t], 0, 0)
            out[t, list(RIGHT_LEG)] = _rotate_about(pose[list(RIGHT_LEG)], pose[RIGHT_HIP], R)
    sway = 0.01 * np.sin(np.linspace(0, rng.uniform(1, 3) * np.pi, T) + rng.uniform(0, 2 * np.pi))
    out[:, :, 0] += sway[:, None]
    out += rng.normal(0, 0.005, size=out.shape)
    view = rotation_matrix(0, rng.uniform(-20, 20), 0)
    return out @ view.T + rng.uniform(-0.5, 0.5, size=3) + np.array([0.0, 0.0, 3.0])


def make_sample(label: int, rng) -> np.ndarray:
    coords = forward_motion("arm" if label in (0, 1) else "leg", rng)
    if label in (1, 3):
        coords = coords[::-1]
    return np.ascontiguousarray(coords, dtype=np.float32)


def make_dataset(n_train: int = 80, n_test: int = 40, seed: int = 0) -> tuple:
    """Balanced train/test lists of :class:`SkeletonSequence`.

    Train subjects are 1-8, test subjects 9-12.
    """
    rng = np.random.default_rng(seed)
    out = []
    for split, n, subjects in (("train", n_train, range(1, 9)), ("test", n_test, range(9, 13))):
        subjects = list(subjects)
        seqs = []
        for i in range(n):
            label = i % NUM_CLASSES
            subject = subjects[i % len(subjects)]
            name = f"S001C001P{subject:03d}R{i // NUM_CLASSES + 1:03d}A{label + 1:03d}_{split}{i:04d}"
            seqs.append(SkeletonSequence(coords=make_sample(label, rng), label=label, subject_id=subject,
                                         camera_id=1, setup_id=1, body_id="1", source_path=name,
                                         dataset="synthetic4"))
        out.append(seqs)
    return out[0], out[1]
