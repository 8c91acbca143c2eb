"""Dynamics representation: position, velocity and part-relative movement embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .numerics import MLPEmbed, Module, Tensor
from .numerics import functional as F

# NTU 25-joint layout, zero-based: (joints of the part, reference joint)
NTU_PARTS = (
    ((4, 5, 6, 7, 21, 22), 7),        # left arm, left hand
    ((8, 9, 10, 11, 23, 24), 11),     # right arm, right hand
    ((12, 13, 14, 15), 13),           # left leg, left knee
    ((16, 17, 18, 19), 17),           # right leg, right knee
    ((0, 1, 2, 3, 20), 1),            # torso, middle of spine
)
PRESETS = ("fine5", "coarse1", "none")


@dataclass(frozen=True)
class BodyPartition:
    """Joint type -> part id, and part id -> reference joint type."""

    part_of: tuple
    refs: tuple

    def __post_init__(self):
        parts = set(self.part_of)
        if parts != set(range(len(self.refs))):
            raise ConfigurationError(f"part ids {sorted(parts)} do not match {len(self.refs)} reference joints")
        for p, r in enumerate(self.refs):
            if not 0 <= r < len(self.part_of) or self.part_of[r] != p:
                raise ConfigurationError(f"reference joint {r} does not belong to part {p}")

    @property
    def num_joints(self) -> int:
        return len(self.part_of)

    @classmethod
    def from_parts(cls, parts: Sequence[Sequence[int]], refs: Sequence[int]) -> "BodyPartition":
        J = sum(len(p) for p in parts)
        part_of = [-1] * J
        for pid, members in enumerate(parts):
            for k in members:
                if not 0 <= k < J or part_of[k] != -1:
                    raise ConfigurationError(f"joint {k} is out of range or assigned twice")
                part_of[k] = pid
        return cls(tuple(part_of), tuple(int(r) for r in refs))

    def ref_type(self) -> np.ndarray:
        """Reference joint type for every joint type."""
        return np.asarray(self.refs)[np.asarray(self.part_of)]


def ntu_fine5() -> BodyPartition:
    return BodyPartition.from_parts([p for p, _ in NTU_PARTS], [r for _, r in NTU_PARTS])


def coarse(num_joints: int, ref: int = 1) -> BodyPartition:
    return BodyPartition(tuple([0] * num_joints), (ref,))


def partition_preset(name: str, num_joints: int, parts=None, refs=None) -> Optional[BodyPartition]:
    """``fine5`` (five parts), ``coarse1`` (one part around the spine) or ``none``.

    Explicit ``parts``/``refs`` override the preset, for skeletons other than NTU's.
    """
    if name == "none":
        return None
    if parts is not None:
        bp = BodyPartition.from_parts(parts, refs)
    elif name == "fine5":
        if num_joints != 25:
            raise ConfigurationError("fine5 is defined for the 25-joint skeleton; give explicit parts")
        bp = ntu_fine5()
    elif name == "coarse1":
        bp = coarse(num_joints, ref=1 if num_joints > 1 else 0)
    else:
        raise ConfigurationError(f"unknown partition preset {name!r}; choose from {PRESETS}")
    if bp.num_joints != num_joints:
        raise ConfigurationError(f"partition covers {bp.num_joints} joints, skeleton has {num_joints}")
    return bp


def compute_velocity(coords: np.ndarray) -> np.ndarray:
    """Frame difference along the time axis (third from last); the first frame gets zero."""
    c = np.asarray(coords)
    v = np.zeros_like(c)
    v[..., 1:, :, :] = c[..., 1:, :, :] - c[..., :-1, :, :]
    return v


def reference_slots(partition: BodyPartition, joint_types=None) -> np.ndarray:
    """For each joint slot, the slot holding its part's reference joint."""
    J = partition.num_joints
    types = np.arange(J) if joint_types is None else np.asarray(joint_types)
    slot_of_type = np.empty(J, dtype=np.int64)
    slot_of_type[types] = np.arange(J)
    return slot_of_type[partition.ref_type()[types]]


def compute_fine_grained(x: np.ndarray, partition: BodyPartition, joint_types=None) -> np.ndarray:
    """Offset of every joint from its part's reference joint, frame by frame."""
    x = np.asarray(x)
    return x - x[..., reference_slots(partition, joint_types), :]


class DREmbedder(Module):
    """Four non-shared two-layer embeddings whose outputs are summed."""

    BRANCHES = ("position", "velocity", "movement", "movement_velocity")

    def __init__(self, c1: int = 64, use_velocity: bool = True, use_movement: bool = True,
                 rng=None, dtype=np.float32):
        self.c1 = c1
        self.position = MLPEmbed(3, c1, c1, rng=rng, dtype=dtype)
        self.velocity = MLPEmbed(3, c1, c1, rng=rng, dtype=dtype) if use_velocity else None
        self.movement = MLPEmbed(3, c1, c1, rng=rng, dtype=dtype) if use_movement else None
        self.movement_velocity = (MLPEmbed(3, c1, c1, rng=rng, dtype=dtype)
                                  if use_velocity and use_movement else None)

    def active(self) -> list:
        return [b for b in self.BRANCHES if getattr(self, b) is not None]


def dynamics_features(coords: np.ndarray, partition: Optional[BodyPartition], joint_types=None) -> dict:
    p = np.asarray(coords)
    v = compute_velocity(p)
    feats = {"position": p, "velocity": v}
    if partition is not None:
        feats["movement"] = compute_fine_grained(p, partition, joint_types)
        feats["movement_velocity"] = compute_fine_grained(v, partition, joint_types)
    return feats


def dr_forward(coords: np.ndarray, embedder: DREmbedder, partition: Optional[BodyPartition],
               joint_types=None) -> Tensor:
    """``[..., T, J, 3]`` coordinates -> ``[..., T, J, C1]`` summed branch embeddings."""
    feats = dynamics_features(coords, partition, joint_types)
    dtype = embedder.position.fc1.weight.dtype
    out = None
    for name in embedder.active():
        if name not in feats:
            raise ConfigurationError(f"branch {name!r} needs a body partition")
        e = getattr(embedder, name)(Tensor(feats[name].astype(dtype, copy=False)))
        out = e if out is None else F.add(out, e)
    return out
