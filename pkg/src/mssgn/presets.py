"""Named model configurations used by the CLI, the verify command and the tests."""

from __future__ import annotations

from .model import ModelConfig

TINY_PARTS = [[0, 1], [2, 3, 4]]
TINY_REFS = [0, 3]


def ntu120(scales=(15, 20, 25), **kw) -> ModelConfig:
    return ModelConfig(num_joints=25, num_classes=120, scales=tuple(scales), **kw)


def tiny(precision: str = "float64", **kw) -> ModelConfig:
    """J=5, scales 3/4/5, K=3, a few channels per layer."""
    base = dict(num_joints=5, num_classes=3, scales=(3, 4, 5), c1=4, c2=5, gcn_dims=(6, 5, 6), fi_hidden=3,
                c4=7, partition="fine5", partition_parts=TINY_PARTS, partition_refs=TINY_REFS,
                precision=precision, seed=0)
    base.update(kw)
    return ModelConfig(**base)


def overfit(**kw) -> ModelConfig:
    """Narrow NTU-layout network for the synthetic four-class set."""
    base = dict(num_joints=25, num_classes=4, scales=(15, 20, 25), c1=16, c2=32, gcn_dims=(32, 64, 64),
                fi_hidden=16, c4=128, seed=0)
    base.update(kw)
    return ModelConfig(**base)


PRESETS = {"ntu120": ntu120, "tiny": tiny, "overfit": overfit}
