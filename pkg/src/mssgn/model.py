"""SS-SGN / MS-SGN assembly, losses, score fusion and checkpoints."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dynamics import DREmbedder, dr_forward, partition_preset
from .errors import ConfigurationError, SchemaVersionError
from .frame_temporal import FrameLevel, smp_probe
from .joint_graph import JointLevel
from .numerics import Module, Tensor, cross_entropy_label_smoothed, no_grad
from .numerics import functional as F

CHECKPOINT_VERSION = 1
_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass
class ModelConfig:
    num_joints: int = 25
    num_classes: int = 120
    scales: tuple = (15, 20, 25)
    c1: int = 64
    c2: int = 256
    gcn_dims: tuple = (128, 256, 256)
    fi_hidden: int = 64
    c4: int = 512
    tconv_kernel: int = 3
    frame_index: bool = True
    use_velocity: bool = True
    partition: str = "fine5"
    partition_parts: Optional[list] = None
    partition_refs: Optional[list] = None
    graph_uses_joint_type: bool = True
    passing_uses_joint_type: bool = True
    share_trunk: bool = True
    precision: str = "float32"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        self.scales = tuple(int(s) for s in self.scales)
        self.gcn_dims = tuple(int(d) for d in self.gcn_dims)
        if not self.scales or len(set(self.scales)) != len(self.scales):
            raise ConfigurationError(f"scales must be non-empty and distinct, got {self.scales}")
        if self.precision not in _DTYPES:
            raise ConfigurationError(f"precision must be one of {sorted(_DTYPES)}")
        if self.tconv_kernel % 2 == 0:
            raise ConfigurationError(f"temporal kernel must be odd, got {self.tconv_kernel}")

    @property
    def c3(self) -> int:
        return self.gcn_dims[-1]

    @property
    def dtype(self):
        return _DTYPES[self.precision]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scales"] = list(self.scales)
        d["gcn_dims"] = list(self.gcn_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


class Trunk(Module):
    """Dynamics representation followed by the joint-level module."""

    def __init__(self, cfg: ModelConfig, rng):
        dt = cfg.dtype
        self.partition = partition_preset(cfg.partition, cfg.num_joints, cfg.partition_parts, cfg.partition_refs)
        self.dr = DREmbedder(cfg.c1, use_velocity=cfg.use_velocity, use_movement=self.partition is not None,
                             rng=rng, dtype=dt)
        self.jl = JointLevel(cfg.num_joints, cfg.c1, cfg.c2, cfg.gcn_dims,
                             graph_uses_joint_type=cfg.graph_uses_joint_type,
                             passing_uses_joint_type=cfg.passing_uses_joint_type,
                             rng=rng, dtype=dt, bn_momentum=cfg.bn_momentum, bn_eps=cfg.bn_eps)

    def forward(self, coords: np.ndarray, joint_types=None):
        z = dr_forward(coords, self.dr, self.partition, joint_types)
        return self.jl(z, joint_types)


class MSSGN(Module):
    """Shared (or per-scale) trunk with one frame-level head per temporal scale."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        if cfg.share_trunk:
            self.trunk = Trunk(cfg, rng)
            self.trunks = None
        else:
            self.trunk = None
            self.trunks = {str(s): Trunk(cfg, rng) for s in cfg.scales}
        self.heads = {
            str(s): FrameLevel(s, cfg.c3, cfg.c4, cfg.num_classes, cfg.tconv_kernel, cfg.frame_index,
                               cfg.fi_hidden, rng=rng, dtype=cfg.dtype, bn_momentum=cfg.bn_momentum,
                               bn_eps=cfg.bn_eps)
            for s in cfg.scales
        }

    @property
    def scales(self) -> tuple:
        return self.cfg.scales

    def trunk_for(self, scale: int) -> Trunk:
        return self.trunk if self.trunk is not None else self.trunks[str(scale)]

    def features(self, coords: np.ndarray, scale: int, joint_types=None):
        return self.trunk_for(scale)(np.asarray(coords), joint_types)

    def ss_forward(self, coords: np.ndarray, scale: Optional[int] = None, joint_types=None) -> Tensor:
        """``[N, T, J, 3]`` at one configured scale -> ``[N, K]`` logits."""
        coords = np.asarray(coords)
        scale = coords.shape[-3] if scale is None else scale
        if scale not in self.cfg.scales:
            raise ConfigurationError(f"no frame-level head for {scale} frames; scales are {self.cfg.scales}")
        if coords.shape[-3] != scale:
            raise ConfigurationError(f"sample has {coords.shape[-3]} frames, head expects {scale}")
        h, _ = self.features(coords, scale, joint_types)
        return self.heads[str(scale)](h)

    def forward(self, views: dict, joint_types=None) -> dict:
        """Per-scale views ``{T: [N, T, J, 3]}`` -> per-scale logits ``{T: [N, K]}``."""
        return {s: self.ss_forward(views[s], s, joint_types) for s in self.cfg.scales if s in views}

    def smp_counts(self, coords: np.ndarray, scale: int, joint_types=None, top: int = 5):
        with no_grad():
            was = self.training
            self.eval()
            try:
                h, _ = self.features(np.asarray(coords)[None], scale, joint_types)
                return smp_probe(h, self.heads[str(scale)].frame_index, top=top)
            finally:
                self.train(was)

    def graphs(self, coords: np.ndarray, scale: int, joint_types=None) -> np.ndarray:
        was = self.training
        self.eval()
        try:
            with no_grad():
                _, G = self.features(np.asarray(coords)[None], scale, joint_types)
        finally:
            self.train(was)
        return G.data[0]


def ms_forward(model: MSSGN, views: dict, joint_types=None) -> dict:
    return model(views, joint_types)


def multi_scale_loss(logits: dict, labels, epsilon_ls: float = 0.1) -> Tensor:
    """Sum over scales of label-smoothed cross entropy."""
    total = None
    for s in sorted(logits):
        l = cross_entropy_label_smoothed(logits[s], labels, epsilon_ls)
        total = l if total is None else F.add(total, l)
    return total


def softmax_scores(logits) -> np.ndarray:
    x = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def fuse_scores(scores: Sequence) -> np.ndarray:
    """Arithmetic mean of probability vectors."""
    arrs = [np.asarray(s, dtype=np.float64) for s in scores]
    if not arrs:
        raise ValueError("nothing to fuse")
    if any(a.shape != arrs[0].shape for a in arrs):
        raise ValueError("score vectors differ in length")
    return np.mean(arrs, axis=0)


def predict(scores) -> np.ndarray:
    """Argmax over the last axis; ties go to the lowest class index."""
    return np.argmax(np.asarray(scores), axis=-1)


# ---- parameter accounting ------------------------------------------------------------------

def count_parameters(model: Module) -> int:
    return model.num_parameters()


def parameter_breakdown(model: MSSGN) -> dict:
    """Counts per top-level component (``trunk.dr``, ``trunk.jl``, ``heads.20`` ...)."""
    out: dict = {}
    for name, p in model.named_parameters():
        parts = name.split(".")
        key = ".".join(parts[:2])
        out[key] = out.get(key, 0) + p.size
    return out


def parameter_manifest(model: Module) -> str:
    return "".join(f"{n}\t{'x'.join(map(str, p.shape))}\t{p.size}\n" for n, p in model.named_parameters())


# ---- checkpoints ---------------------------------------------------------------------------

def _digest(arrays: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(arrays):
        a = np.ascontiguousarray(arrays[k])
        h.update(k.encode())
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def save_checkpoint(path, model: MSSGN, optimizer=None, epoch: int = 0, metrics=None, extra: Optional[dict] = None):
    """Write a versioned ``.npz`` container plus a ``.manifest.txt`` listing parameter shapes."""
    path = Path(path)
    arrays = {f"model/{k}": v for k, v in model.state_dict().items()}
    if optimizer is not None:
        arrays.update({f"optim/{k}": v for k, v in optimizer.state_arrays().items()})
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "epoch": int(epoch),
        "metrics": metrics or [],
        "extra": extra or {},
        "digest": _digest(arrays),
        "order": list(arrays),
    }
    with open(path, "wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
    path.with_name(path.name + ".manifest.txt").write_text(parameter_manifest(model))
    return path


def read_checkpoint(path) -> tuple:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    if meta.get("version") != CHECKPOINT_VERSION:
        raise SchemaVersionError(f"checkpoint version {meta.get('version')} != {CHECKPOINT_VERSION}")
    if _digest(arrays) != meta["digest"]:
        raise SchemaVersionError(f"checkpoint {path} failed its integrity check")
    return meta, arrays


def load_checkpoint(path, optimizer_factory=None) -> tuple:
    """Rebuild the model (and optionally the optimizer) stored at ``path``.

    Returns ``(model, optimizer_or_None, meta)``.
    """
    meta, arrays = read_checkpoint(path)
    model = MSSGN(ModelConfig.from_dict(meta["config"]))
    model.load_state_dict({k[len("model/"):]: v for k, v in arrays.items() if k.startswith("model/")})
    opt = None
    if optimizer_factory is not None:
        opt = optimizer_factory(model)
        optim = {k[len("optim/"):]: v for k, v in arrays.items() if k.startswith("optim/")}
        if optim:
            opt.load_state_arrays(optim)
    return model, opt, meta
