"""Run configuration: a TOML tree plus ``--set key=value`` overrides, resolved once per command."""

from __future__ import annotations

import copy
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import presets
from .errors import ConfigurationError
from .model import ModelConfig
from .trainer import TrainConfig

ABLATION_FLAGS = {
    "no_velocity": ("use_velocity", False),
    "no_movement": ("partition", "none"),
    "no_joint_type": ("passing_uses_joint_type", False),
    "no_graph_joint_type": ("graph_uses_joint_type", False),
    "no_frame_index": ("frame_index", False),
    "no_tconv": ("tconv_kernel", 1),
    "separate_trunks": ("share_trunk", False),
}

PREPROCESS_KEYS = {
    "scales": ("model", "scales"),
    "rotation_deg": ("train", "rotation_deg"),
    "translation_joint": ("data", "translation_joint"),
    "seed": (None, "seed"),
}
CROSS_VIEW_ROTATION_DEG = 30.0


@dataclass
class DataConfig:
    source: str = "synthetic"          # "synthetic" or a canonical file path
    protocol: str = "cross-subject"
    train_ids: Optional[list] = None
    test_ids: Optional[list] = None
    val_fraction: float = 0.0
    translation_joint: int = 1
    n_train: int = 80
    n_test: int = 40
    synthetic_seed: int = 0


@dataclass
class RunConfig:
    seed: int = 0
    preset: str = "ntu120"
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablation: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "preset": self.preset, "data": asdict(self.data),
                "model": self.model.to_dict(), "train": self.train.to_dict(), "ablation": dict(self.ablation)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def parse_value(text: str):
    """TOML scalar/array syntax, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(tree: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigurationError(f"--set expects key=value, got {assignment!r}")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = tree
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"--set {key}: {p} is not a section")
    node[parts[-1]] = parse_value(value.strip())


def _known(cls, d: dict, section: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigurationError(f"unknown keys in [{section}]: {sorted(unknown)}")
    return d


def _lift_preprocess(tree: dict) -> None:
    """Move ``[preprocess]`` keys to the sections that own them."""
    pre = tree.pop("preprocess", {})
    bad = set(pre) - set(PREPROCESS_KEYS)
    if bad:
        raise ConfigurationError(f"unknown keys in [preprocess]: {sorted(bad)}")
    for key, value in pre.items():
        section, name = PREPROCESS_KEYS[key]
        node = tree if section is None else tree.setdefault(section, {})
        if name in node and node[name] != value:
            raise ConfigurationError(f"preprocess.{key} conflicts with {section or 'top-level'}.{name}")
        node[name] = value


def resolve(tree: dict) -> RunConfig:
    tree = copy.deepcopy(tree)
    top = set(tree) - {"seed", "preset", "data", "model", "train", "ablation", "preprocess"}
    if top:
        raise ConfigurationError(f"unknown top-level keys: {sorted(top)}")
    _lift_preprocess(tree)
    seed = int(tree.get("seed", 0))
    preset = tree.get("preset", "ntu120")
    if preset not in presets.PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(presets.PRESETS)}")

    ablation = tree.get("ablation", {})
    bad = set(ablation) - set(ABLATION_FLAGS)
    if bad:
        raise ConfigurationError(f"unknown ablation flags: {sorted(bad)}")
    model_over = dict(tree.get("model", {}))
    for flag, on in ablation.items():
        if on:
            k, v = ABLATION_FLAGS[flag]
            model_over.setdefault(k, v)
    model_over.setdefault("seed", seed)
    base = presets.PRESETS[preset]().to_dict()
    base.update(_known(ModelConfig, model_over, "model"))
    model = ModelConfig.from_dict(base)

    train_d = dict(tree.get("train", {}))
    train_d.setdefault("seed", seed)
    if tree.get("data", {}).get("protocol") == "cross-view":
        train_d.setdefault("rotation_deg", CROSS_VIEW_ROTATION_DEG)
    train = TrainConfig.from_dict(_known(TrainConfig, train_d, "train"))
    data = DataConfig(**_known(DataConfig, tree.get("data", {}), "data"))
    return RunConfig(seed=seed, preset=preset, data=data, model=model, train=train, ablation=dict(ablation))


def load_tree(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def build(path=None, overrides=(), seed: Optional[int] = None, deterministic: Optional[bool] = None) -> RunConfig:
    tree = load_tree(path) if path else {}
    for a in overrides:
        apply_override(tree, a)
    if seed is not None:
        tree["seed"] = seed
        for section in ("model", "train", "preprocess"):
            tree.get(section, {}).pop("seed", None)
    if deterministic is not None:
        tree.setdefault("train", {})["deterministic"] = deterministic
    return resolve(tree)


def from_json(text: str) -> RunConfig:
    d = json.loads(text)
    return resolve(d)


def write(cfg: RunConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / "run_config.json"
    p.write_text(cfg.to_json() + "\n")
    return p
