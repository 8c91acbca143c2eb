"""NTU skeleton parsing, the canonical line format, and protocol splits."""

from __future__ import annotations

import hashlib
import io
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, TextIO

import numpy as np

from .errors import DataError, ParseError, ProtocolError, SchemaVersionError

CANONICAL_VERSION = 1
CANONICAL_HEADER = f"#mssgn-canonical\t{CANONICAL_VERSION}"
NTU_JOINTS = 25
GHOST_ENERGY = 1e-6

NTU_JOINT_NAMES = (
    "base of spine", "middle of spine", "neck", "head",
    "left shoulder", "left elbow", "left wrist", "left hand",
    "right shoulder", "right elbow", "right wrist", "right hand",
    "left hip", "left knee", "left ankle", "left foot",
    "right hip", "right knee", "right ankle", "right foot",
    "spine", "tip of left hand", "left thumb", "tip of right hand", "right thumb",
)
MIDDLE_OF_SPINE = 1  # zero-based

_NAME_RE = re.compile(r"S(\d{3})C(\d{3})P(\d{3})R(\d{3})A(\d{3})")

# Training ids of the released NTU RGB+D protocols.
NTU60_TRAIN_SUBJECTS = (1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38)
NTU120_TRAIN_SUBJECTS = NTU60_TRAIN_SUBJECTS + (
    45, 46, 47, 49, 50, 52, 53, 54, 55, 56, 57, 58, 59, 70, 74, 78, 80, 81, 82, 83, 84, 85, 86,
    89, 91, 92, 93, 94, 95, 97, 98, 100, 103)
NTU_TRAIN_CAMERAS = (2, 3)
NTU120_TRAIN_SETUPS = tuple(range(2, 33, 2))

DEFAULT_ID_LISTS = {
    "cross-subject": {"train": NTU120_TRAIN_SUBJECTS},
    "cross-view": {"train": NTU_TRAIN_CAMERAS},
    "cross-setup": {"train": NTU120_TRAIN_SETUPS},
    "same-subject": {},
}
_PROTOCOL_KEY = {"cross-subject": "subject_id", "cross-view": "camera_id", "cross-setup": "setup_id"}


@dataclass
class SkeletonSequence:
    coords: np.ndarray  # [T, J, 3]
    label: int = -1
    subject_id: int = 0
    camera_id: int = 0
    setup_id: int = 0
    body_id: str = "0"
    source_path: str = ""
    dataset: str = "ntu"
    is_ghost: bool = False

    def __post_init__(self):
        self.coords = np.asarray(self.coords)
        if self.coords.ndim != 3 or self.coords.shape[2] != 3 or self.coords.shape[0] < 1:
            raise DataError(f"coords must have shape [T>=1, J, 3], got {self.coords.shape}")

    @property
    def frames(self) -> int:
        return self.coords.shape[0]

    @property
    def joints(self) -> int:
        return self.coords.shape[1]

    @property
    def source(self) -> str:
        return Path(self.source_path).stem if self.source_path else ""

    def same_as(self, other: "SkeletonSequence") -> bool:
        meta = ("label", "subject_id", "camera_id", "setup_id", "body_id", "dataset")
        return (all(getattr(self, k) == getattr(other, k) for k in meta)
                and self.source == other.source
                and self.coords.shape == other.coords.shape
                and np.array_equal(self.coords, other.coords))


@dataclass
class DatasetManifest:
    records: list
    splits: list
    dataset: str
    num_classes: int
    protocol: str

    def subset(self, split: str) -> list:
        return [r for r, s in zip(self.records, self.splits) if s == split]

    def counts(self) -> dict:
        out: dict = {}
        for s in self.splits:
            out[s] = out.get(s, 0) + 1
        return out

    def digest(self) -> str:
        rows = [[_record_key(r), s] for r, s in zip(self.records, self.splits)]
        blob = json.dumps({"dataset": self.dataset, "protocol": self.protocol,
                           "classes": self.num_classes, "rows": rows}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def decode_ntu_name(name: str) -> dict:
    """``S001C002P003R002A060`` -> setup 1, camera 2, subject 3, replication 2, label 59."""
    m = _NAME_RE.search(name)
    if not m:
        raise ParseError(f"file name {name!r} does not match SsssCcccPpppRrrrAaaa")
    s, c, p, r, a = (int(g) for g in m.groups())
    return {"setup_id": s, "camera_id": c, "subject_id": p, "replication": r, "label": a - 1}


def motion_energy(coords: np.ndarray) -> float:
    if coords.shape[0] < 2:
        return 0.0
    d = np.diff(coords, axis=0)
    return float((d * d).sum())


def is_ghost(coords: np.ndarray) -> bool:
    """All-zero bodies, and multi-frame bodies that never move, are tracking artifacts."""
    if not np.any(coords):
        return True
    return coords.shape[0] >= 2 and motion_energy(coords) < GHOST_ENERGY


def parse_ntu_skeleton(stream: TextIO, name: str = "", dataset: str = "ntu") -> list:
    """Parse one ``.skeleton`` text stream into one sequence per body id.

    Frames without a given body are dropped from that body's sequence.  Ghost
    bodies are returned with ``is_ghost=True``.
    """
    meta = decode_ntu_name(name) if name and _NAME_RE.search(name) else {}
    lines = stream.read().splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise ParseError("unexpected end of file", name or None, pos + 1)
        pos += 1
        return pos, lines[pos - 1].split()

    def as_int(fields, lineno):
        try:
            return int(fields[0])
        except (ValueError, IndexError):
            raise ParseError(f"expected an integer, got {' '.join(fields)!r}", name or None, lineno) from None

    lineno, fields = next_line()
    n_frames = as_int(fields, lineno)
    bodies: dict = {}
    for _ in range(n_frames):
        lineno, fields = next_line()
        n_bodies = as_int(fields, lineno)
        for _ in range(n_bodies):
            lineno, fields = next_line()
            if not fields:
                raise ParseError("missing body metadata", name or None, lineno)
            body_id = fields[0]
            lineno, fields = next_line()
            n_joints = as_int(fields, lineno)
            if n_joints != NTU_JOINTS:
                raise ParseError(f"joint count {n_joints} != {NTU_JOINTS}", name or None, lineno)
            frame = np.empty((n_joints, 3), dtype=np.float32)
            for j in range(n_joints):
                lineno, fields = next_line()
                if len(fields) < 3:
                    raise ParseError("joint line has fewer than 3 fields", name or None, lineno)
                try:
                    frame[j] = [float(v) for v in fields[:3]]
                except ValueError:
                    raise ParseError(f"non-numeric joint field in {' '.join(fields)!r}", name or None, lineno) from None
                if not np.all(np.isfinite(frame[j])):
                    raise ParseError("non-finite joint coordinate", name or None, lineno)
            bodies.setdefault(body_id, []).append(frame)

    out = []
    for body_id, frames in bodies.items():
        coords = np.stack(frames)
        out.append(SkeletonSequence(
            coords=coords, label=meta.get("label", -1), subject_id=meta.get("subject_id", 0),
            camera_id=meta.get("camera_id", 0), setup_id=meta.get("setup_id", 0),
            body_id=body_id, source_path=name, dataset=dataset, is_ghost=is_ghost(coords)))
    return out


def parse_ntu_file(path) -> list:
    path = Path(path)
    with open(path, "r") as fh:
        return parse_ntu_skeleton(fh, name=path.name)


# ---- canonical format -------------------------------------------------------------

def _fmt(x: np.float32) -> str:
    return np.format_float_positional(np.float32(x), unique=True, trim="-")


def write_canonical(seq: SkeletonSequence) -> str:
    """One record line: version, dataset, label, subject, camera, setup, body, T, J, coords[, source]."""
    T, J, _ = seq.coords.shape
    coords = " ".join(_fmt(v) for v in np.asarray(seq.coords, dtype=np.float32).reshape(-1))
    fields = [str(CANONICAL_VERSION), seq.dataset, str(seq.label), str(seq.subject_id),
              str(seq.camera_id), str(seq.setup_id), str(seq.body_id), str(T), str(J), coords,
              seq.source]
    return "\t".join(fields)


def dump_canonical(seqs: Iterable[SkeletonSequence], stream: TextIO) -> int:
    stream.write(CANONICAL_HEADER + "\n")
    n = 0
    for s in seqs:
        stream.write(write_canonical(s) + "\n")
        n += 1
    return n


def load_canonical(stream: TextIO) -> list:
    out = []
    first = True
    idx = 0
    for raw in stream:
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        if first and line.startswith("#"):
            first = False
            parts = line.split("\t")
            if parts[0] != "#mssgn-canonical" or len(parts) < 2 or parts[1] != str(CANONICAL_VERSION):
                raise SchemaVersionError(f"unsupported canonical header {line!r}; expected version {CANONICAL_VERSION}")
            continue
        first = False
        f = line.split("\t")
        if len(f) < 10:
            raise DataError(f"record {idx}: expected at least 10 fields, got {len(f)}")
        if f[0] != str(CANONICAL_VERSION):
            raise SchemaVersionError(f"record {idx}: schema version {f[0]!r}, expected {CANONICAL_VERSION}")
        try:
            T, J = int(f[7]), int(f[8])
            values = np.array(f[9].split(), dtype=np.float32)
        except ValueError as exc:
            raise DataError(f"record {idx}: {exc}") from None
        if values.size != 3 * T * J:
            raise DataError(f"record {idx}: {values.size} coordinates, expected 3*{T}*{J}={3 * T * J}")
        source = f[10] if len(f) > 10 else ""
        coords = values.reshape(T, J, 3)
        out.append(SkeletonSequence(
            coords=coords, dataset=f[1], label=int(f[2]), subject_id=int(f[3]), camera_id=int(f[4]),
            setup_id=int(f[5]), body_id=f[6], source_path=source, is_ghost=is_ghost(coords)))
        idx += 1
    return out


def load_canonical_file(path) -> list:
    with open(path, "r") as fh:
        return load_canonical(fh)


def save_canonical_file(seqs, path) -> int:
    with open(path, "w") as fh:
        return dump_canonical(seqs, fh)


# ---- protocol splits ----------------------------------------------------------------

def _record_key(r: SkeletonSequence) -> str:
    return f"{r.source}|{r.body_id}|{r.label}|{r.subject_id}|{r.camera_id}|{r.setup_id}"


def split_protocol(records, protocol: str, id_lists: Optional[dict] = None, num_classes: Optional[int] = None,
                   val_fraction: float = 0.0, seed: int = 0, dataset: str = "") -> DatasetManifest:
    """Assign every record to train/val/test.

    ``id_lists`` holds ``train`` ids (and optionally ``test`` ids, in which case
    an id in neither list is an error).  ``same-subject`` splits each class in
    half with a seeded shuffle.  All bodies of one source file land on the same
    side.
    """
    records = list(records)
    if protocol not in DEFAULT_ID_LISTS:
        raise ProtocolError(f"unknown protocol {protocol!r}; choose from {sorted(DEFAULT_ID_LISTS)}")
    ids = dict(DEFAULT_ID_LISTS[protocol]) if id_lists is None else dict(id_lists)
    splits = []
    if protocol == "same-subject":
        by_class: dict = {}
        for r in records:
            by_class.setdefault(r.label, set()).add(r.source or _record_key(r))
        train_sources = set()
        rng = np.random.default_rng(seed)
        for label in sorted(by_class):
            srcs = sorted(by_class[label])
            order = rng.permutation(len(srcs))
            train_sources.update(srcs[i] for i in order[: (len(srcs) + 1) // 2])
        splits = ["train" if (r.source or _record_key(r)) in train_sources else "test" for r in records]
    else:
        key = _PROTOCOL_KEY[protocol]
        train = set(int(i) for i in ids.get("train", ()))
        test = set(int(i) for i in ids["test"]) if "test" in ids else None
        for i, r in enumerate(records):
            v = getattr(r, key)
            if v in train:
                splits.append("train")
            elif test is None or v in test:
                splits.append("test")
            else:
                raise ProtocolError(f"record {i} ({_record_key(r)}): {key}={v} is in neither the train nor test list")

    if val_fraction > 0:
        train_sources = sorted({r.source or _record_key(r) for r, s in zip(records, splits) if s == "train"})
        n_val = int(round(val_fraction * len(train_sources)))
        rng = np.random.default_rng(seed)
        chosen = {train_sources[i] for i in rng.permutation(len(train_sources))[:n_val]}
        splits = ["val" if s == "train" and (r.source or _record_key(r)) in chosen else s
                  for r, s in zip(records, splits)]

    if num_classes is None:
        num_classes = max((r.label for r in records), default=-1) + 1
    ds = dataset or (records[0].dataset if records else "")
    return DatasetManifest(records=records, splits=splits, dataset=ds, num_classes=num_classes, protocol=protocol)


def read_ntu_dir(directory) -> tuple:
    """Parse every ``.skeleton`` file under ``directory`` in sorted order.

    Returns ``(kept, ghosts, n_files)``.
    """
    paths = sorted(Path(directory).glob("*.skeleton"))
    kept, ghosts = [], []
    for p in paths:
        for s in parse_ntu_file(p):
            (ghosts if s.is_ghost else kept).append(s)
    return kept, ghosts, len(paths)


def format_ntu_skeleton(bodies_per_frame: list) -> str:
    """Render frames (each a list of ``(body_id, coords[25, 3])``) in the NTU text layout.

    Used to build fixtures; the non-coordinate fields are zero-filled.
    """
    buf = io.StringIO()
    buf.write(f"{len(bodies_per_frame)}\n")
    for bodies in bodies_per_frame:
        buf.write(f"{len(bodies)}\n")
        for body_id, coords in bodies:
            buf.write(f"{body_id} 0 1 1 1 1 0 0.1 0.1 2\n")
            buf.write(f"{len(coords)}\n")
            for x, y, z in coords:
                buf.write(f"{x:.7g} {y:.7g} {z:.7g} 0 0 0 0 0 0 0 0 2\n")
    return buf.getvalue()
