"""Training loop, step schedule, evaluation protocol and run comparison."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, TrainingError
from .model import (MSSGN, fuse_scores, load_checkpoint, multi_scale_loss, predict, read_checkpoint,
                    save_checkpoint, softmax_scores)
from .numerics import Adam, no_grad
from .preprocess import (DETERMINISTIC_FIRST, RANDOM, AugmentConfig, clip_indices, group_by_source,
                         make_views, sample_rng, translate_to_first_frame)

log = logging.getLogger(__name__)

EVAL_STREAM = 1_000_003
METRIC_FIELDS = ("epoch", "train_loss", "train_acc", "val_acc", "lr", "wall_seconds")


@dataclass
class TrainConfig:
    epochs: int = 120
    lr: float = 1e-3
    decay_epochs: tuple = (60, 90, 110)
    decay_divisor: float = 10.0
    weight_decay: float = 1e-4
    batch_size: int = 64
    label_smoothing: float = 0.1
    seed: int = 0
    rotation_deg: float = 17.0
    augment: bool = True
    val_every: int = 1
    eval_views: int = 5
    deterministic: bool = True
    checkpoint_every: int = 0
    stop_at_train_acc: Optional[float] = None

    def __post_init__(self):
        self.decay_epochs = tuple(int(e) for e in self.decay_epochs)
        if any(b <= a for a, b in zip(self.decay_epochs, self.decay_epochs[1:])):
            raise ConfigurationError(f"decay epochs must be strictly increasing, got {self.decay_epochs}")
        if self.decay_epochs and self.decay_epochs[-1] >= self.epochs:
            raise ConfigurationError("decay epochs must precede the final epoch")
        if self.batch_size < 2:
            raise ConfigurationError("batch size must be at least 2 for batch normalization")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decay_epochs"] = list(self.decay_epochs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigurationError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class MetricsRow:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: Optional[float]
    lr: float
    wall_seconds: Optional[float]

    def csv_fields(self) -> list:
        def f(x):
            return "" if x is None else repr(float(x))
        return [str(self.epoch), f(self.train_loss), f(self.train_acc), f(self.val_acc), f(self.lr),
                f(self.wall_seconds)]


@dataclass
class EvalResult:
    accuracy: float
    per_class: dict          # class id -> accuracy
    support: dict            # class id -> number of test sources
    scores: np.ndarray       # [sources, K] fused probabilities
    labels: np.ndarray
    predictions: np.ndarray
    sources: list


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Piecewise-constant step decay: divided by ``decay_divisor`` at each decay epoch reached."""
    if not 1 <= epoch <= cfg.epochs:
        raise ConfigurationError(f"epoch {epoch} outside [1, {cfg.epochs}]")
    k = sum(1 for e in cfg.decay_epochs if epoch >= e)
    return cfg.lr / cfg.decay_divisor ** k


def _batches(order: np.ndarray, batch_size: int) -> list:
    out = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(out) > 1 and len(out[-1]) == 1:
        last = out.pop()
        out[-1] = np.concatenate([out[-1], last])
    return out


def prepare(samples, translation_joint: int = 1) -> list:
    return [translate_to_first_frame(s, translation_joint) for s in samples]


class Trainer:
    """Single-writer training harness over pre-translated single-person samples."""

    def __init__(self, model: MSSGN, cfg: TrainConfig, train_samples: Sequence, val_samples: Sequence = (),
                 out_dir=None, optimizer: Optional[Adam] = None):
        if not train_samples:
            raise ConfigurationError("no training samples")
        self.model = model
        self.cfg = cfg
        self.train_samples = list(train_samples)
        self.val_samples = list(val_samples)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.optimizer = optimizer or Adam(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
        self.metrics: list = []
        self.augment = AugmentConfig(cfg.rotation_deg, cfg.augment)
        self.dtype = model.cfg.dtype

    def _views(self, idx: Sequence[int], epoch: int) -> dict:
        per = [make_views(self.train_samples[i].coords, self.model.scales, RANDOM,
                          sample_rng(self.cfg.seed, epoch, int(i)), self.augment) for i in idx]
        return {s: np.stack([v[s] for v in per]).astype(self.dtype) for s in self.model.scales}

    def train_epoch(self, epoch: int) -> MetricsRow:
        t0 = time.perf_counter()
        cfg = self.cfg
        self.model.train()
        self.optimizer.lr = lr_at(epoch, cfg)
        order = np.random.default_rng([cfg.seed & 0xFFFFFFFF, epoch]).permutation(len(self.train_samples))
        total_loss, correct, seen = 0.0, 0, 0
        for batch in _batches(order, cfg.batch_size):
            labels = np.array([self.train_samples[i].label for i in batch])
            logits = self.model(self._views(batch, epoch))
            loss = multi_scale_loss(logits, labels, cfg.label_smoothing)
            value = float(loss.data)
            if not np.isfinite(value):
                ids = [self.train_samples[i].source or str(i) for i in batch]
                raise TrainingError(f"non-finite loss {value} at epoch {epoch}; batch samples: {ids}")
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step()
            scores = fuse_scores([softmax_scores(l) for l in logits.values()])
            correct += int((predict(scores) == labels).sum())
            total_loss += value * len(batch)
            seen += len(batch)
        val_acc = None
        if self.val_samples and cfg.val_every and epoch % cfg.val_every == 0:
            val_acc = evaluate(self.model, self.val_samples, n_views=1, seed=cfg.seed,
                               mode=DETERMINISTIC_FIRST).accuracy
        secs = None if cfg.deterministic else time.perf_counter() - t0
        return MetricsRow(epoch, total_loss / seen, correct / seen, val_acc, self.optimizer.lr, secs)

    def fit(self, start_epoch: int = 1, end_epoch: Optional[int] = None) -> list:
        end_epoch = self.cfg.epochs if end_epoch is None else end_epoch
        for epoch in range(start_epoch, end_epoch + 1):
            row = self.train_epoch(epoch)
            self.metrics.append(row)
            log.info("epoch %d loss %.4f acc %.3f lr %.1e", epoch, row.train_loss, row.train_acc, row.lr)
            if self.out_dir is not None:
                self.write_metrics()
                if self.cfg.checkpoint_every and epoch % self.cfg.checkpoint_every == 0:
                    self.save(self.out_dir / f"ckpt_epoch{epoch:04d}.npz", epoch)
            if self.cfg.stop_at_train_acc is not None and row.train_acc >= self.cfg.stop_at_train_acc:
                break
        if self.out_dir is not None:
            self.save(self.out_dir / "last.npz", self.metrics[-1].epoch if self.metrics else 0)
        return self.metrics

    def save(self, path, epoch: int):
        return save_checkpoint(path, self.model, self.optimizer, epoch,
                               metrics=[asdict(m) for m in self.metrics],
                               extra={"train": self.cfg.to_dict()})

    @classmethod
    def resume(cls, path, train_samples, val_samples=(), out_dir=None, cfg: Optional[TrainConfig] = None):
        """Rebuild a trainer from a checkpoint; returns ``(trainer, last_completed_epoch)``."""
        meta, _ = read_checkpoint(path)
        cfg = cfg or TrainConfig.from_dict(meta["extra"]["train"])
        model, opt, meta = load_checkpoint(
            path, lambda m: Adam(m.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay))
        tr = cls(model, cfg, train_samples, val_samples, out_dir, opt)
        tr.metrics = [MetricsRow(**m) for m in meta["metrics"]]
        return tr, int(meta["epoch"])

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for m in self.metrics:
            w.writerow(m.csv_fields())
        return buf.getvalue()

    def write_metrics(self) -> None:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "metrics.csv").write_text(self.metrics_csv())


def evaluate(model: MSSGN, samples: Sequence, n_views: int = 5, seed: int = 0, mode: str = RANDOM,
             scales: Optional[Sequence[int]] = None, batch_size: int = 64) -> EvalResult:
    """Multi-view, multi-scale test protocol.

    Every sample gets ``n_views`` clip samplings per scale; the softmax scores of
    all scale x view combinations are averaged, then bodies of the same source
    are averaged before the argmax.
    """
    if not samples:
        raise ConfigurationError("evaluation set is empty")
    scales = tuple(scales or model.scales)
    was_training = model.training
    model.eval()
    dt = model.cfg.dtype
    try:
        sample_scores = np.zeros((len(samples), model.cfg.num_classes))
        with no_grad():
            for s in scales:
                views, owners = [], []
                for i, seq in enumerate(samples):
                    rng = sample_rng(seed, EVAL_STREAM, i)
                    for _ in range(n_views):
                        views.append(seq.coords[clip_indices(seq.coords.shape[0], s, mode, rng)])
                        owners.append(i)
                views = np.stack(views).astype(dt)
                owners = np.array(owners)
                for a in range(0, len(views), batch_size):
                    p = softmax_scores(model.ss_forward(views[a:a + batch_size], s))
                    np.add.at(sample_scores, owners[a:a + batch_size], p)
        sample_scores /= n_views * len(scales)
    finally:
        model.train(was_training)

    groups = group_by_source(samples)
    sources = list(groups)
    fused = np.stack([fuse_scores([sample_scores[i] for i in groups[src]]) for src in sources])
    labels = np.array([samples[groups[src][0]].label for src in sources])
    preds = predict(fused)
    per_class, support = {}, {}
    for c in sorted(set(labels.tolist())):
        mask = labels == c
        support[c] = int(mask.sum())
        per_class[c] = float((preds[mask] == c).mean())
    return EvalResult(float((preds == labels).mean()), per_class, support, fused, labels, preds, sources)


def compare_runs(per_class_a: dict, per_class_b: dict) -> list:
    """``(class_id, acc_a - acc_b)`` rows sorted by descending gain."""
    if set(per_class_a) != set(per_class_b):
        raise ConfigurationError("runs cover different class sets")
    rows = [(c, per_class_a[c] - per_class_b[c]) for c in per_class_a]
    return sorted(rows, key=lambda r: (-r[1], r[0]))


def gains_csv(rows, class_names: Optional[dict] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class_id", "class_name", "gain"])
    for c, d in rows:
        w.writerow([c, (class_names or {}).get(c, ""), repr(float(d))])
    return buf.getvalue()


def per_class_csv(result: EvalResult, class_names: Optional[dict] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["class_id", "class_name", "accuracy"])
    for c, acc in result.per_class.items():
        w.writerow([c, (class_names or {}).get(c, ""), repr(float(acc))])
    return buf.getvalue()
