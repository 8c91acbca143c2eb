"""``mssgn`` command line: convert, train, eval, resume, inspect, verify.

Exit codes: 0 success, 1 verification failure, 2 usage or configuration error,
3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as runconfig
from . import synthetic
from .errors import ConfigurationError, DataError, TrainingError
from .frame_temporal import probe_summary
from .model import MSSGN, count_parameters, load_checkpoint, parameter_breakdown, read_checkpoint
from .preprocess import DETERMINISTIC_FIRST, clip_indices, split_multi_person
from .skeleton_io import load_canonical_file, read_ntu_dir, save_canonical_file, split_protocol
from .trainer import Trainer, evaluate, per_class_csv, prepare

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3

log = logging.getLogger("mssgn")


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# ---- data ----------------------------------------------------------------------------------

def load_data(cfg: runconfig.RunConfig) -> tuple:
    """``(train, val, test, class_names)`` as translated single-body samples."""
    d = cfg.data
    if d.source == "synthetic":
        train, test = synthetic.make_dataset(d.n_train, d.n_test, d.synthetic_seed)
        records = train + test
        ids = {"train": d.train_ids or list(range(1, 9))}
        names = dict(enumerate(synthetic.CLASS_NAMES))
    else:
        records = split_multi_person(load_canonical_file(d.source))
        ids = None
        if d.train_ids is not None:
            ids = {"train": d.train_ids}
            if d.test_ids is not None:
                ids["test"] = d.test_ids
        names = {}
    manifest = split_protocol(records, d.protocol, id_lists=ids, num_classes=cfg.model.num_classes,
                              val_fraction=d.val_fraction, seed=cfg.seed)
    for r in manifest.records:
        if r.joints != cfg.model.num_joints:
            raise DataError(f"{r.source}: {r.joints} joints, model expects {cfg.model.num_joints}")
        if not 0 <= r.label < cfg.model.num_classes:
            raise DataError(f"{r.source}: label {r.label} outside [0, {cfg.model.num_classes})")
    parts = [prepare(manifest.subset(s), d.translation_joint) for s in ("train", "val", "test")]
    return (*parts, names)


def _config_for_checkpoint(args, ckpt: Path) -> runconfig.RunConfig:
    if args.config:
        return runconfig.build(args.config, args.set, args.seed, args.deterministic)
    sidecar = ckpt.parent / "run_config.json"
    if sidecar.exists():
        tree = json.loads(sidecar.read_text())
        for a in args.set:
            runconfig.apply_override(tree, a)
        return runconfig.resolve(tree)
    meta, _ = read_checkpoint(ckpt)
    return runconfig.build(None, [f"model.{k}={json.dumps(v)}" for k, v in meta["config"].items()
                                  if v is not None] + list(args.set), args.seed, args.deterministic)


def _checkpoint(args) -> Path:
    if not args.checkpoint:
        raise ConfigurationError("--checkpoint is required")
    p = Path(args.checkpoint)
    if not p.exists():
        raise ConfigurationError(f"checkpoint not found: {p}")
    return p


# ---- commands ------------------------------------------------------------------------------

def cmd_convert(args) -> int:
    kept, ghosts, n_files = read_ntu_dir(args.input)
    n = save_canonical_file(kept, args.output)
    _emit({"files": n_files, "sequences": len({s.source for s in kept}), "bodies": n,
           "ghosts_dropped": len(ghosts), "output": str(args.output)})
    return EXIT_OK


def _report(result, model, epochs=None) -> dict:
    out = {"accuracy": result.accuracy, "num_sources": len(result.sources),
           "per_class": {str(k): v for k, v in result.per_class.items()},
           "parameters": count_parameters(model)}
    if epochs is not None:
        out["epochs"] = epochs
    return out


def _finish(trainer, cfg, test, names, out_dir: Path) -> int:
    report = {"epochs": trainer.metrics[-1].epoch if trainer.metrics else 0,
              "final_train_acc": trainer.metrics[-1].train_acc if trainer.metrics else None}
    if test:
        res = evaluate(trainer.model, test, n_views=cfg.train.eval_views, seed=cfg.seed)
        report.update(_report(res, trainer.model))
        (out_dir / "per_class.csv").write_text(per_class_csv(res, names))
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _emit(report)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = runconfig.build(args.config, args.set, args.seed, args.deterministic)
    out = Path(args.out_dir)
    runconfig.write(cfg, out)
    train, val, test, names = load_data(cfg)
    trainer = Trainer(MSSGN(cfg.model), cfg.train, train, val, out_dir=out)
    trainer.fit()
    return _finish(trainer, cfg, test, names, out)


def cmd_resume(args) -> int:
    ckpt = _checkpoint(args)
    cfg = _config_for_checkpoint(args, ckpt)
    out = Path(args.out_dir) if args.out_dir else ckpt.parent
    runconfig.write(cfg, out)
    train, val, test, names = load_data(cfg)
    trainer, done = Trainer.resume(ckpt, train, val, out_dir=out, cfg=cfg.train)
    trainer.fit(start_epoch=done + 1)
    return _finish(trainer, cfg, test, names, out)


def cmd_eval(args) -> int:
    ckpt = _checkpoint(args)
    cfg = _config_for_checkpoint(args, ckpt)
    model, _, _ = load_checkpoint(ckpt)
    _, _, test, names = load_data(cfg)
    if not test:
        raise DataError("test split is empty")
    res = evaluate(model, test, n_views=cfg.train.eval_views, seed=cfg.seed)
    report = _report(res, model)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        (out / "eval_per_class.csv").write_text(per_class_csv(res, names))
    _emit(report)
    return EXIT_OK


def _inspect_model(args):
    if args.checkpoint:
        ckpt = _checkpoint(args)
        return load_checkpoint(ckpt)[0], _config_for_checkpoint(args, ckpt)
    cfg = runconfig.build(args.config, args.set, args.seed, args.deterministic)
    return MSSGN(cfg.model), cfg


def cmd_inspect(args) -> int:
    model, cfg = _inspect_model(args)
    if args.what == "params":
        total = count_parameters(model)
        _emit({"total": total, "millions": round(total / 1e6, 4), "per_module": parameter_breakdown(model)})
        return EXIT_OK

    scale = args.scale or max(model.scales)
    _, _, test, _ = load_data(cfg)
    samples = test[: args.limit] if args.limit else test
    out = Path(args.out_dir) if args.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    if args.what == "smp":
        rows, top_by_class, totals = ["sample,label,joint_index,count"], {}, []
        for i, s in enumerate(samples):
            clip = s.coords[clip_indices(s.frames, scale, DETERMINISTIC_FIRST)]
            counts, top = model.smp_counts(clip, scale, top=args.top)
            rows += [f"{s.source},{s.label},{j},{int(c)}" for j, c in enumerate(counts)]
            agg = top_by_class.setdefault(s.label, np.zeros(len(counts), dtype=np.int64))
            agg += counts
            totals.append(int(counts.sum()))
        csv_text = "\n".join(rows) + "\n"
        summary = {c: sorted(range(len(v)), key=lambda j: (-v[j], j))[: args.top] for c, v in top_by_class.items()}
        if out:
            (out / "smp_counts.csv").write_text(csv_text)
            (out / "smp_top.json").write_text(probe_summary(summary) + "\n")
        _emit({"sequences": len(samples), "scale": scale, "count_per_sequence": sorted(set(totals)),
               "top_joints_by_class": {str(k): v for k, v in summary.items()}})
        return EXIT_OK

    # graph
    if not 0 <= args.index < len(samples):
        raise ConfigurationError(f"--index must be in [0, {len(samples)})")
    s = samples[args.index]
    if not 0 <= args.frame < scale:
        raise ConfigurationError(f"--frame must be in [0, {scale})")
    clip = s.coords[clip_indices(s.frames, scale, DETERMINISTIC_FIRST)]
    G = model.graphs(clip.astype(model.cfg.dtype), scale)[args.frame]
    text = "\n".join(",".join(repr(float(v)) for v in row) for row in G) + "\n"
    if out:
        (out / "graph.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_all

    results = run_all(seed=args.seed or 0)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'}  {r.name:34s} {r.detail}  ({r.seconds:.1f}s)")
    failed = [r.name for r in results if not r.ok]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return EXIT_VERIFY if failed else EXIT_OK


# ---- argument parsing ----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--seed", type=int, help="global seed (overrides the config)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. train.epochs=5 (repeatable)")
    p.add_argument("--checkpoint", help="checkpoint (.npz) to read")
    p.add_argument("--out-dir", help="run directory for every output file")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=None,
                   help="reproducible mode: fixed seeds, no wall-clock fields")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mssgn", description="Semantics-guided skeleton action recognition")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="raw .skeleton directory -> canonical file")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train from a config")
    _common(p)
    p.set_defaults(func=cmd_train, out_dir="run")

    p = sub.add_parser("resume", help="continue training from a checkpoint")
    _common(p)
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="parameter counts, SMP probe or adjacency dump")
    p.add_argument("what", choices=("params", "smp", "graph"))
    _common(p)
    p.add_argument("--scale", type=int, help="temporal scale (default: largest)")
    p.add_argument("--limit", type=int, default=0, help="probe at most this many test sequences")
    p.add_argument("--top", type=int, default=5)
    p.add_argument("--index", type=int, default=0, help="test sequence for graph")
    p.add_argument("--frame", type=int, default=0, help="frame for graph")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("verify", help="run the property suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
