"""Command-line entry point: ``leafstress {synth,prepare,train,evaluate,embed}``.

Exit codes: 0 success, 1 validation error (including bad flags), 2 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import checkpoint as ckpt_io
from . import config as C
from . import dataset as D
from . import metrics as M
from . import tsne as T
from .errors import FingerprintMismatch, IoError, LeafStressError, ValidationError
from .labels import CLASS_NAMES, SEVERITY_NAMES, STRESS_NAMES, StressClass
from .model import MODES, build_model
from .tensor import RngStream
from .train import ArrayDataset, TrainReport, evaluate_arrays, train

log = logging.getLogger("leafstress")

CACHE = "cache.npz"
SPLIT_MANIFEST = "manifest.csv"
CONFIG_ECHO = "config.ini"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out-dir", default=argparse.SUPPRESS)

    p = _Parser(prog="leafstress", parents=[common], description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic leaf dataset")
    s.add_argument("--count-per-class", type=int)
    s.add_argument("--image-size", type=int)
    s.add_argument("--kind", choices=D.KINDS)

    s = sub.add_parser("prepare", parents=[common], help="validate, split and preprocess a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--stratify", choices=("stress", "severity"))

    s = sub.add_parser("train", parents=[common], help="train a single- or multi-task model")
    s.add_argument("--data", required=True, help="directory written by 'prepare'")
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--epochs", type=int)
    s.add_argument("--mixup", action="store_true", help="enable mixup on top of standard augmentation")
    s.add_argument("--no-augment", action="store_true", help="disable standard augmentation")

    s = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on the test split")
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--split", default="test", choices=D.SPLITS)

    s = sub.add_parser("embed", parents=[common], help="t-SNE of trunk features")
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--split", default="test", choices=D.SPLITS)
    s.add_argument("--standardize", action="store_true")
    return p


def _resolve(args) -> C.RunConfig:
    run = C.load_config(args.config) if getattr(args, "config", None) else C.RunConfig()
    if getattr(args, "seed", None) is not None:
        run.run.seed = args.seed
    run.split.seed = run.run.seed
    if getattr(args, "mode", None):
        run.model.mode = args.mode
    return run


def _out_dir(args):
    out = getattr(args, "out_dir", None) or "."
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_synth(args, run):
    if args.count_per_class is not None:
        run.synth.count_per_class = args.count_per_class
    if args.image_size is not None:
        run.synth.image_size = args.image_size
    if args.kind:
        run.synth.kind = args.kind
    out = _out_dir(args)
    cfg = D.SynthConfig(
        image_size=run.synth.image_size,
        counts={c: run.synth.count_per_class for c in StressClass},
        kind=run.synth.kind,
        seed=run.run.seed,
    )
    records = D.generate_synthetic(cfg, out)
    C.write_config(os.path.join(out, CONFIG_ECHO), run)
    log.info("wrote %d synthetic images to %s", len(records), out)


def cmd_prepare(args, run):
    if args.stratify:
        run.split.stratify_on = args.stratify
    run.model.validate()
    run.imaging.validate()
    out = _out_dir(args)
    records = D.load_manifest(args.manifest, check_files=True)
    if not records:
        raise ValidationError("manifest has no records")
    assigned = sum(1 for r in records if r.split)
    if assigned < len(records):
        records = D.stratified_split(records, run.split, respect_existing=assigned > 0)
    src = os.path.dirname(os.path.abspath(args.manifest))
    images = D.load_arrays(records, src, run.imaging, run.model.input_size)
    rel = [
        D.ManifestRecord(os.path.relpath(os.path.join(src, r.path), os.path.abspath(out)), r.kind, r.stress, r.severity, r.split)
        for r in records
    ]
    D.write_manifest(os.path.join(out, SPLIT_MANIFEST), rel)
    np.savez(
        os.path.join(out, CACHE),
        images=images,
        stress=np.array([int(r.stress) for r in records]),
        severity=np.array([-1 if r.severity is None else int(r.severity) for r in records]),
        split=np.array([r.split for r in records]),
        ids=np.array([r.path for r in rel]),
    )
    C.write_config(os.path.join(out, CONFIG_ECHO), run)
    counts = {s: sum(r.split == s for r in records) for s in D.SPLITS}
    log.info("prepared %d records %s into %s", len(records), counts, out)


def _load_split(data_dir, split):
    try:
        with np.load(os.path.join(data_dir, CACHE)) as z:
            sel = z["split"] == split
            return ArrayDataset(z["images"][sel], z["stress"][sel], z["severity"][sel], list(z["ids"][sel]))
    except OSError as exc:
        raise IoError(f"cannot read prepared data in {data_dir}: {exc}") from exc
    except KeyError as exc:
        raise ValidationError(f"prepared data in {data_dir} is incomplete: {exc}") from exc


def cmd_train(args, run):
    if args.epochs is not None:
        run.sgd.epochs = args.epochs
    if args.mixup:
        run.augment.mixup_enabled = True
    if args.no_augment:
        run.augment.enabled = False
    out = _out_dir(args)
    net = build_model(run.model, seed=run.run.seed)
    train_set = _load_split(args.data, "train")
    val_set = _load_split(args.data, "val")
    train_set.check_tasks(net.tasks)
    if train_set.images.shape[2] != run.model.input_size:
        raise ValidationError(f"prepared images are {train_set.images.shape[2]}px, config expects {run.model.input_size}")
    report, best = train(net, train_set, val_set, run.sgd, run.schedule, run.augment, seed=run.run.seed)
    ckpt_io.save(os.path.join(out, "best.ckpt"), best)
    report.write_csv(os.path.join(out, "train_report.csv"))
    C.write_config(os.path.join(out, CONFIG_ECHO), run)
    log.info("best epoch %d (val loss %.4f); mean epoch %.2fs", report.best_epoch, best.val_loss, report.mean_epoch_seconds())


def _load_net(args, run):
    net = build_model(run.model, seed=run.run.seed)
    ck = ckpt_io.load(args.checkpoint)
    if ck.fingerprint != net.cfg.fingerprint():
        raise FingerprintMismatch(
            f"checkpoint fingerprint {ck.fingerprint} does not match architecture {net.cfg.fingerprint()}"
        )
    net.load_state_dict(ck.tensors)
    return net, ck


def cmd_evaluate(args, run):
    out = _out_dir(args)
    net, ck = _load_net(args, run)
    data = _load_split(args.data, args.split)
    if len(data) == 0:
        raise ValidationError(f"split {args.split!r} is empty")
    data.check_tasks(net.tasks)
    t0 = time.perf_counter()
    _, _, preds, _ = evaluate_arrays(net, data)
    eval_seconds = time.perf_counter() - t0
    cms, metrics = {}, {}
    for task in net.tasks:
        cm = M.ConfusionMatrix.from_labels(len(CLASS_NAMES[task]), data.labels(task), preds[task])
        cms[task] = cm
        metrics[task] = M.summarize(cm)
    M.report_write(cms, metrics, out, CLASS_NAMES)
    report_path = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), "train_report.csv")
    with open(os.path.join(out, "timing.csv"), "w") as fh:
        fh.write("quantity,seconds\n")
        if os.path.exists(report_path):
            rep = TrainReport.read_csv(report_path)
            fh.write(f"mean_train_epoch,{rep.mean_epoch_seconds():.4f}\n")
        fh.write(f"evaluation,{eval_seconds:.4f}\n")
    C.write_config(os.path.join(out, CONFIG_ECHO), run)
    for task, m in metrics.items():
        log.info("%s: acc %.4f prc %.4f rec %.4f", task, m["accuracy"], m["precision"], m["recall"])


def cmd_embed(args, run):
    if args.standardize:
        run.tsne.standardize = True
    out = _out_dir(args)
    net, _ = _load_net(args, run)
    data = _load_split(args.data, args.split)
    _, _, preds, feats = evaluate_arrays(net, data)
    y, trace = T.run_tsne(feats, run.tsne, RngStream.derive(run.run.seed, "tsne"))
    sev = [None if s < 0 else SEVERITY_NAMES[s] for s in data.severity] if data.severity is not None else None
    T.write_embedding_csv(
        os.path.join(out, "embedding.csv"), data.ids, y, [STRESS_NAMES[s] for s in data.stress], sev
    )
    C.write_config(os.path.join(out, CONFIG_ECHO), run)
    log.info("embedded %d samples; KL %.4f -> %.4f", len(data), trace[0], trace[-1])


COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "embed": cmd_embed,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        run = _resolve(args)
        COMMANDS[args.command](args, run)
    except (IoError, OSError) as exc:
        print(f"leafstress: I/O error: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, LeafStressError) as exc:
        print(f"leafstress: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
