"""Command-line front end: gen-data, train, eval, ablate, grad-check."""
import argparse
import copy
import logging
import os
import sys

import numpy as np

from . import config as configlib
from .detr import (FeatureCache, ScaleBridgeModel, evaluate, fit, load_checkpoint, make_model_optimizer,
                   save_checkpoint)
from .errors import ScaleBridgeError
from .evaluation import UNDEFINED, GroundTruth, bucket_counts
from .scenegen import generate_dataset, load_scenes, save_scenes

log = logging.getLogger("scalebridge")

VARIANTS = (
    ("neither", False, False),
    ("rem_only", True, False),
    ("dgq_only", False, True),
    ("both", True, True),
)
# Component-contribution table of the full-scale reference experiment (AP, %).
REFERENCE_AP = {"neither": 31.7, "rem_only": 34.2, "dgq_only": 32.6, "both": 36.7}
ABLATION_COLUMNS = ("variant", "ap", "ap_vt", "ap_t", "ap_s", "ap_m")


def _load_config(args):
    cfg = configlib.load(args.config) if args.config else configlib.RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.train.seed = args.seed
    if getattr(args, "epochs", None) is not None:
        cfg.train.epochs = args.epochs
    return cfg


def _ensure_parent(path):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)


def _load_dataset(cfg, path=None):
    path = path or cfg.paths.dataset
    if not os.path.exists(path):
        raise ScaleBridgeError(f"dataset {path} not found; run `scalebridge gen-data` first")
    return load_scenes(path)


def size_summary(scenes):
    """Object-size statistics of a dataset, one line per fact."""
    boxes = [b for s in scenes for b in s.boxes]
    lines = [f"objects: {len(boxes)}"]
    if boxes:
        sides = np.array([max(b[2], b[3]) for b in boxes])
        lines.append(f"mean longer side: {sides.mean():.2f} px")
        lines.append(f"fraction under 16 px: {np.mean(sides < 16):.3f}")
        counts = bucket_counts([GroundTruth(tuple(b), 0) for b in boxes])
        lines.append("buckets: " + " ".join(f"{k}={v}" for k, v in counts.items()))
    return lines


def cmd_gen_data(args):
    cfg = _load_config(args)
    out = args.out or cfg.paths.dataset
    scenes = generate_dataset(cfg.data, cfg.train.seed)
    _ensure_parent(out)
    save_scenes(scenes, out, cfg.data)
    print(f"wrote {len(scenes)} scenes to {out}")
    for line in size_summary(scenes):
        print(line)
    return 0


def _train(cfg, scenes, checkpoint, log_path, resume=False, cache=None):
    model = ScaleBridgeModel(cfg)
    optimizer = make_model_optimizer(model)
    start = 1
    if resume and os.path.exists(checkpoint):
        start = load_checkpoint(model, checkpoint, optimizer) + 1
        log.info("resuming from epoch %d", start)
    history, optimizer = fit(model, scenes, cfg.train.epochs, optimizer, start_epoch=start,
                             log_path=log_path, cache=cache)
    last = start - 1 + cfg.train.epochs
    save_checkpoint(model, checkpoint, epoch=last, optimizer=optimizer)
    return model, history


def cmd_train(args):
    cfg = _load_config(args)
    scenes = _load_dataset(cfg, args.data)
    checkpoint = args.out or cfg.paths.checkpoint
    log_path = args.log or cfg.paths.train_log
    _ensure_parent(log_path)
    _, history = _train(cfg, scenes, checkpoint, log_path, resume=args.resume)
    for m in history:
        print(f"epoch {m.epoch}: det_loss {m.det_loss:.5f} density_loss {m.density_loss:.5f} total {m.total:.5f}")
    print(f"checkpoint: {checkpoint}")
    return 0


def write_report(report, prefix):
    _ensure_parent(prefix)
    with open(prefix + ".json", "w") as fh:
        fh.write(report.to_text())
    with open(prefix + ".csv", "w") as fh:
        fh.write(report.csv_header() + "\n" + report.csv_row() + "\n")


def cmd_eval(args):
    cfg = _load_config(args)
    scenes = _load_dataset(cfg, args.data)
    model = ScaleBridgeModel(cfg)
    load_checkpoint(model, args.checkpoint or cfg.paths.checkpoint)
    report = evaluate(model, scenes)
    prefix = args.out or cfg.paths.report
    write_report(report, prefix)
    sys.stdout.write(report.to_text())
    print(f"report: {prefix}.json {prefix}.csv")
    return 0


def _fmt(value):
    return UNDEFINED if value is None else repr(value)


def run_ablation(cfg, scenes):
    """Train and evaluate the four component variants at the same seed."""
    rows = []
    cache = FeatureCache()
    for name, use_rem, use_dgq in VARIANTS:
        variant = copy.deepcopy(cfg)
        variant.model.use_rem, variant.model.use_dgq = use_rem, use_dgq
        model = ScaleBridgeModel(variant)
        fit(model, scenes, variant.train.epochs, cache=cache)
        report = evaluate(model, scenes, cache=cache).as_dict()
        rows.append({"variant": name, **{k: report[k] for k in ABLATION_COLUMNS[1:]}})
    return rows


def ablation_csv(rows):
    lines = [",".join(ABLATION_COLUMNS)]
    for row in rows:
        lines.append(",".join([row["variant"]] + [_fmt(row[k]) for k in ABLATION_COLUMNS[1:]]))
    return "\n".join(lines) + "\n"


def cmd_ablate(args):
    cfg = _load_config(args)
    scenes = _load_dataset(cfg, args.data)
    rows = run_ablation(cfg, scenes)
    out = args.out or os.path.join(os.path.dirname(cfg.paths.report) or ".", "ablation.csv")
    _ensure_parent(out)
    text = ablation_csv(rows)
    with open(out, "w") as fh:
        fh.write(text)
    print(f"{'variant':10s} {'ap':>10s} {'reference':>10s}")
    for row in rows:
        ap = "undefined" if row["ap"] is None else f"{100 * row['ap']:.2f}"
        print(f"{row['variant']:10s} {ap:>10s} {REFERENCE_AP[row['variant']]:>10.1f}")
    by = {r["variant"]: (r["ap"] or 0.0) for r in rows}
    print(f"both >= neither: {by['both'] >= by['neither']}")
    print(f"reference middle-row order rem_only > dgq_only: {by['rem_only'] > by['dgq_only']} (not asserted)")
    print(f"table: {out}")
    return 0


def cmd_grad_check(args):
    from .diagnostics import check_composite_loss
    cfg = _load_config(args)
    report = check_composite_loss(eps=args.eps, base=cfg)
    print(f"parameters checked: {report.n_checked} (frozen experts excluded)")
    print(f"max relative error: {report.max_rel_error:.3e} (worst: {report.worst_param})")
    print(f"frozen expert gradients exactly zero: {report.frozen_zero}")
    print("PASS" if report.passed else "FAIL")
    return 0 if report.passed else 1


def build_parser():
    parser = argparse.ArgumentParser(prog="scalebridge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="INI run configuration (defaults when omitted)")
        p.add_argument("--seed", type=int, help="override the root seed")
        p.add_argument("--epochs", type=int, help="override the number of training epochs")
        p.add_argument("--out", help="output path")
        p.set_defaults(func=func)
        return p

    add("gen-data", cmd_gen_data, "generate the synthetic dataset")
    p = add("train", cmd_train, "train a model and write a checkpoint")
    p.add_argument("--data", help="dataset file (default: paths.dataset)")
    p.add_argument("--log", help="per-epoch CSV log (default: paths.train_log)")
    p.add_argument("--resume", action="store_true", help="continue from the checkpoint at --out")
    p = add("eval", cmd_eval, "evaluate a checkpoint; --out is the report prefix")
    p.add_argument("--data", help="dataset file (default: paths.dataset)")
    p.add_argument("--checkpoint", help="checkpoint file (default: paths.checkpoint)")
    p = add("ablate", cmd_ablate, "train and evaluate the four component variants")
    p.add_argument("--data", help="dataset file (default: paths.dataset)")
    p = add("grad-check", cmd_grad_check, "finite-difference check of the full loss")
    p.add_argument("--eps", type=float, default=1e-5, help="central-difference step")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScaleBridgeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
