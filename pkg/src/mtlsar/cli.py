"""Command-line entry point.

Subcommands: generate (synthetic corpus), train, eval, baseline, and
gradcheck (finite-difference verification). Every subcommand is
deterministic given its config and seed. Exit codes: 0 success, 1 usage
error, 2 data error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import gradcheck, losses, report
from .data import (CorpusCounts, DataError, Dataset, SyntheticSpec,
                   augment_training_set, center_crop_sample, build_corpus,
                   load_manifest, make_eoc_splits, save_dataset, stack_samples,
                   SCENARIOS)
from .metrics import EvalReport, PixelAccuracyMatrix, confusion, \
    pixel_confusion_counts
from .network import MtlNetwork, NetworkConfig, load_checkpoint, save_checkpoint
from .baselines import evaluate_baseline
from .report import write_baseline_csv
from .tensor import Rng
from .train import EpochLogWriter, SgdState, train_epoch

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3

# rng namespaces so network init, augmentation, and epoch shuffles never
# share a derived stream
_NS_NET, _NS_AUG, _NS_EPOCH = 1, 2, 3


class UsageError(Exception):
    pass


class VerificationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise DataError(f"config file {path} is not valid JSON: {e}")


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


# -- generate -----------------------------------------------------------------


def cmd_generate(args) -> int:
    spec_dict, counts_dict = {}, {}
    if args.config:
        spec_dict = _load_json(args.config)
        counts_dict = spec_dict.pop("counts", {})
    if args.classes is not None:
        spec_dict["num_classes"] = args.classes
    try:
        spec = SyntheticSpec.from_dict(spec_dict)
        counts = CorpusCounts(**counts_dict)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = build_corpus(spec, counts, Rng(args.seed))
    save_dataset(dataset, out)
    with open(out / "generator_config.json", "w") as fh:
        echo = spec.to_dict()
        echo["counts"] = asdict(counts)
        echo["seed"] = args.seed
        json.dump(echo, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"generated {len(dataset)} chips over {spec.num_classes} classes "
          f"into {out}")
    return EXIT_OK


# -- train --------------------------------------------------------------------


def _resolve_train_config(args, num_classes: int) -> NetworkConfig:
    cfg_dict = _load_json(args.config) if args.config else {}
    cfg_dict.update(_parse_overrides(args.set))
    for key, value in (("epochs", args.epochs), ("batch_size", args.batch_size),
                       ("lambda_rec", args.lambda_rec),
                       ("lambda_seg", args.lambda_seg), ("seed", args.seed)):
        if value is not None:
            cfg_dict[key] = value
    if "num_classes" in cfg_dict and cfg_dict["num_classes"] != num_classes:
        raise DataError(f"config num_classes={cfg_dict['num_classes']} but the "
                        f"dataset has {num_classes} classes")
    cfg_dict["num_classes"] = num_classes
    try:
        return NetworkConfig.from_dict(cfg_dict)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e))


def _prepare_split(dataset: Dataset, scenario: str, config: NetworkConfig):
    train_ds, test_ds = make_eoc_splits(dataset, scenario)
    h, w = config.input_hw
    if h != w:
        raise DataError("the crop pipeline needs a square input size")
    for s in dataset.samples:
        if int(s.mask.max()) >= config.num_seg_classes:
            raise DataError(f"mask value {int(s.mask.max())} exceeds "
                            f"num_seg_classes={config.num_seg_classes}")
    aug = augment_training_set(train_ds.samples, crop=h, copies=10,
                               rng=Rng(config.seed).derive(_NS_AUG))
    test = [center_crop_sample(s, h) for s in test_ds.samples]
    return aug, test


def _evaluate(net: MtlNetwork, samples, class_names, scenario: str,
              batch_size: int | None = None) -> EvalReport:
    if not all(bn.initialized for bn in net.bn_records()):
        raise DataError("network has uninitialized batch statistics; "
                        "train before evaluating")
    bs = batch_size or net.config.batch_size
    images, labels, masks = stack_samples(samples)
    preds, pred_masks = [], []
    for start in range(0, len(samples), bs):
        xb = np.ascontiguousarray(images[start : start + bs])
        probs, seg_logits, _ = net.forward(xb, mode="eval")
        preds.append(losses.predict_classes(probs))
        pred_masks.append(losses.predict_masks(seg_logits))
    preds = np.concatenate(preds)
    pred_masks = np.concatenate(pred_masks, axis=0)
    cm = confusion(labels, preds, net.config.num_classes)
    pix = PixelAccuracyMatrix(pixel_confusion_counts(
        pred_masks, masks, net.config.num_seg_classes))
    overlays = [(images[i, 0, 0] if images.ndim == 5 else images[i, 0],
                 masks[i], pred_masks[i]) for i in range(len(samples))]
    return EvalReport(scenario=scenario, class_names=list(class_names),
                      confusion=cm, pixels=pix, overlays=overlays)


def cmd_train(args) -> int:
    dataset = load_manifest(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.resume:
        net, extra = load_checkpoint(args.resume)
        config = net.config
        start_epoch = int(extra.get("epoch", 0))
        total_epochs = args.epochs if args.epochs is not None else config.epochs
        if len(dataset.class_names) != config.num_classes:
            raise DataError("resumed checkpoint and dataset class counts differ")
    else:
        config = _resolve_train_config(args, len(dataset.class_names))
        net = MtlNetwork(config, Rng(config.seed).derive(_NS_NET))
        start_epoch = 0
        total_epochs = config.epochs
    scenario = args.scenario or "soc"
    train_samples, test_samples = _prepare_split(dataset, scenario, config)
    images, labels, masks = stack_samples(train_samples)

    with open(out / "config_resolved.json", "w") as fh:
        json.dump({"network": config.to_dict(), "scenario": scenario,
                   "epochs": total_epochs}, fh, indent=2, sort_keys=True)
        fh.write("\n")

    state = SgdState(lr0=config.lr, decay=config.lr_decay,
                     period=config.lr_decay_period, epoch=start_epoch)
    log = EpochLogWriter(out)
    for epoch in range(start_epoch, total_epochs):
        summary = train_epoch(net, images, labels, masks, state,
                              Rng(config.seed).derive(_NS_EPOCH, epoch))
        log.append(summary)
        print(f"epoch {summary.epoch:3d}  lr {summary.lr:.6g}  "
              f"loss {summary.loss:.4f} (rec {summary.rec_loss:.4f} "
              f"seg {summary.seg_loss:.4f})  acc {summary.train_acc:.3f}  "
              f"{summary.seconds:.1f}s")
    save_checkpoint(net, out / "checkpoint.npz",
                    extra={"epoch": total_epochs, "scenario": scenario})
    eval_report = _evaluate(net, test_samples, dataset.class_names, scenario)
    summary = report.emit_report(eval_report, out / "final_eval")
    print(f"test recognition ratio {100 * summary['recognition_ratio']:.2f}%  "
          f"pixel accuracy {100 * summary['pixel_accuracy']:.2f}%")
    return EXIT_OK


# -- eval ---------------------------------------------------------------------


def cmd_eval(args) -> int:
    net, _ = load_checkpoint(args.checkpoint)
    dataset = load_manifest(args.data)
    if len(dataset.class_names) != net.config.num_classes:
        raise DataError(f"checkpoint expects {net.config.num_classes} classes, "
                        f"dataset has {len(dataset.class_names)}")
    scenario = args.scenario or "soc"
    _, test_ds = make_eoc_splits(dataset, scenario)
    test = [center_crop_sample(s, net.config.input_hw[0]) for s in test_ds.samples]
    eval_report = _evaluate(net, test, dataset.class_names, scenario,
                            batch_size=args.batch_size)
    summary = report.emit_report(eval_report, args.out)
    print(f"{scenario}: recognition ratio {100 * summary['recognition_ratio']:.2f}%  "
          f"pixel accuracy {100 * summary['pixel_accuracy']:.2f}%  "
          f"({summary['num_test_samples']} samples)")
    return EXIT_OK


# -- baseline -----------------------------------------------------------------


def cmd_baseline(args) -> int:
    dataset = load_manifest(args.data)
    scenario = args.scenario or "soc"
    _, test_ds = make_eoc_splits(dataset, scenario)
    try:
        result = evaluate_baseline(args.method, test_ds)
    except ValueError as e:
        raise UsageError(str(e))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"baseline_{args.method}.csv"
    write_baseline_csv(csv_path, result.rows)
    with open(out / f"baseline_{args.method}.json", "w") as fh:
        json.dump({"method": result.method, "scenario": scenario,
                   "degenerate_samples": result.degenerate_samples,
                   "rows": result.rows}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    tg, bg, overall = result.overall()
    print(f"{args.method}: target {100 * tg:.2f}%  background {100 * bg:.2f}%  "
          f"overall {100 * overall:.2f}%  -> {csv_path}")
    return EXIT_OK


# -- gradcheck ----------------------------------------------------------------


def cmd_gradcheck(args) -> int:
    cfg = None
    if args.config:
        try:
            cfg = NetworkConfig.from_dict(_load_json(args.config))
        except (TypeError, ValueError) as e:
            raise UsageError(str(e))
    result = gradcheck.run_verification(seed=args.seed, cases=args.cases,
                                        network_config=cfg)
    for name, err in result["layers"].items():
        print(f"{name:>20s}  max rel err {err:.3e}")
    print(f"{'whole network':>20s}  max rel err {result['network']:.3e}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "gradcheck.json", "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if not result["passed"]:
        raise VerificationError(
            f"gradient check failed: max rel err {result['max_error']:.3e} "
            f">= tolerance {result['tolerance']:.0e}")
    print(f"all gradients within {result['tolerance']:.0e}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mtlsar",
                     description="joint SAR target recognition and segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build a synthetic chip corpus")
    g.add_argument("--config", help="generator spec JSON (SyntheticSpec fields, "
                                    "optional 'counts' object)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--classes", type=int, help="override the class count")
    g.set_defaults(fn=cmd_generate)

    t = sub.add_parser("train", help="train on a generated dataset")
    t.add_argument("--data", required=True, help="dataset directory")
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="network config JSON")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int, dest="batch_size")
    t.add_argument("--lambda-rec", type=float, dest="lambda_rec")
    t.add_argument("--lambda-seg", type=float, dest="lambda_seg")
    t.add_argument("--scenario", choices=SCENARIOS)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable)")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a test split")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--scenario", choices=SCENARIOS)
    e.add_argument("--batch-size", type=int, dest="batch_size")
    e.set_defaults(fn=cmd_eval)

    b = sub.add_parser("baseline", help="run a classical segmentation baseline")
    b.add_argument("--data", required=True)
    b.add_argument("--method", required=True, choices=("otsu", "canny"))
    b.add_argument("--out", required=True)
    b.add_argument("--scenario", choices=SCENARIOS)
    b.set_defaults(fn=cmd_baseline)

    c = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--cases", type=int, default=20)
    c.add_argument("--config", help="miniature network config JSON")
    c.add_argument("--out", help="write gradcheck.json here")
    c.set_defaults(fn=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except VerificationError as e:
        print(f"verification failure: {e}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
