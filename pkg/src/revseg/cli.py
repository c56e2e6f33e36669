"""Command-line entry point.

Subcommands: generate, train, eval, predict, dump-features, analyze.
Exit codes: 0 success, 2 validation error, 3 incompatible artifact,
4 numeric failure. Runs are configured by one JSON file with sections
"arch", "train", "data"; command-line flags override individual fields.
"""

import argparse
import json
import os
import sys

import numpy as np

from .analyzer import analyze, compare, format_table
from .arch import ArchitectureSpec
from .checkpoint import load_model
from .dataio import CLASS_COLORS, generate_synthetic, load_manifest
from .engine import Tensor
from .errors import ArtifactError, NumericError, RevsegError, ValidationError
from .netpbm import read_ppm, write_pgm, write_ppm
from .network import build_model
from .trainer import TrainConfig, evaluate, train


def _load_run_config(path):
    if not path or not os.path.isfile(path):
        raise ValidationError(f"config file not found: {path}")
    with open(path) as f:
        raw = json.load(f)
    allowed = {"arch", "train", "data"}
    unknown = set(raw) - allowed
    if unknown:
        raise ValidationError(f"unknown top-level keys in {path}: {sorted(unknown)}")
    spec = ArchitectureSpec.from_dict(raw.get("arch", {}))
    tcfg = TrainConfig.from_dict(raw.get("train", {}))
    data = raw.get("data", {})
    data_unknown = set(data) - {"root"}
    if data_unknown:
        raise ValidationError(f"unknown keys in data config: {sorted(data_unknown)}")
    return spec, tcfg, data.get("root")


def _apply_overrides(tcfg, args):
    for flag, attr in (("steps", "steps"), ("lr", "learning_rate"),
                       ("batch_size", "batch_size"), ("seed", "seed"),
                       ("eval_every", "eval_every")):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(tcfg, attr, value)
    return tcfg.validate()


def _normalization_from(data_root):
    """Per-channel mean/std from the corpus manifest, or the defaults."""
    try:
        manifest = load_manifest(data_root, "train") if data_root else None
    except ValidationError:
        manifest = None
    if manifest is None:
        from .dataio import DEFAULT_MEAN, DEFAULT_STD
        return DEFAULT_MEAN, DEFAULT_STD
    return manifest.mean, manifest.std


def _prepare_image(path, mean, std):
    """PPM -> normalized, padded (1,3,H',W') tensor plus the original size."""
    rgb = read_ppm(path)
    h, w = rgb.shape[:2]
    img = rgb.astype(np.float32) / 255.0
    img = (img - np.asarray(mean, np.float32)) / np.asarray(std, np.float32)
    img = img.transpose(2, 0, 1)
    ph = (32 - h % 32) % 32
    pw = (32 - w % 32) % 32
    if ph or pw:
        img = np.pad(img, ((0, 0), (0, ph), (0, pw)))
    return Tensor(img[None]), (h, w)


def cmd_generate(args):
    counts = generate_synthetic(args.seed, args.count, args.size, args.classes, args.out)
    print(json.dumps({"out": args.out, "splits": counts}))
    return 0


def cmd_train(args):
    spec, tcfg, data_root = _load_run_config(args.config)
    _apply_overrides(tcfg, args)
    if data_root is None:
        raise ValidationError("config has no data.root")
    os.makedirs(args.out, exist_ok=True)
    tcfg.checkpoint_path = os.path.join(args.out, "model.rhrn")
    log_path = os.path.join(args.out, "train_log.jsonl")
    model = build_model(spec, tcfg.seed)
    records = train(model, data_root, tcfg, log_path=log_path)
    final = [r for r in records if "loss" in r][-1]
    print(json.dumps({"checkpoint": tcfg.checkpoint_path, "log": log_path,
                      "final": final}))
    return 0


def cmd_eval(args):
    spec, tcfg, data_root = _load_run_config(args.config)
    if data_root is None:
        raise ValidationError("config has no data.root")
    model = build_model(spec, tcfg.seed)
    load_model(model, args.checkpoint)
    manifest = load_manifest(data_root, args.split)
    if manifest.num_classes != spec.num_classes:
        raise ValidationError(
            f"manifest has {manifest.num_classes} classes, model {spec.num_classes}")
    cm = evaluate(model, manifest)
    out = cm.report_json(indent=2)
    if args.out:
        with open(args.out, "w") as f:
            f.write(out + "\n")
    print(out)
    return 0


def cmd_predict(args):
    spec, tcfg, data_root = _load_run_config(args.config)
    model = build_model(spec, tcfg.seed)
    load_model(model, args.checkpoint)
    mean, std = _normalization_from(data_root)
    image, (h, w) = _prepare_image(args.image, mean, std)
    logits = model.forward(image, training=False)
    pred = logits.data.argmax(axis=1)[0, :h, :w].astype(np.uint8)
    write_pgm(args.out, pred)
    if args.color_out:
        palette = np.zeros((256, 3), dtype=np.uint8)
        k = len(CLASS_COLORS)
        palette[:k] = np.clip(CLASS_COLORS, 0, 255).astype(np.uint8)
        write_ppm(args.color_out, palette[pred])
    print(json.dumps({"out": args.out, "size": [h, w]}))
    return 0


def cmd_dump_features(args):
    spec, tcfg, data_root = _load_run_config(args.config)
    model = build_model(spec, tcfg.seed)
    load_model(model, args.checkpoint)
    mean, std = _normalization_from(data_root)
    image, _ = _prepare_image(args.image, mean, std)
    os.makedirs(args.out, exist_ok=True)
    written = model.dump_feature_maps(image, args.out)
    print(json.dumps({"files": written}))
    return 0


def cmd_analyze(args):
    spec, _, _ = _load_run_config(args.config)
    h = w = args.input_size
    if args.compare:
        other, _, _ = _load_run_config(args.compare)
        result = compare(spec, other, (h, w),
                         name_a=os.path.basename(args.config),
                         name_b=os.path.basename(args.compare))
        print(json.dumps(result, indent=2))
    else:
        report = analyze(spec, (h, w))
        if args.json:
            print(json.dumps(report.to_dict(), indent=2))
        else:
            print(format_table(report))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="revseg",
        description="Frozen-encoder reverse-HRNet segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the decoder on a corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-every", dest="eval_every", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="val", choices=["train", "val", "test"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="segment one PPM image")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--color-out", dest="color_out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("dump-features", help="write per-stride feature maps")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_features)

    p = sub.add_parser("analyze", help="closed-form cost report")
    p.add_argument("--config", required=True)
    p.add_argument("--compare", help="second config to compare against")
    p.add_argument("--input-size", dest="input_size", type=int, default=64)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ArtifactError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except RevsegError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
