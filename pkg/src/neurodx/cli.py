"""Command-line entry point: train, evaluate, predict, inspect, plot.

Config precedence: built-in defaults < `key = value` config file < CLI
flags. The fully resolved config is echoed to <out>/resolved.cfg before
any work starts. Exit codes: 0 success, 2 usage/input error, 3 numeric
failure.
"""

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import optim, svgplot
from .errors import NeurodxError, NumericError
from .model import PRESETS, ModelConfig, build_hybrid, load_checkpoint, save_checkpoint
from .tensor import make_rng


@dataclass
class RunConfig:
    data: str = ""
    out: str = "out"
    checkpoint: str = ""
    preset: str = "paper"
    sequence_mode: str = "spatial49"
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.001
    seed: int = 0
    max_rotation_deg: float = 15.0

    def to_text(self):
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


def parse_config_file(path):
    values = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise NeurodxError(f"{path}: malformed config line {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    return values


def resolve_config(args):
    cfg = RunConfig()
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    casts = {f.name: f.type for f in fields(cfg)}
    for key, value in file_values.items():
        if key not in casts:
            raise NeurodxError(f"unknown config key {key!r}")
        setattr(cfg, key, casts[key](value))
    for f in fields(cfg):
        flag = getattr(args, f.name, None)
        if flag is not None:
            setattr(cfg, f.name, flag)
    return cfg


def _model_config(cfg: RunConfig) -> ModelConfig:
    if cfg.preset not in PRESETS:
        raise NeurodxError(f"unknown preset {cfg.preset!r}")
    mc = PRESETS[cfg.preset]
    return ModelConfig(input_shape=mc.input_shape, num_classes=mc.num_classes,
                       channels=mc.channels, lstm_hidden=mc.lstm_hidden,
                       head_hidden=mc.head_hidden, sequence_mode=cfg.sequence_mode)


def _train_config(cfg: RunConfig) -> optim.TrainConfig:
    return optim.TrainConfig(batch_size=cfg.batch_size, epochs=cfg.epochs,
                             learning_rate=cfg.lr, seed=cfg.seed,
                             max_rotation_deg=cfg.max_rotation_deg,
                             augment=cfg.max_rotation_deg > 0)


def _prepare_out(cfg: RunConfig):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(cfg.to_text())
    return out


def cmd_train(args):
    cfg = resolve_config(args)
    if not cfg.data:
        raise NeurodxError("train: --data is required")
    out = _prepare_out(cfg)
    ds = data_mod.load_dataset(cfg.data)
    data_mod.split(ds, seed=cfg.seed)
    model = build_hybrid(_model_config(cfg), make_rng(cfg.seed, stream=(0,)))
    tcfg = _train_config(cfg)

    best = {"acc": -1.0}

    def track_best(epoch, row):
        if row[4] > best["acc"]:
            best["acc"] = row[4]
            best["epoch"] = epoch

    report, state = optim.train(model, ds, tcfg, hooks=[track_best])
    (out / "history.csv").write_text(report.to_csv())
    save_checkpoint(model, state, out / "checkpoint_final.bin",
                    epoch=cfg.epochs, seed=cfg.seed)
    last = report.rows[-1]
    print(f"trained {cfg.epochs} epochs: train_acc={last[2]:.4f} "
          f"test_acc={last[4]:.4f} (best test_acc={best['acc']:.4f} "
          f"at epoch {best.get('epoch', 0)})")
    print(f"artifacts in {out}")
    return 0


def _collect_scores(model, ds, subset, batch_size):
    scores = []
    y_true = []
    for images, labels in data_mod.batches(ds, subset, batch_size=batch_size,
                                           shuffle=False, augment=False,
                                           image_size=model.config.input_shape[1]):
        probs, _ = model.forward(images, mode="eval")
        scores.append(probs)
        y_true.extend(int(i) for i in labels.argmax(axis=1))
    return np.concatenate(scores, axis=0), y_true


def cmd_evaluate(args):
    cfg = resolve_config(args)
    if not cfg.data or not cfg.checkpoint:
        raise NeurodxError("evaluate: --data and --checkpoint are required")
    out = _prepare_out(cfg)
    model, _, _ = load_checkpoint(cfg.checkpoint)
    ds = data_mod.load_dataset(cfg.data)
    if args.subset == "all":
        ds.tags = ["train"] * len(ds.items)
        subset = "train"
    else:
        data_mod.split(ds, seed=cfg.seed)
        subset = args.subset
    scores, y_true = _collect_scores(model, ds, subset, cfg.batch_size)
    y_pred = [int(i) for i in scores.argmax(axis=1)]
    cm = metrics_mod.confusion_matrix(y_true, y_pred, len(ds.class_names))
    metrics_mod.export_report(cm, ds.class_names, out, scores=scores, y_true=y_true)
    acc = metrics_mod.overall_metrics(cm)["accuracy"]
    print(f"accuracy: {acc:.4f} ({int(np.trace(cm))}/{int(cm.sum())}) on {subset}")
    return 0


def cmd_predict(args):
    cfg = resolve_config(args)
    if not cfg.checkpoint:
        raise NeurodxError("predict: --checkpoint is required")
    model, _, _ = load_checkpoint(cfg.checkpoint)
    size = model.config.input_shape[1]
    class_names = args.class_names.split(",") if args.class_names else [
        f"class{i}" for i in range(model.config.num_classes)]
    for image_path in args.images:
        pixels = data_mod.decode_image(image_path)
        if pixels.shape[1:] != (size, size):
            pixels = data_mod.resize(pixels, (size, size))
        probs, _ = model.forward(pixels[None], mode="eval")
        row = probs[0]
        name = class_names[int(row.argmax())]
        print(f"{image_path} {name} " + " ".join(f"{p:.6f}" for p in row))
    return 0


def cmd_inspect(args):
    cfg = resolve_config(args)
    if cfg.checkpoint:
        model, _, _ = load_checkpoint(cfg.checkpoint)
    else:
        model = build_hybrid(_model_config(cfg), make_rng(cfg.seed, stream=(0,)))
    print(f"{'layer':<12}{'output shape':<20}{'params':>12}")
    total = 0
    for name, shape, nparams in model.layer_table():
        shape_s = "x".join(str(s) for s in shape)
        print(f"{name:<12}{shape_s:<20}{nparams:>12}")
        total += nparams
    census = model.layer_census()
    print(f"{'total':<32}{total:>12}")
    print("census: " + ", ".join(f"{k}={v}" for k, v in sorted(census.items())))
    return 0


def _read_csv(path):
    lines = [l for l in Path(path).read_text().splitlines()
             if l.strip() and not l.startswith("#")]
    if len(lines) < 2:
        raise NeurodxError(f"{path}: no data rows")
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        if len(cells) != len(header):
            raise NeurodxError(f"{path}: malformed row {line!r}")
        rows.append([float(c) for c in cells])
    return header, rows


def cmd_plot(args):
    cfg = resolve_config(args)
    out = _prepare_out(cfg)
    wrote = []
    if args.history:
        header, rows = _read_csv(args.history)
        if header[:5] != ["epoch", "train_loss", "train_acc", "test_loss", "test_acc"]:
            raise NeurodxError(f"{args.history}: unexpected history header {header}")
        epochs = [r[0] for r in rows]
        acc = svgplot.line_chart(
            [("train", epochs, [r[2] for r in rows]),
             ("test", epochs, [r[4] for r in rows])],
            "Training and Testing Accuracy", "epoch", "accuracy")
        loss = svgplot.line_chart(
            [("train", epochs, [r[1] for r in rows]),
             ("test", epochs, [r[3] for r in rows])],
            "Training and Testing Loss", "epoch", "loss")
        for fname, text in [("accuracy.svg", acc), ("loss.svg", loss)]:
            (out / fname).write_text(text)
            wrote.append(out / fname)
    if args.roc:
        series = []
        for roc_path in args.roc:
            _, rows = _read_csv(roc_path)
            label = Path(roc_path).stem.replace("roc_", "")
            finite = [r for r in rows if np.isfinite(r[0]) or True]
            series.append((label, [r[1] for r in finite], [r[2] for r in finite]))
        svg = svgplot.line_chart(series, "ROC curves (one-vs-rest)",
                                 "false positive rate", "true positive rate",
                                 diagonal=True)
        (out / "roc.svg").write_text(svg)
        wrote.append(out / "roc.svg")
    if not wrote:
        raise NeurodxError("plot: nothing to plot; pass --history and/or --roc")
    for p in wrote:
        print(f"wrote {p}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="neurodx",
        description="Hybrid CNN-LSTM image classifier: train, evaluate, "
                    "predict, inspect, plot.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--data", help="dataset root (one directory per class)")
        p.add_argument("--out", help="output directory (default: out)")
        p.add_argument("--checkpoint", help="checkpoint file")
        p.add_argument("--preset", choices=["paper", "toy"])
        p.add_argument("--sequence-mode", dest="sequence_mode",
                       choices=["spatial49", "single_step"])
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--max-rotation", dest="max_rotation_deg", type=float)

    p = sub.add_parser("train", help="train a model on a dataset")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="write confusion/metrics/ROC reports")
    common(p)
    p.add_argument("--subset", choices=["train", "test", "all"], default="all")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="classify individual images")
    common(p)
    p.add_argument("images", nargs="+", help="image file(s)")
    p.add_argument("--class-names", dest="class_names",
                   help="comma-separated class names for display")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("inspect", help="print the layer table and census")
    common(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("plot", help="render SVG charts from CSV outputs")
    common(p)
    p.add_argument("--history", help="history.csv from train")
    p.add_argument("--roc", nargs="+", help="roc_<class>.csv files")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NeurodxError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
