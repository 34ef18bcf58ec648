"""Command-line entry point: ``dsaseg <command> [flags]``.

Exit codes: 0 success, 1 verification failure, 2 usage, 3 IO, 4 numerical
abort, 5 config/checkpoint mismatch.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, FormatError, GenerationError, NumericalError, UsageError

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2, 3, 4, 5

DEFAULTS: Dict[str, Dict] = {
    "gen-phantom": {"n": 32, "size": 64, "frames": 8, "branch_depth": 2, "noise_sigma": 6.0,
                    "skull_arcs": 2, "speed": None},
    "train": {"epochs": 40, "iters_per_epoch": 16, "batch_size": 2, "lr": 0.01, "val_fold": 0,
              "patch": 64, "stride": 32, "target_frames": 8, "base_channels": 8, "levels": 5,
              "tf_heads": 4, "tf_layers": 4, "ablation": "none", "no_augment": False},
    "infer": {"patch": 64, "stride": 32, "tta": "none", "save_probs": False,
              "checkpoint_file": None, "target_frames": None, "base_channels": None,
              "tf_heads": None, "frames": None, "ablation": None},
    "eval": {"folds": None, "compare": None, "csv": False},
    "minip": {"target_frames": None},
    "resample": {"target_frames": 8},
    "verify": {"only": None},
}
COMMON_DEFAULTS = {"seed": 0, "f64": False}
# per-command keys that come from required positional-like flags, never defaulted
REQUIRED = {"gen-phantom": ["out"], "train": ["data", "out"], "infer": ["checkpoint", "input", "out"],
            "eval": ["pred", "gt"], "minip": ["input", "out"], "resample": ["input", "out"],
            "verify": []}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file of defaults; explicit flags win")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--f64", action="store_true", default=None, help="float64 computation")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsaseg", description="DSA sequence vessel segmentation")
    parser.add_argument("--version", action="version", version=f"dsaseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-phantom", help="write a synthetic phantom dataset")
    _common(p)
    p.add_argument("--n", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--branch-depth", type=int)
    p.add_argument("--noise-sigma", type=float)
    p.add_argument("--skull-arcs", type=int)
    p.add_argument("--speed", type=float, help="contrast speed in px/frame (default: auto)")

    p = sub.add_parser("train", help="train a model on a dataset directory")
    _common(p)
    p.add_argument("--data")
    p.add_argument("--epochs", type=int)
    p.add_argument("--iters-per-epoch", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--val-fold", type=int, help="held-out fold, -1 trains on everything")
    p.add_argument("--patch", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--target-frames", type=int)
    p.add_argument("--base-channels", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--tf-heads", type=int)
    p.add_argument("--tf-layers", type=int)
    p.add_argument("--ablation", choices=["none", "minip-only", "sequence-only"])
    p.add_argument("--no-augment", action="store_true", default=None)

    p = sub.add_parser("infer", help="sliding-window prediction")
    _common(p)
    p.add_argument("--checkpoint", help="training run directory or .dsaw file")
    p.add_argument("--checkpoint-file", help="file name inside the run directory (default best)")
    p.add_argument("--input", nargs="+", help="sample directories or a dataset directory")
    p.add_argument("--patch", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--tta", choices=["none", "mirror"])
    p.add_argument("--save-probs", action="store_true", default=None)
    p.add_argument("--target-frames", type=int)
    p.add_argument("--frames", type=int, help="override model frame count")
    p.add_argument("--base-channels", type=int, help="override model width")
    p.add_argument("--tf-heads", type=int)
    p.add_argument("--ablation", choices=["none", "minip-only", "sequence-only"])

    p = sub.add_parser("eval", help="compute the metrics report")
    _common(p)
    p.add_argument("--pred", help="directory of <id>/pred.pgm")
    p.add_argument("--gt", help="dataset directory with <id>/label.pgm")
    p.add_argument("--folds", help="folds.json to aggregate per fold")
    p.add_argument("--compare", help="second prediction directory for paired t-tests")
    p.add_argument("--csv", action="store_true", default=None)

    p = sub.add_parser("minip", help="write the MinIP of a sequence")
    _common(p)
    p.add_argument("--input")
    p.add_argument("--target-frames", type=int, help="resample before projecting")

    p = sub.add_parser("resample", help="resample a sequence to a fixed frame count")
    _common(p)
    p.add_argument("--input")
    p.add_argument("--target-frames", type=int)

    p = sub.add_parser("verify", help="run self-check suites")
    _common(p)
    p.add_argument("--only", action="append", choices=["gradcheck", "attention", "stitch", "metrics"])
    return parser


def resolve(args: argparse.Namespace) -> Dict:
    """Merge defaults < config file < explicit flags."""
    cmd = args.command
    merged = {**COMMON_DEFAULTS, **DEFAULTS[cmd]}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(EXIT_IO, f"cannot read config {args.config}: {exc}")
        data = {k.replace("-", "_"): v for k, v in data.items() if k != "command"}
        allowed = set(merged) | set(REQUIRED[cmd]) | {"out"}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise CliError(EXIT_USAGE, f"unknown keys in config for {cmd}: {unknown}")
        merged.update(data)
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        merged[k] = v
    missing = [k for k in REQUIRED[cmd] if merged.get(k) in (None, [])]
    if missing:
        raise CliError(EXIT_USAGE, f"{cmd}: missing required option(s): "
                       + ", ".join("--" + m.replace("_", "-") for m in missing))
    return merged


def write_run_config(cfg: Dict, command: str):
    out = cfg.get("out")
    if not out:
        return
    Path(out).mkdir(parents=True, exist_ok=True)
    record = {"command": command, **cfg}
    (Path(out) / "run_config.json").write_text(json.dumps(record, indent=2, sort_keys=True))


# -- commands ---------------------------------------------------------------

def cmd_gen_phantom(cfg):
    from .phantom import PhantomSpec, emit_dataset
    spec = PhantomSpec(height=cfg["size"], width=cfg["size"], frames=cfg["frames"],
                       branch_depth=cfg["branch_depth"], noise_sigma=cfg["noise_sigma"],
                       skull_arcs=cfg["skull_arcs"], contrast_speed=cfg["speed"])
    folds = emit_dataset(cfg["n"], spec, cfg["out"], master_seed=cfg["seed"])
    sizes = ", ".join(f"{k}:{len(v)}" for k, v in folds.items())
    print(f"wrote {cfg['n']} phantoms to {cfg['out']} (seed {cfg['seed']}; folds {sizes})")


def _model_config(cfg):
    from .model import ModelConfig
    return ModelConfig(base_channels=cfg["base_channels"], levels=cfg["levels"],
                       frames=cfg["target_frames"], tf_layers=cfg["tf_layers"],
                       tf_heads=cfg["tf_heads"], patch_size=cfg["patch"], ablation=cfg["ablation"])


def cmd_train(cfg):
    from .train import TrainConfig, train
    tcfg = TrainConfig(epochs=cfg["epochs"], iters_per_epoch=cfg["iters_per_epoch"],
                       batch_size=cfg["batch_size"], lr=cfg["lr"], val_fold=cfg["val_fold"],
                       target_frames=cfg["target_frames"], patch=cfg["patch"],
                       stride=cfg["stride"], augment=not cfg["no_augment"], seed=cfg["seed"],
                       f64=bool(cfg["f64"]))
    summary = train(cfg["data"], cfg["out"], tcfg, _model_config(cfg))
    best = summary["best_val_dice"]
    print(f"training done; best validation Dice {'n/a' if best is None else f'{best:.4f}'}; "
          f"checkpoint in {cfg['out']}")


def _sample_dirs(inputs: List[str]) -> List[Path]:
    dirs = []
    for item in inputs:
        p = Path(item)
        if (p / "manifest.json").is_file():
            dirs.append(p)
        elif p.is_dir():
            found = sorted(d for d in p.iterdir() if (d / "manifest.json").is_file())
            if not found:
                raise FormatError("no sample directories found", p)
            dirs.extend(found)
        else:
            raise FormatError("input not found", p)
    return dirs


def cmd_infer(cfg):
    from .infer import predict, write_prediction
    from .pipeline import load_sequence
    from .train import load_model
    overrides = {k: cfg[k] for k in ("base_channels", "tf_heads", "frames", "ablation")
                 if cfg.get(k) is not None}
    dtype = np.float64 if cfg["f64"] else np.float32
    model = load_model(cfg["checkpoint"], cfg.get("checkpoint_file"), overrides, dtype)
    out = Path(cfg["out"])
    for d in _sample_dirs(cfg["input"]):
        seq, _ = load_sequence(d)
        pred, probs = predict(model, seq, cfg["patch"], cfg["stride"], cfg["tta"] == "mirror",
                              cfg["target_frames"])
        write_prediction(out / (seq.id or d.name), pred, probs if cfg["save_probs"] else None)
        print(f"{seq.id or d.name}: {pred.shape[0]}x{pred.shape[1]} -> {out / (seq.id or d.name)}")


def _evaluate_dir(pred_root: Path, gt_root: Path, ids: List[str]):
    from .infer import read_probs
    from .metrics import evaluate_image
    from .pipeline import load_sequence, read_pgm
    per_image = {}
    for sid in ids:
        _, label = load_sequence(gt_root / sid)
        if label is None:
            raise FormatError("ground truth label.pgm missing", gt_root / sid / "label.pgm")
        pred = read_pgm(pred_root / sid / "pred.pgm")
        if pred.shape != label.classes.shape:
            raise FormatError(f"prediction {pred.shape} vs label {label.classes.shape}",
                              pred_root / sid / "pred.pgm")
        per_image[sid] = evaluate_image(pred, label.classes, read_probs(pred_root / sid))
    return per_image


def cmd_eval(cfg):
    from .metrics import aggregate_folds, average_reports, build_report, flatten_metrics
    from .metrics import paired_t_test, write_report
    pred_root, gt_root = Path(cfg["pred"]), Path(cfg["gt"])
    if not gt_root.is_dir():
        raise FormatError("ground-truth directory missing", gt_root)
    if not pred_root.is_dir():
        raise FormatError("prediction directory missing", pred_root)
    ids = sorted(d.name for d in pred_root.iterdir() if (d / "pred.pgm").is_file())
    if not ids:
        raise FormatError("no <id>/pred.pgm found", pred_root)
    per = _evaluate_dir(pred_root, gt_root, ids)
    other = _evaluate_dir(Path(cfg["compare"]), gt_root, ids) if cfg["compare"] else None

    groups = {"all": ids}
    if cfg["folds"]:
        try:
            folds = json.loads(Path(cfg["folds"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"cannot read fold file: {exc}", cfg["folds"])
        groups = {str(k): [i for i in v if i in per] for k, v in folds.items()}
        groups = {k: v for k, v in groups.items() if v}
    fold_reports, other_reports = [], []
    for k, members in groups.items():
        rep = average_reports([per[i] for i in members])
        fold_reports.append({"fold": k, "n_images": len(members), **rep})
        if other is not None:
            other_reports.append(average_reports([other[i] for i in members]))
    summary = aggregate_folds([{v: r[v] for v in ("BV", "MAT", "all")} for r in fold_reports]) \
        if cfg["folds"] else {}
    p_values = {}
    if other is not None:
        # paired over folds when given, otherwise over images
        if cfg["folds"]:
            a_units = [{v: r[v] for v in ("BV", "MAT", "all")} for r in fold_reports]
            b_units = other_reports
        else:
            a_units, b_units = [per[i] for i in ids], [other[i] for i in ids]
        fa = [flatten_metrics(u) for u in a_units]
        fb = [flatten_metrics(u) for u in b_units]
        for key in fa[0]:
            pairs = [(x[key], y[key]) for x, y in zip(fa, fb)
                     if x.get(key) is not None and y.get(key) is not None]
            if len(pairs) >= 2:
                p_values[key] = paired_t_test([p[0] for p in pairs], [p[1] for p in pairs])["p"]
    report = build_report(list(per.values()), fold_reports if cfg["folds"] else None,
                          summary, p_values)
    out = Path(cfg.get("out") or pred_root)
    out.mkdir(parents=True, exist_ok=True)
    write_report(report, out / "metrics.json", out / "metrics.csv" if cfg["csv"] else None)
    a = report["all"]
    print(f"{len(ids)} images: Dice {a['dice']:.4f} JAC {a['jac']:.4f} clDice {a['cldice']:.4f}"
          f" -> {out / 'metrics.json'}")


def _load_one(path):
    from .pipeline import load_sequence
    dirs = _sample_dirs([path])
    if len(dirs) != 1:
        raise UsageError(f"expected a single sample directory, got {len(dirs)}")
    return load_sequence(dirs[0])


def cmd_minip(cfg):
    from .pipeline import minip, resample_temporal, write_pgm
    seq, _ = _load_one(cfg["input"])
    if cfg["target_frames"]:
        seq = resample_temporal(seq, cfg["target_frames"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_pgm(out / "minip.pgm", minip(seq).pixels)
    print(f"MinIP of {seq.T} frames -> {out / 'minip.pgm'}")


def cmd_resample(cfg):
    from .pipeline import minip, resample_temporal, save_sequence
    seq, label = _load_one(cfg["input"])
    res = resample_temporal(seq, cfg["target_frames"])
    save_sequence(cfg["out"], res, label, minip(res))
    print(f"{seq.T} -> {res.T} frames -> {cfg['out']}")


def cmd_verify(cfg):
    from . import verify
    failed = verify.run(cfg["only"])
    if failed:
        raise CliError(EXIT_VERIFY, f"verification failed: {failed}")
    print("all checks passed")


COMMANDS = {"gen-phantom": cmd_gen_phantom, "train": cmd_train, "infer": cmd_infer,
            "eval": cmd_eval, "minip": cmd_minip, "resample": cmd_resample, "verify": cmd_verify}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    try:
        cfg = resolve(args)
        if args.command != "verify":
            write_run_config(cfg, args.command)
        COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"dsaseg: {exc}", file=sys.stderr)
        if exc.code == EXIT_USAGE:
            parser.print_usage(sys.stderr)
        return exc.code
    except NumericalError as exc:
        print(f"dsaseg: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"dsaseg: config mismatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GenerationError, UsageError) as exc:
        print(f"dsaseg: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DataError, OSError) as exc:
        print(f"dsaseg: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
