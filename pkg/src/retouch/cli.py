"""Command-line entry points: train, enhance, eval, export-params.

The policy decides on a 64x64 thumbnail; the chosen filter settings are
then applied to the original image at its native resolution, so one
checkpoint serves every output size.  ``RETOUCH_SEED`` overrides the
configured seed.  All commands exit nonzero on error and only ever
replace output files atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from .agent import agent_forward, greedy_action
from .filters import apply_pipeline, format_action_report
from .image import Image, load_image, psnr, resize_bicubic, save_image, ssim
from .nn import CheckpointError, TrainingError
from .training import (
    STATE_SIZE,
    Dataset,
    TrainConfig,
    load_agent,
    run_training,
    _scan_images,
)

__all__ = ["main", "EnhanceResult", "cmd_train", "cmd_enhance", "cmd_eval",
           "cmd_export_params"]

# every TrainConfig field is exposed as --with-dashes
_CONFIG_FLAGS = {f.name: f.name.replace("_", "-") for f in fields(TrainConfig)}
_CONFIG_FLAGS["generator_steps"] = "steps"


@dataclass(frozen=True)
class EnhanceResult:
    output_path: str
    action: np.ndarray
    report: str


def _atomic_write_text(path, text: str):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _warn(msg: str):
    print(f"warning: {msg}", file=sys.stderr)


def _resolve_config(args) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    for field, flag in _CONFIG_FLAGS.items():
        value = getattr(args, flag.replace("-", "_"))
        if value is not None:
            caster = type(getattr(cfg, field))
            setattr(cfg, field, caster(value))
    env_seed = os.environ.get("RETOUCH_SEED")
    if env_seed is not None:
        try:
            cfg.seed = int(env_seed)
        except ValueError:
            raise ValueError(f"RETOUCH_SEED must be an integer, got {env_seed!r}")
    cfg.validate()
    return cfg


def _greedy_for(net, image: Image) -> np.ndarray:
    state = image
    if image.pixels.shape[:2] != (STATE_SIZE, STATE_SIZE):
        state = resize_bicubic(image, STATE_SIZE, STATE_SIZE)
    q, _ = agent_forward(net, state)
    return greedy_action(q)


# -- commands ----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    dataset = Dataset.from_dirs(args.source, args.target)
    log_path = args.out + ".log.csv"
    rows = []

    def on_step(row):
        rows.append(row)
        print(
            "step {step}: reward={reward:.4f} value_loss={value_loss:.4f} "
            "policy_loss={policy_loss:.4f} critic_loss={critic_loss:.4f}".format(**row),
            flush=True,
        )

    run_training(cfg, dataset, args.out, on_step=on_step)

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["step", "reward", "value_loss", "policy_loss", "critic_loss"])
    for row in rows:
        writer.writerow([
            row["step"],
            f"{row['reward']:.6f}",
            f"{row['value_loss']:.6f}",
            f"{row['policy_loss']:.6f}",
            f"{row['critic_loss']:.6f}",
        ])
    _atomic_write_text(log_path, buf.getvalue())
    print(f"checkpoint written to {args.out} ({len(rows)} steps logged)")
    return 0


def cmd_enhance(args) -> EnhanceResult:
    net, _ = load_agent(args.ckpt)  # reject bad checkpoints before reading the image
    image = load_image(args.input)
    action = _greedy_for(net, image)
    edited = apply_pipeline(image, action)
    save_image(edited, args.out)
    report = format_action_report(action)
    if args.report:
        _atomic_write_text(args.report, report)
    return EnhanceResult(args.out, action, report)


def cmd_eval(args) -> int:
    net, _ = load_agent(args.ckpt)
    in_paths = {os.path.basename(p): p for p in _scan_images(args.input)}
    ref_paths = {os.path.basename(p): p for p in _scan_images(args.ref)}
    for name in sorted(set(ref_paths) - set(in_paths)):
        _warn(f"{name}: present in reference set only, not evaluated")

    writer = csv.writer(sys.stdout)
    writer.writerow(["name", "psnr", "ssim"])
    psnrs, ssims = [], []
    for name in sorted(in_paths):
        if name not in ref_paths:
            _warn(f"{name}: no matching reference, skipped")
            continue
        image = load_image(in_paths[name])
        ref = load_image(ref_paths[name])
        if image.pixels.shape != ref.pixels.shape:
            _warn(
                f"{name}: size mismatch {image.pixels.shape[:2]} vs "
                f"{ref.pixels.shape[:2]}, skipped"
            )
            continue
        edited = apply_pipeline(image, _greedy_for(net, image))
        p, s = psnr(edited, ref), ssim(edited, ref)
        psnrs.append(p)
        ssims.append(s)
        writer.writerow([name, f"{p:.6f}", f"{s:.6f}"])
    if not psnrs:
        raise ValueError("no image pairs were evaluated")
    writer.writerow(["mean", f"{np.mean(psnrs):.6f}", f"{np.mean(ssims):.6f}"])
    return 0


def cmd_export_params(args) -> int:
    net, _ = load_agent(args.ckpt)
    image = load_image(args.input)
    report = format_action_report(_greedy_for(net, image))
    if args.out:
        _atomic_write_text(args.out, report)
    else:
        sys.stdout.write(report)
    return 0


# -- argument plumbing --------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retouch",
        description="Learned photo retouching with interpretable filter settings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a policy on unpaired folders")
    train.add_argument("--source", required=True, help="directory of input photos")
    train.add_argument("--target", required=True, help="directory of exemplar photos")
    train.add_argument("--out", required=True, help="checkpoint output path")
    train.add_argument("--config", help="key = value config file")
    for field, flag in _CONFIG_FLAGS.items():
        train.add_argument(f"--{flag}", default=None, help=f"override {field}")
    train.set_defaults(func=cmd_train)

    enhance = sub.add_parser("enhance", help="apply a trained policy to one image")
    enhance.add_argument("--ckpt", required=True)
    enhance.add_argument("--in", dest="input", required=True)
    enhance.add_argument("--out", required=True)
    enhance.add_argument("--report", help="also write the filter settings as JSON")
    enhance.set_defaults(func=cmd_enhance)

    ev = sub.add_parser("eval", help="PSNR/SSIM of enhanced images vs references")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--in", dest="input", required=True)
    ev.add_argument("--ref", required=True)
    ev.set_defaults(func=cmd_eval)

    export = sub.add_parser("export-params",
                            help="print the filter settings chosen for an image")
    export.add_argument("--ckpt", required=True)
    export.add_argument("--in", dest="input", required=True)
    export.add_argument("--out", help="write JSON here instead of stdout")
    export.set_defaults(func=cmd_export_params)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ValueError, OSError, CheckpointError, TrainingError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
