"""Command line entry point: ``fineflow <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .dataset import DatasetFormatError, load_dataset, save_dataset
from .evaluate import (
    DivergenceError,
    evaluate_preset,
    pointwise_error,
    rollout,
    two_seed_divergence_report,
    write_csv,
)
from .parallel import default_workers
from .presets import PRESETS, get_preset
from .training import TrainingDivergedError, train

log = logging.getLogger("fineflow")

EXIT_USAGE = 2
EXIT_DIVERGED = 3


class UsageError(Exception):
    pass


def _load_config(path) -> dict:
    if not path:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return cfg


def resolve_preset(name, config_path=None, scale=None, **flags):
    """Preset, then config-file overrides, then explicit command line flags."""
    try:
        preset = get_preset(name)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    config = _load_config(config_path)
    config_scale = config.pop("scale", 1.0)
    scale = config_scale if scale is None else scale
    try:
        preset = preset.override(**config)
        preset = preset.override(**{k: v for k, v in flags.items() if v is not None})
        return preset.scaled(scale)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _write_loss_csv(path, history) -> None:
    write_csv(path, ["epoch", "mean_loss"], [np.arange(1, len(history) + 1), history])


def _parse_ic(spec: str, preset) -> np.ndarray:
    if spec == "default":
        return preset.default_test_ic()
    if os.path.exists(spec):
        values = np.loadtxt(spec, delimiter=",", ndmin=1).ravel()
    else:
        try:
            values = np.array([float(v) for v in spec.split(",")])
        except ValueError:
            raise UsageError("--ic must be 'default', a file, or comma-separated numbers") from None
    if values.size != preset.dim:
        raise UsageError(f"--ic has {values.size} values, preset {preset.name} needs {preset.dim}")
    return values


# -- subcommands ---------------------------------------------------------------


def cmd_generate(args) -> int:
    preset = resolve_preset(args.preset, args.config, args.scale, r_out=args.r_out)
    ds = preset.generate(seed=args.seed, workers=args.workers)
    save_dataset(ds, args.out)
    print(json.dumps({**ds.summary(), "file": args.out}))
    return 0


def cmd_train(args) -> int:
    preset = resolve_preset(args.preset, args.config, args.scale)
    if args.epochs is not None:
        preset = preset.override(epochs=args.epochs)
    ds = load_dataset(args.data)
    if ds.dim != preset.dim:
        raise UsageError(f"dataset has dimension {ds.dim}, preset {preset.name} needs {preset.dim}")
    cfg = preset.train_config(args.seed, r_out=ds.r_out)
    meta = {"preset": preset.to_dict(), "train": cfg.to_dict(), "data": ds.summary()}
    callbacks = []
    if args.checkpoint_every:
        def periodic(epoch, loss, model):
            if (epoch + 1) % args.checkpoint_every == 0:
                save_checkpoint(model, args.out, {**meta, "epoch": epoch + 1})
        callbacks.append(periodic)
    loss_path = args.loss_csv or os.path.splitext(args.out)[0] + "_loss.csv"
    try:
        model, history = train(preset.init_model(args.seed), ds, cfg, callbacks,
                               log_every=args.log_every)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    save_checkpoint(model, args.out, {**meta, "epoch": cfg.epochs})
    _write_loss_csv(loss_path, history)
    print(json.dumps({"checkpoint": args.out, "loss_csv": loss_path,
                      "final_loss": history[-1] if history else None}))
    return 0


def cmd_predict(args) -> int:
    preset = resolve_preset(args.preset, args.config)
    model, _ = load_checkpoint(args.ckpt)
    x0 = _parse_ic(args.ic, preset)
    steps = preset.predict_steps if args.steps is None else args.steps
    pred = rollout(model, x0, steps)
    ref = preset.reference(x0, steps)
    t = np.arange(steps + 1) * preset.fine_step
    d = len(x0)
    header = (["t"] + [f"pred_x{i + 1}" for i in range(d)] + [f"ref_x{i + 1}" for i in range(d)]
              + ["error"])
    write_csv(args.out, header, [t, *pred.T, *ref.T, pointwise_error(pred, ref)])
    print(json.dumps({"out": args.out, "steps": steps,
                      "final_error": float(pointwise_error(pred[-1], ref[-1]))}))
    return 0


def cmd_evaluate(args) -> int:
    preset = resolve_preset(args.preset, args.config)
    model, _ = load_checkpoint(args.ckpt)
    summary = evaluate_preset(model, preset, n_test=args.n_test, seed=args.seed,
                              n_steps=args.steps, out_dir=args.out)
    print(json.dumps(summary))
    return 0


def cmd_demo_nonunique(args) -> int:
    preset = resolve_preset("pendulum", args.config, args.scale, delta=args.delta)
    seeds = tuple(int(s) for s in args.seeds.split(","))
    if len(seeds) != 2:
        raise UsageError("--seeds takes exactly two comma-separated integers")
    try:
        report = two_seed_divergence_report(preset, seeds, data_seed=args.data_seed,
                                            out_dir=args.out, log_every=args.log_every)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    print(json.dumps({k: report[k] for k in ("preset", "delta", "seeds", "final_losses",
                                             "max_distance")}))
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fineflow", description="Learn fine-scale flow maps from coarse observations."
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    presets = sorted(PRESETS)

    def common(p, scale=True):
        p.add_argument("--preset", required=True, choices=presets)
        p.add_argument("--config", help="JSON file of preset field overrides")
        if scale:
            p.add_argument("--scale", type=float, help="scale sequences and epochs, in (0, 1]")

    p = sub.add_parser("generate", help="synthesize an observation dataset")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r-out", type=int, help="observations per window minus one")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $FINEFLOW_WORKERS or 1)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit a model to a dataset")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="K",
                   help="also write the checkpoint every K epochs")
    p.add_argument("--loss-csv", help="loss history path (default: <out>_loss.csv)")
    p.add_argument("--log-every", type=int, default=0, metavar="K")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="fine-scale rollout from one initial condition")
    common(p, scale=False)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--ic", default="default",
                   help="'default', comma-separated values, or a file of values")
    p.add_argument("--steps", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="error statistics and plot-ready CSV files")
    common(p, scale=False)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n-test", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int, default=2024, help="seed for test initial conditions")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("demo-nonunique", help="train two seeds on the pendulum and compare")
    p.add_argument("--config", help="JSON file of preset field overrides")
    p.add_argument("--scale", type=float, default=0.2)
    p.add_argument("--seeds", default="0,1")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--delta", type=float, help="observation step (default: preset)")
    p.add_argument("--log-every", type=int, default=0, metavar="K")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_demo_nonunique)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if getattr(args, "workers", 0) is None:
        args.workers = default_workers()
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (DatasetFormatError, CheckpointFormatError, DivergenceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
