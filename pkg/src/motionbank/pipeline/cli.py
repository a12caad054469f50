"""Command-line surface.

Subcommands: gen-data, train-arm, train-mpm, predict, evaluate, inspect-bank.
Exit codes: 0 success, 1 validation/input error, 2 runtime error.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from ..banks import acb_cell_rows, inspect_cell, stab_cell_rows
from ..errors import CheckpointError, MotionBankError, ValidationError
from ..motiondata import (
    ActionLabel,
    LabeledSample,
    MotionSequence,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .checkpoint import rng_state_of, save_checkpoint
from .config import Config, load_config, validate_config
from .infer import evaluate, predict
from .model import arm_params_of, load_model
from .train import train_arm, train_mpm


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _common(parser):
    parser.add_argument("--config", help="JSON config file (defaults otherwise)")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--out", help="output path")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker cap (current implementation runs 1)")


def _check_jobs(args):
    if getattr(args, "jobs", 1) < 1:
        raise ValidationError(f"--jobs must be >= 1, got {args.jobs}")


def _load_cfg(args):
    cfg = load_config(args.config) if args.config else Config()
    if args.seed is not None:
        cfg.seed = args.seed
        validate_config(cfg)
    return cfg


def _require_out(args, what):
    if not args.out:
        raise ValidationError(f"--out is required for {what}")
    return args.out


def build_parser():
    parser = _Parser(prog="motionbank",
                     description="Action-conditioned motion prediction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic train/test JSONL datasets")
    _common(p)
    p.add_argument("--train-per-class", type=int, default=100)
    p.add_argument("--test-per-class", type=int, default=25)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--transition", type=int, default=4)

    p = sub.add_parser("train-arm", help="train the action classifier")
    _common(p)
    p.add_argument("--data", required=True, help="training JSONL")

    p = sub.add_parser("train-mpm", help="train the prediction model")
    _common(p)
    p.add_argument("--data", required=True, help="training JSONL")
    p.add_argument("--arm", required=True, help="classifier checkpoint")
    p.add_argument("--disable-stab", action="store_true",
                   help="drop the transition bank branch")
    p.add_argument("--disable-acb", action="store_true",
                   help="drop the characteristic bank branch")
    p.add_argument("--disable-aaa", action="store_true",
                   help="fix the fusion weight instead of adapting it")
    p.add_argument("--disable-running-mean", action="store_true",
                   help="use the raw classifier loss as the fusion weight")
    p.add_argument("--top-k", type=int, help="past-action hypotheses per retrieval")

    p = sub.add_parser("predict", help="generate futures for one condition")
    _common(p)
    p.add_argument("--checkpoint", required=True, help="prediction-model checkpoint")
    p.add_argument("--data", required=True, help="JSONL with the conditioning sample")
    p.add_argument("--index", type=int, default=0, help="sample index in --data")
    p.add_argument("--action", type=int, help="override the future action label")
    p.add_argument("--horizon", type=int, help="frames to generate")
    p.add_argument("--samples", type=int, help="number of futures")
    p.add_argument("--trace-alpha", metavar="PATH",
                   help="write the per-step fusion weight series as CSV")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")

    p = sub.add_parser("evaluate", help="compute the metric report")
    _common(p)
    p.add_argument("--checkpoint", required=True, help="prediction-model checkpoint")
    p.add_argument("--eval-arm", required=True, help="held-out classifier checkpoint")
    p.add_argument("--train-data", required=True)
    p.add_argument("--test-data", required=True)

    p = sub.add_parser("inspect-bank", help="dump one bank cell as JSON")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--bank", choices=("stab", "acb"), required=True)
    p.add_argument("--past-action", type=int, default=0)
    p.add_argument("--future-action", type=int, required=True)
    return parser


def cmd_gen_data(args):
    cfg = _load_cfg(args)
    out_dir = _require_out(args, "gen-data")
    os.makedirs(out_dir, exist_ok=True)
    for split, per_class, tag in (
        ("train", args.train_per_class, 0),
        ("test", args.test_per_class, 1),
    ):
        spec = SyntheticSpec(
            classes=cfg.num_actions,
            pose_dim=cfg.pose_dim,
            per_class=per_class,
            past_len=cfg.past_len,
            horizon=cfg.horizon,
            transition=args.transition,
            noise=args.noise,
            seed=int(np.random.default_rng([cfg.seed, tag]).integers(2**31)),
        )
        path = os.path.join(out_dir, f"{split}.jsonl")
        save_dataset(generate_synthetic(spec), path)
        print(f"wrote {path}")
    return 0


def cmd_train_arm(args):
    cfg = _load_cfg(args)
    out = _require_out(args, "train-arm")
    dataset = load_dataset(args.data, num_actions=cfg.num_actions)
    saver = _interval_saver(cfg, "arm", out)
    store, adam, history = train_arm(cfg, dataset, on_epoch=saver)
    save_checkpoint(out, "arm", cfg, store, adam, epoch=cfg.epochs_arm)
    if history:
        print(f"final epoch loss {history[-1]:.6f}")
    print(f"wrote {out}")
    return 0


def cmd_train_mpm(args):
    cfg = _load_cfg(args)
    for flag in ("disable_stab", "disable_acb", "disable_aaa",
                 "disable_running_mean"):
        if getattr(args, flag):
            setattr(cfg, flag, True)
    if args.top_k is not None:
        cfg.top_k = args.top_k
    validate_config(cfg)
    out = _require_out(args, "train-mpm")
    dataset = load_dataset(args.data, num_actions=cfg.num_actions)
    _, arm_store = load_model(args.arm, expect_kind="arm")
    saver = _interval_saver(cfg, "mpm", out)
    store, adam, history = train_mpm(cfg, dataset, arm_params_of(arm_store),
                                     on_epoch=saver)
    save_checkpoint(out, "mpm", cfg, store, adam, epoch=cfg.epochs_mpm)
    if history:
        parts = ", ".join(f"{k}={v:.5f}" for k, v in history[-1].items())
        print(f"final epoch {parts}")
    print(f"wrote {out}")
    return 0


def _interval_saver(cfg, kind, out):
    if cfg.checkpoint_every <= 0:
        return None

    def on_epoch(epoch, store, adam, rng):
        if (epoch + 1) % cfg.checkpoint_every == 0:
            path = f"{out}.ep{epoch + 1}"
            save_checkpoint(path, kind, cfg, store, adam, epoch=epoch + 1,
                            rng_state=rng_state_of(rng))
            print(f"wrote {path}")

    return on_epoch


def cmd_predict(args):
    out = _require_out(args, "predict")
    ckpt, store = load_model(args.checkpoint, expect_kind="mpm")
    cfg = _merged_run_config(ckpt.config, args)
    dataset = load_dataset(args.data, num_actions=cfg.num_actions)
    if not 0 <= args.index < len(dataset):
        raise ValidationError(
            f"--index {args.index} outside dataset of {len(dataset)} samples"
        )
    sample = dataset[args.index]
    action = args.action if args.action is not None else sample.future_action.index
    seqs, alpha = predict(
        store, cfg, sample.past, action,
        horizon=args.horizon, num_samples=args.samples,
        seed=cfg.seed, trace_alpha=bool(args.trace_alpha),
    )
    if args.format == "jsonl":
        generated = [
            LabeledSample(
                past=sample.past,
                future=s,
                past_action=sample.past_action,
                future_action=ActionLabel(action, cfg.num_actions),
            )
            for s in seqs
        ]
        save_dataset(generated, out)
    else:
        with open(out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["sample", "frame"] + [f"c{i}" for i in range(cfg.pose_dim)]
            )
            for g, s in enumerate(seqs):
                for t, row in enumerate(s.frames):
                    writer.writerow([g, t] + [repr(float(v)) for v in row])
    print(f"wrote {out}")
    if args.trace_alpha:
        _write_alpha_csv(args.trace_alpha, alpha)
        print(f"wrote {args.trace_alpha}")
    return 0


def _write_alpha_csv(path, alpha):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample", "step", "alpha"])
        if alpha is None:
            return
        for g in range(alpha.shape[0]):
            for t in range(alpha.shape[1]):
                writer.writerow([g, t, repr(float(alpha[g, t]))])


_ARCH_FIELDS = (
    "pose_dim", "num_actions", "latent_dim", "hidden_dim",
    "stab_tuples", "acb_tuples", "key_dim", "value_dim", "fused_dim",
    "bank_mlp_hidden", "disable_stab", "disable_acb",
)


def _merged_run_config(ckpt_cfg, args):
    """Inference config: checkpoint's, optionally overlaid by a compatible --config."""
    cfg = ckpt_cfg
    if args.config:
        cfg = load_config(args.config)
        bad = [f for f in _ARCH_FIELDS
               if getattr(cfg, f) != getattr(ckpt_cfg, f)]
        if bad:
            raise ValidationError(
                "--config disagrees with the checkpoint on architecture "
                "fields: " + ", ".join(bad)
            )
    if args.seed is not None:
        cfg.seed = args.seed
    validate_config(cfg)
    return cfg


def cmd_evaluate(args):
    out = _require_out(args, "evaluate")
    ckpt, store = load_model(args.checkpoint, expect_kind="mpm")
    cfg = _merged_run_config(ckpt.config, args)
    _, eval_store = load_model(args.eval_arm, expect_kind="arm")
    train_set = load_dataset(args.train_data, num_actions=cfg.num_actions)
    test_set = load_dataset(args.test_data, num_actions=cfg.num_actions)
    report = evaluate(store, cfg, eval_store, train_set, test_set, seed=cfg.seed)
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"acc={report['acc']:.4f} fid_train={report['fid_train']:.4f} "
          f"fid_test={report['fid_test']:.4f} div={report['div']:.4f} "
          f"div_w={report['div_w']:.4f}")
    print(f"wrote {out}")
    return 0


def cmd_inspect_bank(args):
    ckpt, store = load_model(args.checkpoint, expect_kind="mpm")
    cfg = ckpt.config
    if args.bank == "stab":
        if cfg.disable_stab:
            raise ValidationError("this checkpoint was trained without the transition bank")
        rows = stab_cell_rows(args.past_action, args.future_action,
                              cfg.num_actions, cfg.stab_tuples)
    else:
        if cfg.disable_acb:
            raise ValidationError("this checkpoint was trained without the characteristic bank")
        rows = acb_cell_rows(args.future_action, cfg.num_actions, cfg.acb_tuples)
    dump = inspect_cell(store, args.bank, np.asarray(rows).reshape(-1))
    dump["bank"] = args.bank
    dump["cell"] = (
        {"past_action": args.past_action, "future_action": args.future_action}
        if args.bank == "stab"
        else {"future_action": args.future_action}
    )
    blob = json.dumps(dump, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(blob)
            fh.write("\n")
        print(f"wrote {args.out}")
    else:
        print(blob)
    return 0


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-arm": cmd_train_arm,
    "train-mpm": cmd_train_mpm,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "inspect-bank": cmd_inspect_bank,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check_jobs(args)
        return _COMMANDS[args.command](args)
    except (ValidationError, CheckpointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except MotionBankError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
