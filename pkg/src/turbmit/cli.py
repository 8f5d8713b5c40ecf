"""Command-line entry point: simulate | train | restore | evaluate.

Every invocation creates a timestamped run directory under --out-root
containing a resolved-config snapshot (enough to reproduce the run), the
subcommand's outputs, and a MANIFEST file listing the artifacts.

Exit codes: 0 success, 1 validation error, 2 runtime/I-O error.
"""

import argparse
import configparser
import datetime
import json
import os
import sys

from . import iqa, trainer, turbsim
from .trainer import ConfigError


class _UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):   # argparse usage problems are validation errors
        raise _UsageError(message)


def _make_run_dir(out_root, subcommand):
    stamp = datetime.datetime.now().strftime("%Y%m%d_%H%M%S_%f")
    run_dir = os.path.join(out_root, f"run_{stamp}_{subcommand}")
    os.makedirs(run_dir)
    return run_dir


def _write_snapshot(run_dir, section, values):
    parser = configparser.ConfigParser()
    parser[section] = {k: "" if v is None else str(v) for k, v in values.items()}
    with open(os.path.join(run_dir, "resolved_config.ini"), "w") as fh:
        parser.write(fh)


def _write_manifest(run_dir):
    paths = []
    for root, _, files in os.walk(run_dir):
        for name in files:
            rel = os.path.relpath(os.path.join(root, name), run_dir)
            if rel != "MANIFEST":
                paths.append(rel)
    with open(os.path.join(run_dir, "MANIFEST"), "w") as fh:
        fh.write("\n".join(sorted(paths)) + "\n")


def _cmd_simulate(args):
    run_dir = _make_run_dir(args.out_root, "simulate")
    _write_snapshot(run_dir, "simulate", {
        "clean_dir": os.path.abspath(args.clean_dir), "count": args.count,
        "domain": args.domain, "seed": args.seed,
        "corr_length": args.corr_length,
    })
    dataset_dir = os.path.join(run_dir, "dataset")
    manifest = turbsim.build_dataset(
        args.clean_dir, dataset_dir, args.count, args.domain, args.seed,
        corr_length=args.corr_length)
    _write_manifest(run_dir)
    manifest_path = os.path.join(dataset_dir, turbsim.TRAIN_MANIFEST)
    with_clean = sum(1 for r in manifest.records if r.clean_path is not None)
    print(f"wrote {len(manifest.records)} records ({args.domain}, seed {args.seed}, "
          f"{with_clean} with clean paths)")
    print(f"manifest: {manifest_path}")
    return 0


def _parse_overrides(pairs):
    overrides = {}
    for item in pairs or []:
        if "=" not in item:
            raise _UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def _plot_training(run_dir, logs):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    iters = logs["iterations"]
    if iters:
        fig, ax = plt.subplots(figsize=(7, 4))
        xs = [r["iteration"] for r in iters]
        for key in ("total_gen", "total_dis", "dist"):
            ax.plot(xs, [r[key] for r in iters], label=key)
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(run_dir, "losses.png"), dpi=110)
        plt.close(fig)

    epochs = [e for e in logs["epochs"] if "val_psnr" in e]
    if epochs:
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot([e["epoch"] for e in epochs], [e["val_psnr"] for e in epochs],
                marker="o")
        ax.set_xlabel("epoch")
        ax.set_ylabel("held-out PSNR (dB)")
        fig.tight_layout()
        fig.savefig(os.path.join(run_dir, "val_psnr.png"), dpi=110)
        plt.close(fig)


def _cmd_train(args):
    overrides = _parse_overrides(args.set)
    cfg = trainer.load_config(args.config, overrides)
    trainer.validate_config(cfg)
    run_dir = _make_run_dir(args.out_root, "train")
    cfg.out_dir = run_dir
    trainer.save_config(cfg, os.path.join(run_dir, "resolved_config.ini"))

    with open(os.path.join(run_dir, "train_log.jsonl"), "w") as log_fh:
        state, logs = trainer.train(cfg, log_fh=log_fh, verbose=not args.quiet)
    with open(os.path.join(run_dir, "metrics.jsonl"), "w") as fh:
        for rec in logs["epochs"]:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _plot_training(run_dir, logs)
    _write_manifest(run_dir)

    if logs["epochs"]:
        last = logs["epochs"][-1]
        shown = {k: round(v, 4) for k, v in last.items()
                 if k not in ("epoch", "iteration")}
        print(f"final validation: {shown}")
    print(f"run dir: {run_dir}")
    return 0


def _cmd_restore(args):
    state = trainer.load_checkpoint(args.checkpoint)
    run_dir = _make_run_dir(args.out_root, "restore")
    _write_snapshot(run_dir, "restore", {
        "checkpoint": os.path.abspath(args.checkpoint),
        "input_dir": os.path.abspath(args.input_dir),
    })
    restored_dir = os.path.join(run_dir, "restored")
    done, errors = trainer.restore_directory(state, args.input_dir, restored_dir)
    _write_manifest(run_dir)
    print(f"restored {len(done)} frames -> {restored_dir}")
    for err in errors:
        print(f"failed: {err}", file=sys.stderr)
    return 0


def _cmd_evaluate(args):
    run_dir = _make_run_dir(args.out_root, "evaluate")
    _write_snapshot(run_dir, "evaluate", {
        "restored_dir": os.path.abspath(args.restored_dir),
        "reference_dir": os.path.abspath(args.reference_dir)
        if args.reference_dir else None,
    })
    report = iqa.evaluate(args.restored_dir, args.reference_dir)
    iqa.write_report(report, os.path.join(run_dir, "report.csv"),
                     os.path.join(run_dir, "summary.json"))
    _write_manifest(run_dir)
    for err in report.errors:
        print(f"skipped: {err}", file=sys.stderr)
    print(json.dumps(report.summary(), indent=2, default=str))
    return 0


def build_parser():
    parser = _Parser(prog="turbmit",
                     description="Turbulence degradation simulation, "
                                 "restoration training and evaluation.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="fabricate a degraded dataset")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--out-root", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--domain", choices=["synthetic", "proxy_real"],
                   default="synthetic")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corr-length", type=float,
                   default=turbsim.DEFAULT_CORR_LENGTH)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("train", help="train a restoration model")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--out-root", required=True)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("restore", help="restore a directory of frames")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-dir", required=True)
    p.add_argument("--out-root", required=True)
    p.set_defaults(func=_cmd_restore)

    p = sub.add_parser("evaluate", help="score restored frames")
    p.add_argument("--restored-dir", required=True)
    p.add_argument("--reference-dir", default=None)
    p.add_argument("--out-root", required=True)
    p.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (_UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:   # noqa: BLE001 - I/O and runtime failures
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
