"""Command-line entry point.

Subcommands: synth, train, eval, ablate, rolling.  Config files are flat
key=value text; --seed overrides the config's seed.  Exit codes: 0 success,
1 usage error, 2 runtime failure.
"""

import argparse
import sys

from .config import (RunConfig, run_config_from_file, synth_config_from_file)
from .data import SynthConfig, load_transactions, save_transactions, synth_dataset
from .trainer import (ablate, evaluate, load_checkpoint, rolling_eval,
                      save_checkpoint, train)


def _run_config(args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.config:
        return run_config_from_file(args.config, overrides)
    return RunConfig(**overrides)


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)


def cmd_synth(args):
    overrides = {"seed": args.seed} if args.seed is not None else None
    if args.config:
        cfg = synth_config_from_file(args.config, overrides)
    else:
        cfg = SynthConfig(**(overrides or {}))
    records = synth_dataset(cfg)
    save_transactions(records, args.out)
    n_pos = sum(1 for r in records if r.label == 1)
    print(f"wrote {len(records)} transactions ({n_pos} fraud) to {args.out}")
    return 0


def cmd_train(args):
    cfg = _run_config(args)
    records = load_transactions(args.data, d_raw=cfg.d_raw)
    result = train(cfg, records)
    save_checkpoint(result.store, cfg, args.out_checkpoint)
    _write(args.metrics_out, result.report.to_text())
    trace_path = args.trace_out or args.metrics_out + ".trace.csv"
    lines = ["epoch,loss,val_auc"]
    lines += [f"{e},{loss!r},{auc!r}" for e, loss, auc in result.trace]
    _write(trace_path, "\n".join(lines) + "\n")
    print(f"best epoch {result.best_epoch}; test {result.report!r}")
    return 0


def cmd_eval(args):
    store, cfg = load_checkpoint(args.checkpoint)
    records = load_transactions(args.data, d_raw=cfg.d_raw)
    report = evaluate(store, cfg, records)
    _write(args.metrics_out, report.to_text())
    print(repr(report))
    return 0


def cmd_ablate(args):
    cfg = _run_config(args)
    records = load_transactions(args.data, d_raw=cfg.d_raw)
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    table = ablate(cfg, records, variants)
    sections = []
    trace = ["variant,auc"]
    for name, report in table.items():
        sections.append(f"[{name}]\n{report.to_text()}")
        trace.append(f"{name},{report.AUC!r}")
    _write(args.out, "\n".join(sections))
    _write(args.out + ".trace.csv", "\n".join(trace) + "\n")
    for name, report in table.items():
        print(f"{name}: {report!r}")
    return 0


def cmd_rolling(args):
    cfg = _run_config(args)
    records = load_transactions(args.data, d_raw=cfg.d_raw)
    reports = rolling_eval(cfg, records)
    sections = []
    trace = ["block,auc"]
    for i, report in enumerate(reports, start=1):
        sections.append(f"[block {i}]\n{report.to_text()}")
        trace.append(f"{i},{report.AUC!r}")
    _write(args.out, "\n".join(sections))
    _write(args.out + ".trace.csv", "\n".join(trace) + "\n")
    for i, report in enumerate(reports, start=1):
        print(f"block {i}: {report!r}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="spoofgraph",
                                     description="conspiracy-spoofing detector")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic transaction file")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a transaction file")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--metrics-out", required=True)
    p.add_argument("--trace-out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a transaction file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--metrics-out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train every variant with one budget")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variants", default="full,no_pseudo,no_ode,no_hetero")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("rolling", help="blockwise predict-merge-retrain study")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_rolling)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems and 0 for --help
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except Exception as exc:                      # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
