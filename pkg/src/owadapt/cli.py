"""Command-line entry point.

Subcommands:
  run            full experiment sweep from a JSON config file
  inspect-stream dump one stream batch to CSV for offline inspection
  gradcheck      finite-difference verification of all analytic gradients
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from .errors import ConfigurationError, ValidationError
from .gradcheck import REL_TOL, run_suite
from .harness import ExperimentConfig, emit_results, run_experiment
from .stream import ShiftSchedule, emit_batch, rng_for


def _load_config(args):
    if args.config:
        config = ExperimentConfig.from_file(args.config)
    else:
        config = ExperimentConfig()
    overrides = {}
    if getattr(args, "arms", None):
        overrides["arms"] = tuple(args.arms.split(","))
    if getattr(args, "schedules", None):
        overrides["schedules"] = tuple(args.schedules.split(","))
    if getattr(args, "seeds", None):
        overrides["seeds"] = tuple(range(args.seeds))
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if overrides:
        import dataclasses

        config = dataclasses.replace(config, **overrides)
    return config


def cmd_run(args):
    config = _load_config(args)
    records = run_experiment(config)
    written = emit_results(records, config.out_dir, fmt=args.format)
    for path in written:
        print(path)
    return 0


def cmd_inspect_stream(args):
    config = _load_config(args)
    kind = args.schedule
    schedule = ShiftSchedule(kind, config.world.T, seed=config.seeds[0],
                             flip_is_keep_complement=config.ber_flip_is_keep_complement)
    batch = emit_batch(config.world, schedule, args.t,
                       rng_for(config.seeds[0], "stream", kind, args.t))
    labels, is_unseen = batch.truth()
    writer = csv.writer(sys.stdout)
    writer.writerow(["t"] + [f"x{i}" for i in range(config.world.dim)]
                    + ["truth_label", "is_unseen"])
    for x, y, u in zip(batch.features, labels, is_unseen):
        writer.writerow([batch.t] + [repr(v) for v in x] + [int(y), int(u)])
    return 0


def cmd_gradcheck(args):
    rows = run_suite(n_nets=args.nets, seed=args.seed)
    worst = 0.0
    for n, name, err in rows:
        print(f"net {n:2d}  {name:18s}  max_rel_err {err:.3e}")
        worst = max(worst, err)
    ok = worst < REL_TOL
    print(f"worst {worst:.3e}  tolerance {REL_TOL:.0e}  -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="owadapt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment sweep")
    run.add_argument("--config", help="JSON experiment config file")
    run.add_argument("--arms", help="comma-separated arms (ours,base,ours_no_refine)")
    run.add_argument("--schedules", help="comma-separated schedules (lin,squ,sin,ber)")
    run.add_argument("--seeds", type=int, help="use seeds 0..N-1")
    run.add_argument("--out", help="output directory")
    run.add_argument("--format", choices=["csv", "json"], default="csv")
    run.set_defaults(func=cmd_run)

    ins = sub.add_parser("inspect-stream", help="dump one stream batch as CSV")
    ins.add_argument("--config", help="JSON experiment config file")
    ins.add_argument("--t", type=int, required=True, help="timestep to dump")
    ins.add_argument("--schedule", default="lin")
    ins.set_defaults(func=cmd_inspect_stream)

    gc = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    gc.add_argument("--nets", type=int, default=20)
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ValidationError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
