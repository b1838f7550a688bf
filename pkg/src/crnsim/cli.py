"""Command-line entry point: ``crnsim --scheme A --out results``."""
import argparse
from dataclasses import replace
import logging
import sys
import time

from ._jit import backend
from .experiments import BUILTIN, ConfigError, builtin_scheme, emit, load_config, run_scheme

log = logging.getLogger("crnsim")


def build_parser():
    p = argparse.ArgumentParser(
        prog="crnsim",
        description="Simulate PU/SU priority queueing networks for cognitive radio scenarios.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scheme", choices=BUILTIN, help="built-in experiment grid")
    src.add_argument("--config", help="key = value scenario file")
    p.add_argument("--seed", type=int, help="base seed (u64)")
    p.add_argument("--reps", type=int, help="replications per grid point")
    p.add_argument("--horizon", type=float, help="simulated seconds per replication")
    p.add_argument("--warmup", type=float, help="warmup as a fraction of the horizon")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("--format", choices=("csv", "plotdata", "both"), default="both")
    p.add_argument("--trace", action="store_true",
                   help="dump the event trace of replication 0 of every grid point")
    p.add_argument("--parallel", type=int, default=1, help="replications run concurrently")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        scheme = builtin_scheme(args.scheme) if args.scheme else load_config(args.config)
        over = {k: v for k, v in (("seed", args.seed), ("reps", args.reps),
                                  ("horizon", args.horizon), ("warmup", args.warmup))
                if v is not None}
        if over.get("reps", 2) < 2 or over.get("horizon", 1) <= 0 or not (
                0 <= over.get("warmup", 0) < 1) or over.get("seed", 0) < 0:
            raise ConfigError("need reps >= 2, horizon > 0, 0 <= warmup < 1, seed >= 0")
        if args.parallel < 1:
            raise ConfigError("--parallel must be >= 1")
        scheme = replace(scheme, **over)
    except (OSError, ConfigError) as exc:
        print(f"crnsim: error: {exc}", file=sys.stderr)
        return 2

    t0 = time.perf_counter()
    log.info("backend %s, %d grid points x %d reps", backend(), len(scheme.grid()), scheme.reps)
    trace_dir = f"{args.out}/traces" if args.trace else None
    rows = run_scheme(scheme, parallel=args.parallel, trace_dir=trace_dir)
    n_points = len(scheme.grid())
    done = len({(r.discipline, r.security, r.c, r.pu_rate, r.su_rate, r.scv_arrival,
                 r.scv_service) for r in rows})
    if not rows:
        print("crnsim: error: every grid point failed", file=sys.stderr)
        return 1
    try:
        paths = emit(rows, args.out, args.format)
    except OSError as exc:
        print(f"crnsim: error: cannot write output: {exc}", file=sys.stderr)
        return 1
    print(f"{done}/{n_points} grid points, {len(rows)} rows, {len(paths)} files in {args.out} "
          f"({time.perf_counter() - t0:.1f} s)")
    return 0 if done == n_points else 1


if __name__ == "__main__":
    sys.exit(main())
