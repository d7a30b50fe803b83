"""Command-line entry point for parameter sweeps.

Example::

    risisac --sweep power_dbm --values 20,25,30 --algorithm both --seeds 20 --out power.csv

Exit status is 1 iff an enabled assertion fails (trace monotonicity always;
oracle dominance with ``--oracle``), 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import load_profile
from .errors import ConfigError
from .harness import SWEEP_VARIABLES, SweepSpec, run_sweep, write_sweep
from .metrics import SENSING_PATHS

log = logging.getLogger("risisac")

_ALGORITHMS = {"sdr-odi": "sdr_odi", "sdr_odi": "sdr_odi", "rg": "rg", "both": "both"}


def _values(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from exc


def _path_sets(text: str) -> tuple:
    # "BTR;RTB;RTR+BTB" -> (("BTR",), ("RTB",), ("RTR", "BTB"))
    sets = tuple(tuple(p.strip().upper() for p in group.split("+")) for group in text.split(";") if group)
    for group in sets:
        bad = [p for p in group if p not in SENSING_PATHS]
        if bad:
            raise argparse.ArgumentTypeError(f"unknown sensing path(s) {bad}; choose from {SENSING_PATHS}")
    return sets


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="risisac", description="RIS-assisted ISAC beamforming sweeps")
    p.add_argument("--profile", help="YAML scenario profile (reference profile if omitted)")
    p.add_argument("--sweep", required=True, choices=SWEEP_VARIABLES, help="variable to sweep")
    p.add_argument("--values", required=True, type=_values, help="comma-separated sweep values")
    p.add_argument("--algorithm", default="sdr-odi", choices=sorted(_ALGORITHMS), help="optimizer(s) to run")
    p.add_argument("--seeds", type=int, default=20, help="Monte-Carlo seeds per value")
    p.add_argument("--first-seed", type=int, default=0)
    p.add_argument("--bits", type=int, help="phase resolution in bits (overrides the profile)")
    p.add_argument("--out", help="CSV output path (stdout if omitted)")
    p.add_argument("--oracle", action="store_true", help="cross-check ODI against exhaustive search")
    p.add_argument("--trace", action="store_true", help="write per-iteration traces next to --out")
    p.add_argument("--timing", action="store_true", help="add wall-clock ms columns")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--paths", type=_path_sets, help="sensing-path sets, e.g. 'BTR;RTB;RTR'")
    p.add_argument("--geometry", choices=("per_seed", "per_point"), default="per_seed",
                   help="redraw positions per seed only, or per seed and sweep point")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        base = load_profile(args.profile)
        if args.bits is not None:
            base = base.replace(phase_bits=args.bits)
        spec = SweepSpec(
            variable=args.sweep, values=args.values, algorithm=_ALGORITHMS[args.algorithm],
            n_seeds=args.seeds, geometry=args.geometry, first_seed=args.first_seed,
            path_sets=args.paths or (SENSING_PATHS,),
        )
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.trace and not args.out:
        print("error: --trace needs --out", file=sys.stderr)
        return 2
    result = run_sweep(spec, base, workers=args.workers, timing=args.timing,
                       oracle=args.oracle, keep_trace=args.trace)
    if args.out:
        write_sweep(result, args.out, timing=args.timing)
    else:
        sys.stdout.write(result.to_csv())
    n_bad = sum(r["status"] != "ok" for r in result.rows)
    if n_bad:
        log.warning("%d row(s) infeasible", n_bad)
    for msg in result.failures:
        print(f"assertion failed: {msg}", file=sys.stderr)
    return 1 if result.failures else 0


if __name__ == "__main__":
    sys.exit(main())
