"""Command line entry point ``sim``.

    sim run <config> [--out DIR] [--seed N] [--threads N] [--snapshot-every K]
    sim verify <greens|bem|conserve|desing> [--out DIR] [--threads N]
    sim desing-sweep <config> [--out DIR] [--seed N] [--threads N]

``--threads`` sets the numba worker count. It has to be fixed before numba
is imported, so the package is imported lazily after argument parsing.
Results do not depend on it.
"""

from __future__ import annotations

import argparse
import os
import sys

SUITES = ("greens", "bem", "conserve", "desing")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="Plasma-charge simulations in convex 2D domains.")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory (default: $SIM_OUT or ./sim_out)")
    common.add_argument("--threads", type=int, default=None, help="number of numba worker threads")

    r = sub.add_parser("run", parents=[common], help="integrate a configured system")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--snapshot-every", type=int, default=0, help="write particles every K steps")

    v = sub.add_parser("verify", parents=[common], help="run a verification suite")
    v.add_argument("suite", choices=SUITES)

    d = sub.add_parser("desing-sweep", parents=[common], help="blob-to-charge convergence sweep")
    d.add_argument("config")
    d.add_argument("--seed", type=int, default=None)
    return p


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise SystemExit("--threads must be at least 1")
    os.environ["NUMBA_NUM_THREADS"] = str(n)


def _out_dir(args, default: str) -> str:
    return args.out or os.environ.get("SIM_OUT") or default


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _set_threads(args.threads)

    from .errors import ConfigError

    try:
        if args.command == "run":
            from .config import load_config
            from .simulation import run

            config = load_config(args.config)
            if args.seed is not None:
                config = config.with_overrides(seed=args.seed)
            result = run(config, _out_dir(args, "sim_out"), snapshot_every=args.snapshot_every)
            print(f"{result.status}: energy drift {result.summary['energy_drift_rel']:.3e}"
                  + (f" ({result.reason})" if result.reason else ""))
            return result.exit_code
        if args.command == "verify":
            from .verify import run_suite

            report = run_suite(args.suite, _out_dir(args, "sim_verify"))
            for case in report.cases:
                print(f"{'PASS' if case.ok else 'FAIL'} {case.name}: {case.detail}")
            return 0 if report.ok else 1
        if args.command == "desing-sweep":
            from .verify import desing_sweep_from_config

            rows = desing_sweep_from_config(args.config, _out_dir(args, "sim_desing"), seed=args.seed)
            for row in rows:
                print(f"eps={row.epsilon:g} sigma={row.sigma:.4g} sup_p={row.sup_p:.3e} t_eps_hit={row.t_eps_hit}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
