"""Command-line front end: ``hybridsem run|sweep|check``.

Exit codes: 0 success, 1 failed invariant checks, 2 configuration or
validation errors, 3 solver failure (non-finite state).
"""

import argparse
import os
import sys


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hybridsem",
        description="Hybrid CG/DG spectral element solver for 2D linear "
                    "acoustics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH",
                       help="config file (INI sections; see README)")
        p.add_argument("--output", metavar="DIR",
                       help="directory for CSV artifacts "
                            "(overrides [output] dir)")
        p.add_argument("--threads", type=int, metavar="N", default=1,
                       help="BLAS thread count (default 1 for "
                            "deterministic output)")

    common(sub.add_parser(
        "run", help="execute one configured run and print a report"))
    common(sub.add_parser(
        "sweep", help="run once per degree in [sweep] degrees and write a "
                      "convergence table"))
    common(sub.add_parser(
        "check", help="run the invariant suite and print PASS/FAIL lines"))
    return parser


def _set_threads(n):
    for var in ("OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "OMP_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def main(argv=None):
    args = _build_parser().parse_args(argv)
    # thread caps must be exported before numpy loads its BLAS
    _set_threads(max(1, args.threads))

    from . import driver

    overrides = {}
    if args.output is not None:
        overrides[("output", "dir")] = args.output
    try:
        cfg = driver.RunConfig.from_file(args.config, overrides=overrides)
    except driver.ConfigError as exc:
        print(f"hybridsem: config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            report = driver.run(cfg)
            for line in report.lines():
                print(line)
            return 0
        if args.command == "sweep":
            degrees = [int(v) for v in cfg.getfloats("sweep", "degrees")]
            degrees, logs, path = driver.sweep(cfg, degrees)
            print(f"preset {cfg.preset}  mode {cfg.mode}")
            print("N,log10_max_error")
            for n, value in zip(degrees, logs):
                print(f"{n},{value:.6f}")
            if not degrees:
                print("(empty sweep: no degrees configured)")
            if path is not None:
                print(f"table written to {path}")
            return 0
        results = driver.check()
        failed = 0
        for res in results:
            status = "PASS" if res.passed else "FAIL"
            failed += not res.passed
            print(f"{status} {res.name}: {res.detail}")
        return 1 if failed else 0
    except driver.ConfigError as exc:
        print(f"hybridsem: config error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"hybridsem: solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
