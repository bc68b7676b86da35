"""Command-line entry point.

Set ``HPSBP_THREADS`` to cap the threads used by the numerical libraries.
The exit status is 0 exactly when every check of the experiment passes.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

_threads = os.environ.get("HPSBP_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)


def _print_report(report) -> int:
    print(json.dumps(report.summary, indent=2, default=str))
    for check in report.checks:
        print(check.line())
    for path in report.files:
        print(f"wrote {path}")
    return 0 if report.passed else 1


def verify_operators(pmax: int) -> int:
    from .sbp_core import build_sbp, operator_residuals

    ok = True
    print("degree  monomial_residual  sbp_residual  min_weight")
    for p in range(1, pmax + 1):
        r = operator_residuals(build_sbp(p))
        good = r["monomial_residual"] <= 1e-12 and r["sbp_residual"] <= 1e-14 and r["min_weight"] > 0.0
        ok &= good
        print(f"{p:6d}  {r['monomial_residual']:17.3e}  {r['sbp_residual']:12.3e}  {r['min_weight']:10.3e}"
              f"  {'PASS' if good else 'FAIL'}")
    return 0 if ok else 1


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="hpsbp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "entropy-test", "freestream", "metrics-report", "tgv"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
        sp.add_argument("--output-dir")
    sp = sub.add_parser("converge")
    sp.add_argument("config")
    sp.add_argument("--levels", type=int)
    sp.add_argument("--output-dir")
    sp = sub.add_parser("verify-operators")
    sp.add_argument("--pmax", type=int, default=13)
    args = parser.parse_args(argv)

    if args.command == "verify-operators":
        return verify_operators(args.pmax)

    from .harness import load_config, run, run_convergence

    cfg = load_config(args.config)
    if args.output_dir:
        cfg = dataclasses.replace(cfg, output_dir=args.output_dir)
    if args.command == "converge":
        return _print_report(run_convergence(dataclasses.replace(cfg, experiment="converge"), args.levels))
    if args.command != "run":
        cfg = dataclasses.replace(cfg, experiment=args.command)
    return _print_report(run(cfg))


if __name__ == "__main__":
    sys.exit(main())
