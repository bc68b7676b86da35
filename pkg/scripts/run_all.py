"""Run every experiment config in scripts/configs and print its check lines.

Usage: python scripts/run_all.py [name ...] [--output-root DIR]
"""

import argparse
import dataclasses
import sys
import time
from pathlib import Path

from hpsbp.harness import load_config, run

CONFIGS = Path(__file__).resolve().parent / "configs"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("names", nargs="*", help="config names without .json (default: all)")
    parser.add_argument("--output-root", default="output")
    args = parser.parse_args(argv)
    names = args.names or sorted(p.stem for p in CONFIGS.glob("*.json"))
    failed = []
    for name in names:
        cfg = load_config(CONFIGS / f"{name}.json")
        cfg = dataclasses.replace(cfg, output_dir=str(Path(args.output_root) / name))
        start = time.perf_counter()
        report = run(cfg)
        print(f"[{name}] {time.perf_counter() - start:.0f}s", flush=True)
        for check in report.checks:
            print("  " + check.line(), flush=True)
        if not report.passed:
            failed.append(name)
    if failed:
        print("failed: " + ", ".join(failed))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
