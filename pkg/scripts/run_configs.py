"""Run every TOML config in a directory and print one status line per check.

    python3 scripts/run_configs.py configs/ --skip bad_trials
"""
import argparse
import sys
import time
from pathlib import Path

from mbmatch.experiments import ConfigError, ExperimentConfig, run


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("directory", type=Path)
    p.add_argument("--skip", nargs="*", default=[], help="config stems to skip")
    p.add_argument("--workers", type=int)
    a = p.parse_args()
    failed = False
    for path in sorted(a.directory.glob("*.toml")):
        if path.stem in a.skip:
            continue
        try:
            cfg = ExperimentConfig.load(path).with_overrides(workers=a.workers)
        except ConfigError as exc:
            print(f"{path.stem}: config error: {exc}")
            failed = True
            continue
        t0 = time.perf_counter()
        man = run(cfg)
        print(f"{path.stem}: {'PASS' if man.passed else 'FAIL'} "
              f"({man.instances} instances, {time.perf_counter() - t0:.1f}s)")
        for name, status in man.checks.items():
            print(f"    {status:7s} {name}")
        failed |= not man.passed
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
