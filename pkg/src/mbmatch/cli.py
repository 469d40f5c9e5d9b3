"""Command-line front end.

Exit status: 0 when every enabled check passes, 1 on a failed check or a
compute error, 2 on a usage or configuration error. Errors are printed to
stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .decimation import recursive_bound_report
from .experiments import SEED_ENV, ConfigError, ExperimentConfig, default_output, dumps, run
from .matching import solve_exact
from .sampling import read_csv
from .selftest import CASES, replay, selftest


def _error(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mbmatch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a TOML config")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--trials", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--output")
    r.add_argument("--csv", action="store_true", default=None, help="also write trials.csv")

    s = sub.add_parser("selftest", help="fast property suite (under a minute)")
    s.add_argument("--seed", type=int)
    s.add_argument("--inject-fault", action="store_true",
                   help="inflate every leaf cost by 10%% (the upper-bound check must fail)")
    s.add_argument("--replay", metavar="CASE:SEED",
                   help=f"rerun one instance; CASE is one of {', '.join(CASES)}")
    s.add_argument("--output", help="write the report to this JSON file")

    v = sub.add_parser("solve", help="exact matching of two point CSV files")
    v.add_argument("x")
    v.add_argument("y")

    d = sub.add_parser("decimate", help="decimation construction on two point CSV files")
    d.add_argument("x")
    d.add_argument("y")
    d.add_argument("--depth", type=int, required=True)
    return p


def _seed_default():
    raw = os.environ.get(SEED_ENV)
    if not raw:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _cmd_run(a) -> int:
    try:
        cfg = ExperimentConfig.load(a.config).with_overrides(
            seed=a.seed, trials=a.trials, workers=a.workers, output=a.output, csv=a.csv)
    except ConfigError as exc:
        return _error("config_error", str(exc), 2)
    try:
        manifest = run(cfg)
    except Exception as exc:
        return _error("compute_error", f"{type(exc).__name__}: {exc}", 1)
    out = default_output(cfg)
    print(json.dumps({"output": str(out), "passed": manifest.passed, "checks": manifest.checks},
                     sort_keys=True))
    return 0 if manifest.passed else 1


def _cmd_selftest(a) -> int:
    try:
        seed = a.seed if a.seed is not None else _seed_default()
    except ConfigError as exc:
        return _error("config_error", str(exc), 2)
    if a.replay:
        name, _, raw = a.replay.partition(":")
        if name not in CASES or not raw.isdigit():
            return _error("usage_error", f"--replay expects CASE:SEED with CASE in {list(CASES)}", 2)
        ok, detail = replay(name, int(raw), a.inject_fault)
        print(dumps({"case": name, "seed": int(raw), "passed": ok, "detail": detail}), end="")
        return 0 if ok else 1
    rep = selftest(seed, a.inject_fault)
    text = dumps(rep.to_dict())
    if a.output:
        with open(a.output, "w") as fh:
            fh.write(text)
    print(text, end="")
    return 0 if rep.passed else 1


def _read_pair(a):
    x = read_csv(a.x)
    y = read_csv(a.y, dim=x.dim)
    return x, y


def _cmd_solve(a) -> int:
    try:
        x, y = _read_pair(a)
    except (OSError, ValueError) as exc:
        return _error("input_error", str(exc), 2)
    m = solve_exact(x, y)
    print(dumps({"total_length": m.total_length, "pairs": m.pairs,
                 "unmatched_x": m.unmatched_x, "unmatched_y": m.unmatched_y}), end="")
    return 0


def _cmd_decimate(a) -> int:
    try:
        x, y = _read_pair(a)
        if a.depth < 0:
            raise ValueError("depth must be >= 0")
        res, rep = recursive_bound_report(x, y, a.depth)
    except (OSError, ValueError) as exc:
        return _error("input_error", str(exc), 2)
    print(dumps({"decimation": res.to_dict(), "bounds": rep.to_dict()}), end="")
    return 0 if rep.ok else 1


def main(argv=None) -> int:
    a = _parser().parse_args(argv)
    return {"run": _cmd_run, "selftest": _cmd_selftest, "solve": _cmd_solve,
            "decimate": _cmd_decimate}[a.command](a)


if __name__ == "__main__":
    sys.exit(main())
