"""Declarative experiments: TOML config in, JSON report (plus manifest and an
optional per-trial CSV) out.

``report.json`` is a pure function of the resolved config: it carries no
wall time and no worker count, so reruns are byte-identical. Run metadata
lives in ``manifest.json``.
"""
from __future__ import annotations

import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .checks import (DEFAULT_T_GRID, MeanCache, check_concentration, check_depoissonization,
                     check_mean_subadditivity, check_poisson_discrepancy)
from .decimation import MAX_DEPTH_DIM, padded_subdivision, recursive_bound_report, verify_single_split
from .matching import solve_exact
from .randlink import DISTRIBUTIONS, random_link_compare
from .scaling import (MODES, TALAGRAND_RATIO_BAND, FitError, anomalous_scaling_report, beta_scan,
                      decimation_growth_report, sample_lengths, size_seed, talagrand_trend,
                      trial_clouds)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

KINDS = ("beta_scan", "concentration", "subadditivity", "decimation_audit",
         "anomalous_scaling", "random_link")
SEED_ENV = "MBMATCH_SEED"

_KIND_FIELDS = {
    "beta_scan": {"dims", "sizes", "sizes_by_dim", "trials_by_dim", "mode", "ci_tol", "drop_tol",
                  "talagrand_band"},
    "concentration": {"dims", "sizes", "t_grid"},
    "subadditivity": {"dims", "sizes", "m_values", "poisson_lambdas", "poisson_trials",
                      "depoissonization", "depoissonization_trials"},
    "decimation_audit": {"dims", "sizes", "depths", "m_values", "growth_sizes", "growth_trials"},
    "anomalous_scaling": {"dims", "sizes", "band", "var_ratio"},
    "random_link": {"sizes", "distribution"},
}
_COMMON = {"kind", "seed", "trials", "workers", "output", "csv"}


class ConfigError(ValueError):
    """Invalid experiment configuration (exit status 2)."""


@dataclass
class ExperimentConfig:
    kind: str
    trials: object = None             # int, or one count per size
    seed: int = 0
    workers: int | None = None        # None: available parallelism
    output: str | None = None
    csv: bool = False
    dims: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    sizes_by_dim: dict = field(default_factory=dict)
    trials_by_dim: dict = field(default_factory=dict)
    mode: str = "fixed"
    ci_tol: float = 0.05
    drop_tol: float = 0.03
    talagrand_band: list = field(default_factory=lambda: list(TALAGRAND_RATIO_BAND))
    t_grid: list = field(default_factory=lambda: list(DEFAULT_T_GRID))
    m_values: list = field(default_factory=list)
    poisson_lambdas: list = field(default_factory=list)
    poisson_trials: int = 10_000
    depoissonization: list = field(default_factory=list)
    depoissonization_trials: int | None = None
    depths: list = field(default_factory=list)
    growth_sizes: list = field(default_factory=list)
    growth_trials: object = None
    band: float = 1.5
    var_ratio: float = 0.5
    distribution: str = "exponential"

    @classmethod
    def from_dict(cls, raw: dict, env=None) -> "ExperimentConfig":
        raw = dict(raw)
        if "dim" in raw:
            if "dims" in raw:
                raise ConfigError("give either 'dim' or 'dims', not both")
            raw["dims"] = [raw.pop("dim")]
        kind = raw.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"'kind' must be one of {list(KINDS)}, got {kind!r}")
        unknown = sorted(set(raw) - _COMMON - _KIND_FIELDS[kind])
        if unknown:
            raise ConfigError(f"unknown keys for kind {kind!r}: {unknown}")
        if "seed" not in raw:
            env = os.environ if env is None else env
            if env.get(SEED_ENV):
                try:
                    raw["seed"] = int(env[SEED_ENV])
                except ValueError:
                    raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, env=None) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed TOML: {exc}") from None
        return cls.from_dict(raw, env)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        data = asdict(self)
        data.update({k: v for k, v in kw.items() if v is not None})
        cfg = ExperimentConfig(**data)
        cfg.validate()
        return cfg

    # -- validation ---------------------------------------------------------

    def validate(self) -> None:
        _int(self.seed, "seed", 0)
        if self.seed >= 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if self.workers is not None:
            _int(self.workers, "workers", 1)
        if not isinstance(self.csv, bool):
            raise ConfigError("csv must be true or false")
        if self.output is not None and not isinstance(self.output, str):
            raise ConfigError("output must be a path string")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {list(MODES)}, got {self.mode!r}")
        getattr(self, f"_validate_{self.kind}")()

    def _dims(self, allowed=None, describe=""):
        if not isinstance(self.dims, list) or not self.dims:
            raise ConfigError("'dims' (or 'dim') is required")
        for d in self.dims:
            _int(d, "dim", 1)
            if allowed is not None and not allowed(d):
                raise ConfigError(f"dim {d} not allowed for {self.kind} (need {describe})")
        if len(set(self.dims)) != len(self.dims):
            raise ConfigError("dims must be distinct")

    def _trials(self, value, n_sizes, name="trials"):
        if value is None:
            raise ConfigError(f"'{name}' is required")
        if isinstance(value, list):
            if len(value) != n_sizes:
                raise ConfigError(f"'{name}' list must have one entry per size ({n_sizes})")
            for t in value:
                _int(t, name, 2)
        else:
            _int(value, name, 2)

    def ladder(self, dim) -> list:
        return list(self.sizes_by_dim.get(str(dim), self.sizes))

    def trials_for(self, dim):
        return self.trials_by_dim.get(str(dim), self.trials)

    def _validate_beta_scan(self):
        self._dims(lambda d: d >= 3, "dim >= 3")
        _str_int_keys(self.sizes_by_dim, "sizes_by_dim", self.dims)
        _str_int_keys(self.trials_by_dim, "trials_by_dim", self.dims)
        for d in self.dims:
            lad = self.ladder(d)
            _ladder(lad, f"sizes for dim {d}", integer=self.mode == "fixed", minimum=1)
            if len(lad) < 4:
                raise ConfigError(f"dim {d}: the fit needs at least 4 sizes")
            self._trials(self.trials_for(d), len(lad))
        for name in ("ci_tol", "drop_tol"):
            _pos(getattr(self, name), name)
        _band(self.talagrand_band, "talagrand_band")

    def _validate_concentration(self):
        self._dims()
        _ladder(self.sizes, "sizes", integer=True, minimum=1)
        self._trials(self.trials, len(self.sizes))
        if isinstance(self.trials, list):
            raise ConfigError("concentration takes a single trial count")
        if not self.t_grid or any(not _is_num(t) or t <= 0 for t in self.t_grid):
            raise ConfigError("t_grid must be a non-empty list of positive numbers")

    def _validate_subadditivity(self):
        self._dims()
        _ladder(self.sizes, "sizes", integer=False, minimum=0)
        if self.sizes and not self.m_values:
            raise ConfigError("'m_values' is required when 'sizes' is given")
        for m in self.m_values:
            _int(m, "m", 1)
        if self.sizes:
            self._trials(self.trials, 1)
            if isinstance(self.trials, list):
                raise ConfigError("subadditivity takes a single trial count")
        for lam in self.poisson_lambdas:
            _pos(lam, "poisson lambda")
        _int(self.poisson_trials, "poisson_trials", 2)
        for pair in self.depoissonization:
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ConfigError("depoissonization entries must be [dim, N] pairs")
            _int(pair[0], "depoissonization dim", 1)
            _int(pair[1], "depoissonization N", 1)
        if self.depoissonization:
            t = self.depoissonization_trials if self.depoissonization_trials is not None else self.trials
            self._trials(t, 1, "depoissonization_trials")
            if isinstance(t, list):
                raise ConfigError("depoissonization takes a single trial count")
        if not (self.sizes or self.poisson_lambdas or self.depoissonization):
            raise ConfigError("subadditivity needs sizes, poisson_lambdas or depoissonization")

    def _validate_decimation_audit(self):
        self._dims()
        _ladder(self.sizes, "sizes", integer=True, minimum=0)
        if self.sizes:
            self._trials(self.trials, 1)
            if isinstance(self.trials, list):
                raise ConfigError("decimation_audit takes a single instance count")
        if self.sizes and not (self.depths or self.m_values):
            raise ConfigError("'depths' or 'm_values' is required when 'sizes' is given")
        for K in self.depths:
            _int(K, "depth", 0)
            for d in self.dims:
                if K * d > MAX_DEPTH_DIM:
                    raise ConfigError(f"depth {K} in dim {d} exceeds depth*dim <= {MAX_DEPTH_DIM}")
        for m in self.m_values:
            _int(m, "m", 1)
            for d in self.dims:
                if m.bit_length() * d > MAX_DEPTH_DIM:
                    raise ConfigError(f"m={m} in dim {d} exceeds the depth guard")
        if self.growth_sizes:
            _ladder(self.growth_sizes, "growth_sizes", integer=True, minimum=2)
            self._trials(self.growth_trials, len(self.growth_sizes), "growth_trials")
        if not (self.sizes or self.growth_sizes):
            raise ConfigError("decimation_audit needs sizes or growth_sizes")

    def _validate_anomalous_scaling(self):
        self._dims(lambda d: d in (1, 2), "dim 1 or 2")
        _ladder(self.sizes, "sizes", integer=True, minimum=2)
        self._trials(self.trials, len(self.sizes))
        _pos(self.band, "band")
        _pos(self.var_ratio, "var_ratio")

    def _validate_random_link(self):
        _ladder(self.sizes, "sizes", integer=True, minimum=1)
        self._trials(self.trials, 1)
        if isinstance(self.trials, list):
            raise ConfigError("random_link takes a single trial count")
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(f"distribution must be one of {list(DISTRIBUTIONS)}")

    def echo(self) -> dict:
        """Resolved config minus the fields that must not affect results."""
        keep = (_COMMON | _KIND_FIELDS[self.kind]) - {"workers", "output"}
        return {k: v for k, v in asdict(self).items() if k in keep}


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _int(v, name, minimum):
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {v!r}")


def _pos(v, name):
    if not _is_num(v) or v <= 0:
        raise ConfigError(f"{name} must be a positive number, got {v!r}")


def _band(v, name):
    if not (isinstance(v, list) and len(v) == 2 and all(_is_num(b) for b in v) and 0 <= v[0] < v[1]):
        raise ConfigError(f"{name} must be [low, high] with 0 <= low < high")


def _ladder(sizes, name, integer, minimum):
    if not isinstance(sizes, list) or not sizes:
        raise ConfigError(f"'{name}' must be a non-empty list")
    for s in sizes:
        if integer:
            _int(s, name, minimum)
        elif not _is_num(s) or s <= minimum:
            raise ConfigError(f"{name} entries must be numbers > {minimum}, got {s!r}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError(f"'{name}' must be strictly increasing")


def _str_int_keys(table, name, dims):
    if not isinstance(table, dict):
        raise ConfigError(f"'{name}' must be a table keyed by dimension")
    for k in table:
        if not k.isdigit() or int(k) not in dims:
            raise ConfigError(f"'{name}' key {k!r} is not one of the configured dims")


# -- results ----------------------------------------------------------------

class Checks(dict):
    """Check name -> ``"pass"`` / ``"fail"`` / ``"skipped"``."""

    def add(self, name: str, ok) -> None:
        if name in self:
            raise KeyError(f"duplicate check {name!r}")
        self[name] = "skipped" if ok is None else ("pass" if ok else "fail")

    @property
    def passed(self) -> bool:
        return all(v != "fail" for v in self.values())


@dataclass
class RunManifest:
    config: dict
    version: str
    instances: int
    wall_time_s: float
    checks: dict
    passed: bool
    files: list

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class _Run:
    cfg: ExperimentConfig
    workers: int
    checks: Checks = field(default_factory=Checks)
    instances: int = 0
    batches: list = field(default_factory=list)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    """Byte-stable JSON: sorted keys, shortest round-trip floats."""
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _total(trials, n):
    return sum(trials) if isinstance(trials, list) else trials * n


def _run_beta_scan(r: _Run) -> dict:
    cfg, out, betas = r.cfg, {}, {}
    for d in cfg.dims:
        lad, trials = cfg.ladder(d), cfg.trials_for(d)
        try:
            # short ladders are fitted too; the report flags whether they span a decade
            est = beta_scan(d, lad, trials, cfg.seed, cfg.mode, r.workers, r.batches, min_span=1.0)
        except FitError as exc:
            out[str(d)] = {"error": str(exc)}
            r.checks.add(f"d{d}.fit", False)
            continue
        finally:
            r.instances += _total(trials, len(lad))
        betas[d] = est.beta_hat
        out[str(d)] = {**est.to_dict(), "decade_span": lad[-1] >= 10 * lad[0]}
        r.checks.add(f"d{d}.beta_positive", est.beta_hat > 0)
        r.checks.add(f"d{d}.ratios_positive", all(s > 0 for s in est.stabilization))
        r.checks.add(f"d{d}.ci_within_tol", est.beta_ci < cfg.ci_tol * est.beta_hat)
        r.checks.add(f"d{d}.stabilizing", est.stabilizing())
        sens = est.sensitivity
        r.checks.add(f"d{d}.drop_smallest_within_tol", None if sens is None else sens < cfg.drop_tol)
    res = {"by_dim": out}
    if len(betas) >= 3:
        tal = talagrand_trend(betas, tuple(cfg.talagrand_band))
        res["talagrand"] = tal.to_dict()
        r.checks.add("talagrand.increasing", tal.increasing)
        r.checks.add("talagrand.in_band", tal.in_band)
    return res


def _run_concentration(r: _Run) -> dict:
    cfg, out = r.cfg, {}
    for d in cfg.dims:
        for N in cfg.sizes:
            batch = sample_lengths(d, "fixed", N, cfg.trials, size_seed(cfg.seed, d, N, tag=4), r.workers)
            r.batches.append(batch)
            r.instances += cfg.trials
            rep = check_concentration(d, N, cfg.trials, cfg.t_grid, cfg.seed, values=batch.values)
            out[f"d{d}.N{N}"] = rep.to_dict()
            r.checks.add(f"concentration.d{d}.N{N}", rep.passed)
    return out


def _run_subadditivity(r: _Run) -> dict:
    cfg, out = r.cfg, {"subadditivity": {}, "poisson_discrepancy": {}, "depoissonization": {}}
    cache = MeanCache()
    for d in cfg.dims:
        for N in cfg.sizes:
            for m in cfg.m_values:
                rep = check_mean_subadditivity(d, N, m, cfg.trials, cfg.seed, r.workers, cache)
                name = f"d{d}.N{_fmt(N)}.m{m}"
                out["subadditivity"][name] = rep.to_dict()
                r.checks.add(f"subadditivity.{name}", rep.passed)
    r.instances += len(cache) * (cfg.trials or 0)
    for lam in cfg.poisson_lambdas:
        rep = check_poisson_discrepancy(lam, cfg.poisson_trials, cfg.seed)
        out["poisson_discrepancy"][_fmt(lam)] = rep.to_dict()
        r.checks.add(f"poisson_discrepancy.lambda{_fmt(lam)}", rep.passed)
    trials = cfg.depoissonization_trials if cfg.depoissonization_trials is not None else cfg.trials
    for d, N in cfg.depoissonization:
        rep = check_depoissonization(d, N, trials, cfg.seed, r.workers)
        r.instances += 2 * trials
        name = f"d{d}.N{N}"
        out["depoissonization"][name] = rep.to_dict()
        r.checks.add(f"depoissonization.{name}.mean", rep.mean_ok)
        r.checks.add(f"depoissonization.{name}.coupling", rep.coupling_violations == 0)
    return out


def _fmt(v) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


class _Tally:
    def __init__(self):
        self.n = 0
        self.failures = []
        self.worst = math.inf   # smallest relative slack seen

    def add(self, ok: bool, slack: float, where: dict):
        self.n += 1
        self.worst = min(self.worst, slack)
        if not ok and len(self.failures) < 10:
            self.failures.append(where)

    def to_dict(self):
        return {"instances": self.n, "failures": self.failures,
                "min_relative_slack": self.worst if self.n else None}


def _run_decimation_audit(r: _Run) -> dict:
    cfg, out = r.cfg, {}
    for d in cfg.dims:
        for N in cfg.sizes:
            s = size_seed(cfg.seed, d, N, tag=6)
            eq3 = {K: _Tally() for K in cfg.depths}
            pad = {m: _Tally() for m in cfg.m_values}
            split, ratios = _Tally(), {K: [] for K in cfg.depths}
            for t in range(cfg.trials):
                x, y = trial_clouds(d, cfg.mode, N, s, t)
                exact = solve_exact(x, y).total_length
                where = {"seed": s, "trial": t}
                for K in cfg.depths:
                    res, rep = recursive_bound_report(x, y, K, exact=exact)
                    eq3[K].add(rep.ok, _slack(rep.heuristic, rep.bound), where)
                    if exact > 0:
                        ratios[K].append(rep.heuristic / exact)
                sp = verify_single_split(x, y)
                split.add(sp.ok, _slack(sp.middle, sp.crude), where)
                for m in cfg.m_values:
                    _, rep = padded_subdivision(x, y, m)
                    pad[m].add(rep.ok, _slack(rep.heuristic, rep.bound), where)
            r.instances += cfg.trials
            key = f"d{d}.N{N}"
            out[key] = {
                "recursive": {str(K): {**v.to_dict(), "mean_heuristic_over_exact":
                                       (math.fsum(ratios[K]) / len(ratios[K])) if ratios[K] else None}
                              for K, v in eq3.items()},
                "single_split": split.to_dict(),
                "padded": {str(m): v.to_dict() for m, v in pad.items()},
            }
            for K, v in eq3.items():
                r.checks.add(f"recursive.{key}.K{K}", not v.failures)
            r.checks.add(f"single_split.{key}", not split.failures)
            for m, v in pad.items():
                r.checks.add(f"padded.{key}.m{m}", not v.failures)
    if cfg.growth_sizes:
        for d in cfg.dims:
            rep = decimation_growth_report(cfg.growth_sizes, cfg.growth_trials, cfg.seed, d, r.workers)
            r.instances += _total(cfg.growth_trials, len(cfg.growth_sizes))
            out[f"growth.d{d}"] = rep.to_dict()
            r.checks.add(f"growth.d{d}", rep.passed)
    return out


def _slack(value, bound) -> float:
    return (bound - value) / max(abs(bound), 1e-300) if bound else 0.0


def _run_anomalous_scaling(r: _Run) -> dict:
    cfg, out = r.cfg, {}
    for d in cfg.dims:
        rep = anomalous_scaling_report(d, cfg.sizes, cfg.trials, cfg.seed, r.workers,
                                       cfg.band, cfg.var_ratio)
        r.instances += _total(cfg.trials, len(cfg.sizes))
        out[str(d)] = rep.to_dict()
        r.checks.add(f"anomalous.d{d}", rep.passed)
    return out


def _run_random_link(r: _Run) -> dict:
    cfg = r.cfg
    rep = random_link_compare(cfg.sizes, cfg.distribution, cfg.trials, cfg.seed)
    r.instances += cfg.trials * len(cfg.sizes)
    r.checks.add(f"random_link.{cfg.distribution}", rep.passed)
    return rep.to_dict()


_RUNNERS = {k: globals()[f"_run_{k}"] for k in KINDS}


def execute(cfg: ExperimentConfig) -> tuple[dict, _Run]:
    """Run an experiment in memory; returns ``(report, run state)``."""
    workers = cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)
    r = _Run(cfg, workers)
    results = _RUNNERS[cfg.kind](r)
    report = {"kind": cfg.kind, "version": __version__, "config": cfg.echo(),
              "results": results, "checks": dict(r.checks), "passed": r.checks.passed}
    return report, r


def default_output(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output) if cfg.output else Path("results") / cfg.kind


def run(cfg: ExperimentConfig) -> RunManifest:
    """Execute ``cfg`` and write ``report.json``, ``manifest.json`` and, if
    requested, ``trials.csv`` into the output directory."""
    t0 = time.perf_counter()
    report, r = execute(cfg)
    outdir = default_output(cfg)
    outdir.mkdir(parents=True, exist_ok=True)
    files = ["report.json"]
    (outdir / "report.json").write_text(dumps(report))
    if cfg.csv and r.batches:
        files.append("trials.csv")
        write_trials_csv(r.batches, outdir / "trials.csv")
    echo = asdict(cfg)
    echo["workers"] = r.workers
    echo["output"] = str(outdir)
    manifest = RunManifest(echo, __version__, r.instances, time.perf_counter() - t0,
                           dict(r.checks), r.checks.passed, files + ["manifest.json"])
    (outdir / "manifest.json").write_text(dumps(manifest.to_dict()))
    return manifest


def write_trials_csv(batches, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "dim", "trial", "seed", "length"])
        for b in batches:
            for N, dim, t, seed, length in b.csv_rows():
                w.writerow([_fmt(N), dim, t, seed, repr(length)])
