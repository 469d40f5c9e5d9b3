"""Fast property suite for CI: solver oracles, inequality chains at small N
and planted-parameter recovery. Every instance is a pure function of its
own seed, so a failure can be replayed with :func:`replay`.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .decimation import recursive_bound_report, verify_single_split
from .matching import brute_force, solve_exact, sorted_match_1d
from .sampling import Fixed, PointCloud, SampleSpec, derive_seed, sample_pair
from .scaling import FitError, fit_beta


def faulty_leaf_solver(x: PointCloud, y: PointCloud):
    """Exact leaf solver whose reported cost is inflated by 10%."""
    m = solve_exact(x, y)
    m.total_length *= 1.1
    return m


def _rng(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def _pair(seed, dim, n1, n2):
    return sample_pair(SampleSpec(dim, Fixed(n1), seed), SampleSpec(dim, Fixed(n2), seed))


def case_oracle(seed, fault=False):
    """Exact solver against exhaustive search, ``min(N1, N2) <= 6``."""
    r = _rng(seed)
    dim, n1, n2 = int(r.integers(1, 5)), int(r.integers(0, 7)), int(r.integers(0, 7))
    x, y = _pair(seed, dim, n1, n2)
    a, b = solve_exact(x, y).total_length, brute_force(x, y).total_length
    return abs(a - b) <= 1e-9, {"dim": dim, "n1": n1, "n2": n2, "exact": a, "brute_force": b}


def case_sort1d(seed, fault=False):
    r = _rng(seed)
    n = int(r.integers(1, 60))
    x, y = _pair(seed, 1, n, n)
    a, b = sorted_match_1d(x, y).total_length, solve_exact(x, y).total_length
    return abs(a - b) <= 1e-9, {"n": n, "sorted": a, "exact": b}


def case_single_split(seed, fault=False):
    r = _rng(seed)
    dim = int(r.integers(2, 4))
    x, y = _pair(seed, dim, 32, 32)
    rep = verify_single_split(x, y)
    return rep.ok, {"dim": dim, **rep.to_dict()}


def case_dominance(seed, fault=False):
    """exact <= decimation length, K in {0..3}."""
    res = _recursive(seed, fault)
    return res[1].dominance_ok, res[2]


def case_upper_bound(seed, fault=False):
    """decimation length <= leaf optima + per-level discrepancy bound."""
    res = _recursive(seed, fault)
    return res[1].upper_ok and res[1].leftover_law_ok, res[2]


def _recursive(seed, fault):
    r = _rng(seed)
    dim, K = int(r.integers(2, 4)), int(r.integers(0, 4))
    n1, n2 = int(r.integers(8, 65)), int(r.integers(8, 65))
    x, y = _pair(seed, dim, n1, n2)
    solver = faulty_leaf_solver if fault else solve_exact
    res, rep = recursive_bound_report(x, y, K, leaf_solver=solver)
    return res, rep, {"dim": dim, "depth": K, "n1": n1, "n2": n2, **rep.to_dict()}


def case_fit(seed, fault=False):
    """Planted ``beta, c`` recovered from noiseless synthetic means."""
    r = _rng(seed)
    dim = int(r.integers(3, 7))
    beta, c = float(r.uniform(0.3, 1.5)), float(r.uniform(-1, 3))
    sizes = [100 * 2**k for k in range(6)]
    g = 0.5 - 1 / dim
    means = [beta * N ** (1 - 1 / dim) * (1 + c * N**-g) for N in sizes]
    try:
        est = fit_beta(dim, sizes, means, [0.0] * len(sizes))
    except FitError as exc:
        return False, {"dim": dim, "beta": beta, "c": c, "error": str(exc)}
    return abs(est.beta_hat - beta) <= 1e-6 * beta, {"dim": dim, "beta": beta, "c": c,
                                                     "beta_hat": est.beta_hat}


CASES = {
    "oracle_equivalence": (case_oracle, 150),
    "sort_1d": (case_sort1d, 50),
    "single_split_chain": (case_single_split, 30),
    "heuristic_dominance": (case_dominance, 60),
    "recursive_upper_bound": (case_upper_bound, 60),
    "fit_recovery": (case_fit, 20),
}


@dataclass
class SelftestReport:
    seed: int
    fault: bool
    checks: dict = field(default_factory=dict)       # name -> "pass" / "fail"
    failures: dict = field(default_factory=dict)     # name -> list of {seed, detail}
    instances: int = 0
    wall_time_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(v == "pass" for v in self.checks.values())

    def to_dict(self) -> dict:
        return {"seed": self.seed, "fault_injected": self.fault, "checks": self.checks,
                "failures": self.failures, "instances": self.instances,
                "wall_time_s": self.wall_time_s, "passed": self.passed}


def instance_seed(seed: int, name: str, i: int) -> int:
    return derive_seed(seed, list(CASES).index(name), i)


def selftest(seed: int = 0, fault: bool = False, max_failures: int = 5) -> SelftestReport:
    """Run every case; failures keep the instance seed for :func:`replay`."""
    t0 = time.perf_counter()
    rep = SelftestReport(seed, fault)
    for name, (fn, count) in CASES.items():
        bad, n_bad = [], 0
        for i in range(count):
            s = instance_seed(seed, name, i)
            ok, detail = fn(s, fault)
            rep.instances += 1
            if not ok:
                n_bad += 1
                if len(bad) < max_failures:
                    bad.append({"seed": s, "detail": detail})
        rep.checks[name] = "fail" if n_bad else "pass"
        if n_bad:
            rep.failures[name] = {"count": n_bad, "of": count, "examples": bad}
    rep.wall_time_s = time.perf_counter() - t0
    return rep


def replay(name: str, seed: int, fault: bool = False) -> tuple[bool, dict]:
    """Rerun one case on one instance seed."""
    if name not in CASES:
        raise KeyError(f"unknown case {name!r}; choose from {sorted(CASES)}")
    return CASES[name][0](seed, fault)

