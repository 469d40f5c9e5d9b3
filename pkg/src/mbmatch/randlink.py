"""Random-link assignment: the matching problem with i.i.d. entries in
place of Euclidean distances, solved by the same assignment core."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matching import solve_assignment
from .sampling import derive_seed
from .scaling import mean_stderr

DISTRIBUTIONS = ("uniform", "exponential")
# bounded-trend window for exponential(1) costs
EXP_MEAN_BAND = (1.0, 1.8)


@dataclass(frozen=True)
class RandomLinkInstance:
    n1: int
    n2: int
    costs: np.ndarray
    distribution: str

    def __post_init__(self):
        if self.distribution not in DISTRIBUTIONS:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}, got {self.distribution!r}")
        c = np.asarray(self.costs, dtype=float)
        if c.shape != (self.n1, self.n2):
            raise ValueError(f"cost matrix shape {c.shape} != ({self.n1}, {self.n2})")
        if c.size and (not np.all(np.isfinite(c)) or c.min() < 0):
            raise ValueError("costs must be finite and non-negative")
        c.flags.writeable = False
        object.__setattr__(self, "costs", c)

    @classmethod
    def sample(cls, n1: int, n2: int, distribution: str, seed: int) -> "RandomLinkInstance":
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        if distribution == "uniform":
            c = rng.random((n1, n2))
        elif distribution == "exponential":
            c = rng.exponential(1.0, (n1, n2))
        else:
            raise ValueError(f"distribution must be one of {DISTRIBUTIONS}, got {distribution!r}")
        return cls(n1, n2, c, distribution)

    def solve(self) -> float:
        return solve_assignment(self.costs)[1]


@dataclass
class RandomLinkReport:
    distribution: str
    n_values: list
    trials: int
    means: list
    stderrs: list
    increasing: bool
    bounded: bool
    passed: bool | None   # None when no assertion applies (uniform costs)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def random_link_means(n: int, distribution: str, trials: int, seed: int) -> np.ndarray:
    """Optimal assignment costs of ``trials`` independent ``n x n`` instances."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return np.array([RandomLinkInstance.sample(n, n, distribution, derive_seed(seed, n, t)).solve()
                     for t in range(trials)])


def random_link_compare(n_values, distribution: str, trials: int, seed: int,
                        band=EXP_MEAN_BAND) -> RandomLinkReport:
    """Mean optimal cost against ``n``.

    For exponential(1) costs the means must increase with ``n`` and stay
    inside ``band``; uniform costs are reported without an assertion.
    """
    n_values = [int(n) for n in n_values]
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("n values must be strictly increasing")
    means, errs = [], []
    for n in n_values:
        m, e = mean_stderr(random_link_means(n, distribution, trials, seed))
        means.append(m)
        errs.append(e)
    increasing = all(b > a for a, b in zip(means, means[1:]))
    lo, hi = band
    bounded = all(lo < m < hi for m in means)
    passed = (increasing and bounded) if distribution == "exponential" else None
    return RandomLinkReport(distribution, n_values, trials, means, errs, increasing, bounded, passed)


def exponential_finite_n_mean(n: int) -> float:
    """Exact mean optimal cost for ``n x n`` exponential(1) entries: sum 1/i^2."""
    return math.fsum(1.0 / (i * i) for i in range(1, n + 1))
