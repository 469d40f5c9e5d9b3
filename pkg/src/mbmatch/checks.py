"""Monte Carlo checks of the inequalities behind the almost-sure limit.

Each check returns a report whose ``passed`` flag is decided at three
standard errors (or per instance, where the inequality is deterministic).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .matching import solve_exact
from .sampling import PointCloud, derive_seed
from .scaling import mean_stderr, run_map, sample_lengths, size_seed

# slack for per-instance deterministic inequalities (float rounding only)
INSTANCE_TOL = 1e-9

DEFAULT_T_GRID = (0.005, 0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0)


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass
class PoissonDiscrepancyReport:
    lam: float
    trials: int
    mean: float
    stderr: float
    bound: float            # sqrt(2 lambda)
    normal_approx: float    # 2 sqrt(lambda / pi), large-lambda value of E|n1 - n2|
    passed: bool

    def to_dict(self):
        return asdict(self)


def check_poisson_discrepancy(lam: float, trials: int, seed: int) -> PoissonDiscrepancyReport:
    """E|n1 - n2| <= sqrt(2 lambda) for independent Poisson(lambda) counts."""
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    counts = _generator(derive_seed(seed, 5)).poisson(lam, size=(trials, 2))
    diff = np.abs(counts[:, 0] - counts[:, 1]).astype(float)
    mean, se = mean_stderr(diff)
    bound = math.sqrt(2 * lam)
    return PoissonDiscrepancyReport(float(lam), trials, mean, se, bound,
                                    2 * math.sqrt(lam / math.pi), mean <= bound + 3 * se)


class MeanCache(dict):
    """Poissonised mean estimates keyed by ``(dim, N, trials, seed)``."""

    def get_mean(self, dim, N, trials, seed, workers=1):
        key = (dim, float(N), trials, seed)
        if key not in self:
            batch = sample_lengths(dim, "poisson", N, trials, size_seed(seed, dim, N, tag=2), workers)
            self[key] = batch.mean_stderr()
        return self[key]


def subadditivity_increment(dim: int, N: float, m: int) -> float:
    """``2^d sqrt(2 d N) sum_{k=0}^{K} 2^{k(d/2-1)}`` with ``K = floor(log2 m)``."""
    K = int(m).bit_length() - 1
    geo = math.fsum(2.0 ** (k * (dim / 2 - 1)) for k in range(K + 1))
    return 2**dim * math.sqrt(2 * dim * N) * geo


@dataclass
class SubadditivityReport:
    dim: int
    N: float
    m: int
    trials: int
    M_N: float
    M_N_err: float
    M_sub: float            # M(N / m^d)
    M_sub_err: float
    increment: float
    rhs: float
    tolerance: float        # three combined standard errors
    passed: bool

    def to_dict(self):
        return asdict(self)


def check_mean_subadditivity(dim: int, N: float, m: int, trials: int, seed: int,
                             workers: int = 1, cache: MeanCache | None = None) -> SubadditivityReport:
    """M(N) <= m^(d-1) M(N/m^d) + increment, for Poissonised means M."""
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    cache = MeanCache() if cache is None else cache
    M, Me = cache.get_mean(dim, N, trials, seed, workers)
    Ms, Mse = cache.get_mean(dim, N / m**dim, trials, seed, workers)
    scale = m ** (dim - 1)
    inc = subadditivity_increment(dim, N, m)
    rhs = scale * Ms + inc
    tol = 3 * math.hypot(Me, scale * Mse) if m > 1 else 0.0
    return SubadditivityReport(dim, float(N), int(m), trials, M, Me, Ms, Mse, inc, rhs, tol,
                               M <= rhs + tol)


@dataclass
class DepoissonizationReport:
    dim: int
    N: int
    trials: int
    fixed_mean: float
    fixed_err: float
    poisson_mean: float
    poisson_err: float
    bound: float                  # 2 sqrt(2 d N)
    tolerance: float              # three combined standard errors
    coupling_violations: int
    worst_coupling_slack: float   # min over trials of bound - |difference|
    mean_ok: bool
    strict_mean_ok: bool          # without the statistical allowance
    passed: bool

    def to_dict(self):
        return asdict(self)


def check_depoissonization(dim: int, N: int, trials: int, seed: int,
                           workers: int = 1) -> DepoissonizationReport:
    """Fixed-N mean against the Poissonised mean, on coupled samples.

    Trial ``t`` draws ``N1, N2 ~ Poisson(N)`` and two point sequences; the
    fixed instance uses the first ``N`` points of each, the Poisson one the
    first ``N1`` and ``N2``. Per trial the lengths must differ by at most
    ``sqrt(d) (|N1 - N| + |N2 - N|)``.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    base = size_seed(seed, dim, N, tag=3)
    sqd = math.sqrt(dim)

    def one(t):
        rng = _generator(derive_seed(base, t))
        n1, n2 = (int(c) for c in rng.poisson(N, size=2))
        xs = rng.random((max(N, n1), dim))
        ys = rng.random((max(N, n2), dim))
        fixed = solve_exact(PointCloud(xs[:N]), PointCloud(ys[:N])).total_length
        pois = solve_exact(PointCloud(xs[:n1]), PointCloud(ys[:n2])).total_length
        return fixed, pois, sqd * (abs(n1 - N) + abs(n2 - N))

    rows = run_map(one, trials, workers)
    fixed = np.array([r[0] for r in rows])
    pois = np.array([r[1] for r in rows])
    bounds = np.array([r[2] for r in rows])
    slack = bounds - np.abs(fixed - pois)
    violations = int(np.sum(slack < -INSTANCE_TOL))
    fm, fe = mean_stderr(fixed)
    pm, pe = mean_stderr(pois)
    bound = 2 * math.sqrt(2 * dim * N)
    tol = 3 * math.hypot(fe, pe)
    mean_ok = abs(fm - pm) <= bound + tol
    strict = abs(fm - pm) <= bound
    return DepoissonizationReport(dim, N, trials, fm, fe, pm, pe, bound, tol, violations,
                                  float(slack.min()) if trials else 0.0, mean_ok, strict,
                                  mean_ok and violations == 0)


def concentration_bound(dim: int, N: float, t: float) -> float:
    """``2 exp(-N^(1-2/d) t^2 / (8 d))``."""
    return 2.0 * math.exp(-(N ** (1 - 2 / dim)) * t * t / (8 * dim))


@dataclass
class ConcentrationReport:
    dim: int
    N: int
    trials: int
    t_grid: list
    empirical_tail: list
    analytic_bound: list
    tail_stderr: list
    mean_normalized: float
    passed: bool

    def to_dict(self):
        return asdict(self)


def check_concentration(dim: int, N: int, trials: int, t_grid=DEFAULT_T_GRID, seed: int = 0,
                        workers: int = 1, values=None) -> ConcentrationReport:
    """Empirical tail of ``|L_N/N^(1-1/d) - mean|`` against the analytic bound.

    The centre is the empirical mean. Passing ``values`` (raw lengths)
    reuses an existing batch instead of sampling.
    """
    t_grid = sorted(float(t) for t in t_grid)
    if not t_grid or t_grid[0] <= 0:
        raise ValueError("thresholds must be positive")
    if values is None:
        values = sample_lengths(dim, "fixed", N, trials, size_seed(seed, dim, N, tag=4), workers).values
    values = np.asarray(values, dtype=float)
    trials = len(values)
    z = values / N ** (1 - 1 / dim)
    zbar = math.fsum(z) / trials
    dev = np.abs(z - zbar)
    tails, bounds, errs = [], [], []
    for t in t_grid:
        p = float(np.count_nonzero(dev > t)) / trials
        tails.append(p)
        bounds.append(concentration_bound(dim, N, t))
        errs.append(math.sqrt(p * (1 - p) / trials))
    ok = all(p <= b + 3 * e for p, b, e in zip(tails, bounds, errs))
    return ConcentrationReport(dim, N, trials, t_grid, tails, bounds, errs, zbar, ok)
