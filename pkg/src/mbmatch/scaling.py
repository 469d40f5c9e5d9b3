"""Monte Carlo estimation of mean matching lengths and the scaling constant.

Every trial draws its clouds from substreams derived from ``(seed, trial)``,
so results do not depend on how trials are scheduled across workers, and
means are reduced with ``math.fsum`` to stay order independent.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .decimation import decimation_match
from .matching import solve_exact, sorted_match_1d
from .sampling import Fixed, Poisson, SampleSpec, derive_seed, sample_cloud

MODES = ("fixed", "poisson")
TALAGRAND_RATIO_BAND = (1.0, 2.5)


class TrialError(RuntimeError):
    pass


class FitError(ValueError):
    pass


def cardinality(mode: str, N: float):
    if mode == "fixed":
        if int(N) != N:
            raise ValueError(f"fixed mode needs an integer size, got {N!r}")
        return Fixed(int(N))
    if mode == "poisson":
        return Poisson(float(N))
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def trial_clouds(dim: int, mode: str, N: float, seed: int, trial: int):
    """The two clouds of one trial; ``seed`` is the batch seed."""
    card = cardinality(mode, N)
    x = sample_cloud(SampleSpec(dim, card, derive_seed(seed, trial, 0)))
    y = sample_cloud(SampleSpec(dim, card, derive_seed(seed, trial, 1)))
    return x, y


def run_map(fn: Callable[[int], object], trials: int, workers: int = 1) -> list:
    """``[fn(t) for t in range(trials)]``, optionally on a thread pool.

    The kernels release the GIL, so threads give real parallelism; the output
    order is always trial order.
    """

    def wrapped(t):
        try:
            return fn(t)
        except Exception as exc:
            raise TrialError(f"trial {t}: {exc}") from exc

    if workers <= 1 or trials < 2:
        return [wrapped(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(wrapped, range(trials)))


def run_trials(fn: Callable[[int], float], trials: int, workers: int = 1) -> np.ndarray:
    return np.array(run_map(fn, trials, workers), dtype=float)


def mean_stderr(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 0:
        return 0.0, 0.0
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((values - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def _solve_length(x, y):
    if x.dim == 1 and len(x) == len(y):
        return sorted_match_1d(x, y).total_length
    return solve_exact(x, y).total_length


@dataclass
class TrialBatch:
    dim: int
    N: float
    mode: str
    seed: int
    values: np.ndarray

    @property
    def trials(self) -> int:
        return len(self.values)

    def mean_stderr(self) -> tuple[float, float]:
        return mean_stderr(self.values)

    def csv_rows(self):
        """Rows of ``N,dim,trial,seed,length``; ``seed`` is the batch seed, so
        ``trial_clouds(dim, mode, N, seed, trial)`` replays the instance."""
        for t, v in enumerate(self.values):
            yield (self.N, self.dim, t, self.seed, float(v))


def sample_lengths(dim: int, mode: str, N: float, trials: int, seed: int,
                   workers: int = 1, solver=_solve_length) -> TrialBatch:
    """Optimal lengths of ``trials`` independent instances."""
    cardinality(mode, N)

    def one(t):
        x, y = trial_clouds(dim, mode, N, seed, t)
        return solver(x, y)

    return TrialBatch(dim, N, mode, seed, run_trials(one, trials, workers))


def estimate_mean(dim: int, mode: str, N: float, trials: int, seed: int,
                  workers: int = 1) -> tuple[float, float]:
    """Sample mean and standard error of the optimal matching length."""
    if trials < 2:
        raise ValueError(f"trials must be >= 2, got {trials}")
    return sample_lengths(dim, mode, N, trials, seed, workers).mean_stderr()


def size_seed(seed: int, dim: int, N: float, tag: int = 0) -> int:
    """Batch seed for one ``(dim, N)`` rung of an experiment."""
    return derive_seed(seed, tag, dim, int(round(N * 2**20)))


@dataclass
class ScalingEstimate:
    dim: int
    sizes: list
    means: list
    stderrs: list
    trials: list
    beta_hat: float
    beta_ci: float
    correction: float
    gamma: float
    stabilization: list
    beta_drop_smallest: float | None = None
    chi2: float = 0.0

    @property
    def sensitivity(self) -> float | None:
        """Relative shift of beta when the smallest size is dropped."""
        if self.beta_drop_smallest is None:
            return None
        return abs(self.beta_drop_smallest - self.beta_hat) / abs(self.beta_hat)

    def stabilization_diffs(self) -> list:
        s = self.stabilization
        return [abs(b - a) for a, b in zip(s, s[1:])]

    def stabilizing(self) -> bool | None:
        """Successive ratio differences shrink over the last three rungs."""
        d = self.stabilization_diffs()
        if len(d) < 2:
            return None
        return d[-1] < d[-2]

    def to_dict(self) -> dict:
        return {
            "dim": self.dim, "sizes": list(self.sizes), "means": list(self.means),
            "stderrs": list(self.stderrs), "trials": list(self.trials),
            "beta_hat": self.beta_hat, "beta_ci": self.beta_ci,
            "correction": self.correction, "gamma": self.gamma,
            "stabilization": list(self.stabilization),
            "stabilization_diffs": self.stabilization_diffs(),
            "beta_drop_smallest": self.beta_drop_smallest,
            "sensitivity": self.sensitivity, "chi2": self.chi2,
        }


def _wls(sizes, means, stderrs, dim):
    a = 1.0 - 1.0 / dim
    gamma = 0.5 - 1.0 / dim
    N = np.asarray(sizes, dtype=float)
    y = np.asarray(means, dtype=float)
    se = np.asarray(stderrs, dtype=float)
    w = np.ones_like(y) if np.any(se <= 0) else 1.0 / se**2
    A = np.column_stack([N**a, N ** (a - gamma)])
    sw = np.sqrt(w)
    Aw, yw = A * sw[:, None], y * sw
    coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    if not np.all(np.isfinite(coef)):
        raise FitError("weighted fit did not produce finite coefficients")
    resid = yw - Aw @ coef
    dof = len(y) - 2
    chi2 = float(resid @ resid)
    cov = np.linalg.pinv(Aw.T @ Aw)
    if np.any(se <= 0):
        cov = cov * (chi2 / dof if dof > 0 else 0.0)
    elif dof > 0:
        cov = cov * max(1.0, chi2 / dof)
    beta, b2 = float(coef[0]), float(coef[1])
    return beta, b2, float(1.96 * math.sqrt(max(cov[0, 0], 0.0))), gamma, chi2


def fit_beta(dim: int, sizes: Sequence[float], means: Sequence[float],
             stderrs: Sequence[float], trials: Sequence[int] | None = None,
             min_span: float = 10.0) -> ScalingEstimate:
    """Fit ``mean(N) = beta N^(1-1/d) (1 + c N^-gamma)`` with ``gamma = 1/2 - 1/d``.

    The model is linear in ``(beta, beta*c)`` and is solved by weighted least
    squares (weights ``1/stderr^2``, unit weights if any stderr is zero). The
    95% half-width is inflated by the reduced chi-square when that exceeds 1.
    ``min_span`` is the required ratio of the largest to the smallest size.
    """
    if dim < 3:
        raise FitError(f"the N^(1-1/d) law needs dim >= 3, got {dim}")
    sizes = [float(s) for s in sizes]
    if len(sizes) < 4:
        raise FitError(f"need at least 4 sizes, got {len(sizes)}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise FitError("sizes must be strictly increasing")
    if sizes[-1] < min_span * sizes[0]:
        raise FitError(f"sizes must span a factor of at least {min_span:g}")
    if len(means) != len(sizes) or len(stderrs) != len(sizes):
        raise FitError("sizes, means and stderrs must have equal length")
    beta, b2, ci, gamma, chi2 = _wls(sizes, means, stderrs, dim)
    if not beta > 0:
        raise FitError(f"fitted beta is not positive ({beta})")
    drop = None
    if len(sizes) >= 5:
        drop = _wls(sizes[1:], means[1:], stderrs[1:], dim)[0]
    a = 1.0 - 1.0 / dim
    stab = [m / s**a for s, m in zip(sizes, means)]
    return ScalingEstimate(dim, sizes, [float(m) for m in means], [float(s) for s in stderrs],
                           list(trials) if trials is not None else [],
                           beta, ci, b2 / beta, gamma, stab, drop, chi2)


def beta_scan(dim: int, sizes: Sequence[int], trials, seed: int, mode: str = "fixed",
              workers: int = 1, batches: list | None = None,
              min_span: float = 10.0) -> ScalingEstimate:
    """Estimate the mean at every size and fit the scaling constant."""
    per = _per_size(trials, sizes)
    means, errs = [], []
    for N, T in zip(sizes, per):
        batch = sample_lengths(dim, mode, N, T, size_seed(seed, dim, N), workers)
        if batches is not None:
            batches.append(batch)
        m, e = batch.mean_stderr()
        means.append(m)
        errs.append(e)
    return fit_beta(dim, sizes, means, errs, per, min_span)


def _per_size(trials, sizes) -> list:
    if isinstance(trials, int):
        return [trials] * len(sizes)
    trials = list(trials)
    if len(trials) != len(sizes):
        raise ValueError("per-size trial counts must match the size ladder")
    return trials


def talagrand_scale(dim: int) -> float:
    """Large-dimension asymptote ``sqrt(d / (2 e pi))`` of the constant."""
    return math.sqrt(dim / (2 * math.e * math.pi))


@dataclass
class TalagrandReport:
    dims: list
    betas: list
    scales: list
    ratios: list
    band: tuple

    @property
    def increasing(self) -> bool:
        return all(b > a for a, b in zip(self.betas, self.betas[1:]))

    @property
    def in_band(self) -> bool:
        lo, hi = self.band
        return all(lo <= r <= hi for r in self.ratios)

    @property
    def passed(self) -> bool:
        return all(r > 0 for r in self.ratios) and self.increasing and self.in_band

    def to_dict(self) -> dict:
        return {
            "dims": self.dims, "betas": self.betas,
            "scales": [round(s, 4) for s in self.scales], "ratios": self.ratios,
            "ratio_spread": max(self.ratios) - min(self.ratios), "band": list(self.band),
            "increasing": self.increasing, "in_band": self.in_band, "passed": self.passed,
        }


def talagrand_trend(betas: dict, band=TALAGRAND_RATIO_BAND) -> TalagrandReport:
    """Compare fitted constants with ``sqrt(d/(2 e pi))``, dimension by dimension."""
    if len(betas) < 3:
        raise ValueError("need fitted constants for at least 3 dimensions")
    dims = sorted(betas)
    scales = [talagrand_scale(d) for d in dims]
    vals = [float(betas[d]) for d in dims]
    return TalagrandReport(dims, vals, scales, [b / s for b, s in zip(vals, scales)], tuple(band))


@dataclass
class AnomalousReport:
    dim: int
    sizes: list
    trials: list
    norm_means: list
    norm_vars: list
    normalization: str
    passed: bool | None
    detail: str

    @property
    def skipped(self) -> bool:
        return self.passed is None

    def to_dict(self) -> dict:
        return {
            "dim": self.dim, "sizes": self.sizes, "trials": self.trials,
            "normalization": self.normalization, "norm_means": self.norm_means,
            "norm_vars": self.norm_vars, "passed": self.passed, "skipped": self.skipped,
            "detail": self.detail,
        }


def _sample_var(values) -> float:
    values = np.asarray(values, dtype=float)
    m = math.fsum(values) / len(values)
    return math.fsum((values - m) ** 2) / (len(values) - 1)


def anomalous_scaling_report(dim: int, sizes: Sequence[int], trials, seed: int,
                             workers: int = 1, band: float = 1.5,
                             var_ratio: float = 0.5) -> AnomalousReport:
    """Normalised lengths for d = 1 (by sqrt N) and d = 2 (by sqrt(N ln N)).

    d = 1 passes if Var(L/sqrt N) at the largest size exceeds ``var_ratio``
    times its value at the smallest; d = 2 passes if the normalised means
    stay within a max/min ratio of ``band``. Trend checks are skipped (passed
    is None) unless the sizes span at least a decade.
    """
    if dim not in (1, 2):
        raise ValueError(f"anomalous scaling applies to dim 1 or 2, got {dim}")
    per = _per_size(trials, sizes)
    means, variances = [], []
    for N, T in zip(sizes, per):
        batch = sample_lengths(dim, "fixed", N, T, size_seed(seed, dim, N), workers)
        norm = math.sqrt(N) if dim == 1 else math.sqrt(N * math.log(N))
        z = batch.values / norm
        means.append(math.fsum(z) / len(z))
        variances.append(_sample_var(z))
    label = "sqrt(N)" if dim == 1 else "sqrt(N ln N)"
    if len(sizes) < 2 or sizes[-1] < 10 * sizes[0]:
        return AnomalousReport(dim, list(sizes), per, means, variances, label, None,
                               "insufficient size range for a trend")
    if dim == 1:
        ratio = variances[-1] / variances[0]
        ok = ratio > var_ratio
        detail = f"Var ratio last/first = {ratio:.4f} (need > {var_ratio})"
    else:
        ratio = max(means) / min(means)
        ok = ratio <= band
        detail = f"max/min normalised mean = {ratio:.4f} (need <= {band})"
    return AnomalousReport(dim, list(sizes), per, means, variances, label, bool(ok), detail)


def decimation_depth(N: int, dim: int) -> int:
    """Depth whose leaves hold O(1) points on average."""
    return max(0, int(math.floor(math.log2(max(N, 1)) / dim)))


@dataclass
class DecimationGrowthReport:
    dim: int
    sizes: list
    depths: list
    trials: list
    means: list
    stderrs: list
    exact_means: list
    ratios: list          # mean / (sqrt(N) ln N)
    C: float
    fit_sizes: list
    passed: bool | None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "dim", "sizes", "depths", "trials", "means", "stderrs", "exact_means",
            "ratios", "C", "fit_sizes", "passed")}


def decimation_growth_report(sizes: Sequence[int], trials, seed: int, dim: int = 2,
                             workers: int = 1, with_exact: bool = False) -> DecimationGrowthReport:
    """Mean decimation length against ``C sqrt(N) ln N``.

    ``C`` is fitted as the largest normalised mean over the smaller half of
    the ladder; the check passes if every larger size stays below
    ``C sqrt(N) ln N`` plus three standard errors.
    """
    per = _per_size(trials, sizes)
    means, errs, depths, exact = [], [], [], []
    for N, T in zip(sizes, per):
        K = decimation_depth(N, dim)
        depths.append(K)
        s = size_seed(seed, dim, N, tag=1)

        def one(t, N=N, K=K, s=s):
            x, y = trial_clouds(dim, "fixed", N, s, t)
            return decimation_match(x, y, K).matching.total_length

        m, e = mean_stderr(run_trials(one, T, workers))
        means.append(m)
        errs.append(e)
        if with_exact:
            exact.append(sample_lengths(dim, "fixed", N, T, s, workers).mean_stderr()[0])
    scale = [math.sqrt(N) * math.log(N) for N in sizes]
    ratios = [m / s for m, s in zip(means, scale)]
    half = max(1, len(sizes) // 2)
    C = max(ratios[:half])
    if len(sizes) < 2:
        passed = None
    else:
        passed = all(m <= C * s + 3 * e for m, s, e in zip(means[half:], scale[half:], errs[half:]))
    return DecimationGrowthReport(dim, list(sizes), depths, per, means, errs, exact, ratios, C,
                                  list(sizes[:half]), passed)
