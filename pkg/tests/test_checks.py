import math

import pytest

from mbmatch.checks import (DEFAULT_T_GRID, MeanCache, check_concentration,
                            check_depoissonization, check_mean_subadditivity,
                            check_poisson_discrepancy, concentration_bound,
                            subadditivity_increment)


def test_poisson_discrepancy_lambda_100():
    rep = check_poisson_discrepancy(100, 10_000, seed=1)
    # E|n1 - n2| ~ 2 sqrt(lambda / pi) = 11.28 for large lambda
    assert abs(rep.mean - 11.28) < 0.3
    assert rep.bound == pytest.approx(math.sqrt(200))
    assert rep.passed


def test_poisson_discrepancy_small_lambda():
    rep = check_poisson_discrepancy(0.01, 10_000, seed=2)
    # two-term expansion: E|n1 - n2| ~ 2 lambda
    assert abs(rep.mean - 0.02) <= 3 * rep.stderr + 1e-3
    assert rep.passed


def test_poisson_discrepancy_deterministic():
    assert check_poisson_discrepancy(10, 500, seed=3) == check_poisson_discrepancy(10, 500, seed=3)
    with pytest.raises(ValueError):
        check_poisson_discrepancy(0, 10, seed=0)


def test_subadditivity_increment_values():
    # 2^3 sqrt(6 * 512) (1 + 2^(1/2)) for d = 3, m = 2
    assert subadditivity_increment(3, 512, 2) == pytest.approx(8 * math.sqrt(3072) * (1 + math.sqrt(2)))
    assert subadditivity_increment(3, 512, 3) == subadditivity_increment(3, 512, 2)
    assert subadditivity_increment(2, 100, 4) == pytest.approx(4 * math.sqrt(400) * 3)


def test_subadditivity_m1_degenerates():
    rep = check_mean_subadditivity(3, 64, 1, 10, seed=1)
    assert rep.M_N == rep.M_sub and rep.tolerance == 0.0 and rep.passed


def test_subadditivity_small_run_and_cache():
    cache = MeanCache()
    rep = check_mean_subadditivity(3, 128, 2, 40, seed=2, cache=cache)
    assert rep.passed and len(cache) == 2
    check_mean_subadditivity(3, 128, 4, 40, seed=2, cache=cache)
    assert len(cache) == 3
    with pytest.raises(ValueError):
        check_mean_subadditivity(3, 128, 1.5, 10, seed=2)


def test_depoissonization_small():
    rep = check_depoissonization(3, 30, 40, seed=3)
    assert rep.bound == pytest.approx(2 * math.sqrt(180))
    assert rep.coupling_violations == 0 and rep.passed
    assert rep.worst_coupling_slack >= 0


def test_concentration_bound_values():
    assert concentration_bound(3, 1000, 0.5) == pytest.approx(2 * math.exp(-10 * 0.25 / 24))
    assert concentration_bound(3, 1000, 0.5) == pytest.approx(1.802, abs=1e-3)
    assert concentration_bound(3, 1000, 5.0) == pytest.approx(5.9e-5, rel=0.02)
    assert concentration_bound(3, 1000, 1e-9) == pytest.approx(2.0)


def test_concentration_report_shape():
    rep = check_concentration(3, 100, 50, seed=4)
    assert rep.t_grid == sorted(DEFAULT_T_GRID)
    assert all(0 <= p <= 1 for p in rep.empirical_tail)
    assert all(b <= a for a, b in zip(rep.empirical_tail, rep.empirical_tail[1:]))
    assert rep.passed


def test_concentration_reuses_values():
    vals = [10.0, 11.0, 12.0, 13.0]
    rep = check_concentration(3, 8, 0, t_grid=[0.1], values=vals)
    z = [v / 4 for v in vals]
    assert rep.mean_normalized == pytest.approx(sum(z) / 4)
    assert rep.empirical_tail == [1.0]
    with pytest.raises(ValueError):
        check_concentration(3, 8, 0, t_grid=[0.0], values=vals)
