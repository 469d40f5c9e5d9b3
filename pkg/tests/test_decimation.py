import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mbmatch.decimation import (build_tree, cell_address, decimation_match, padded_subdivision,
                                recursive_bound_report, verify_single_split)
from mbmatch.matching import solve_exact
from mbmatch.sampling import Fixed, PointCloud, SampleSpec, derive_seed, sample_pair


def pc(*rows):
    return PointCloud(np.array(rows, dtype=float).reshape(len(rows), -1))


def cloud_pair(dim, n1, n2, seed):
    return sample_pair(SampleSpec(dim, Fixed(n1), seed), SampleSpec(dim, Fixed(n2), seed))


def test_root_only_tree():
    x, y = cloud_pair(2, 7, 4, 1)
    t = build_tree(x, y, 0)
    assert t.levels[0] == {(0, 0): t.cell(0, (0, 0))}
    assert (t.cell(0, (0, 0)).n1, t.cell(0, (0, 0)).n2) == (7, 4)


def test_line_example():
    t = build_tree(pc(0.25, 0.75), pc(0.1), 1)
    assert (t.cell(1, (0,)).n1, t.cell(1, (0,)).n2) == (1, 1)
    assert (t.cell(1, (1,)).n1, t.cell(1, (1,)).n2) == (1, 0)
    assert t.cell(1, (1,)).discrepancy == 1


def test_boundary_convention():
    # half-open cells, top face of the cube closed
    t = build_tree(pc(0.0, 0.5, 1.0), PointCloud.empty(1), 1)
    assert t.cell(1, (0,)).n1 == 1
    assert t.cell(1, (1,)).n1 == 2


def test_cell_count_and_address():
    x, y = cloud_pair(2, 10, 10, 2)
    t = build_tree(x, y, 3)
    assert t.n_cells(3) == 64
    assert cell_address((5, 2), 3) == (1, 2, 1)
    assert len(set(cell_address((i, j), 2) for i in range(4) for j in range(4))) == 16


@pytest.mark.parametrize("dim,K", [(1, 6), (2, 4), (3, 3)])
def test_children_sum_to_parent(dim, K):
    x, y = cloud_pair(dim, 300, 250, dim + K)
    t = build_tree(x, y, K)
    for k in range(K):
        agg = {}
        for idx, c in t.levels[k + 1].items():
            parent = tuple(i >> 1 for i in idx)
            a = agg.setdefault(parent, [0, 0])
            a[0] += c.n1
            a[1] += c.n2
        assert {p: tuple(v) for p, v in agg.items()} == {p: (c.n1, c.n2) for p, c in t.levels[k].items()}
    assert (t.cell(0, (0,) * dim).n1, t.cell(0, (0,) * dim).n2) == (300, 250)


def test_depth_guard():
    x, y = cloud_pair(3, 2, 2, 1)
    with pytest.raises(ValueError):
        build_tree(x, y, 11)
    with pytest.raises(ValueError):
        decimation_match(x, y, -1)


def test_depth_zero_is_exact():
    x, y = cloud_pair(3, 40, 33, 3)
    assert decimation_match(x, y, 0).matching.total_length == solve_exact(x, y).total_length


def test_single_leaf_is_exact():
    r = np.random.default_rng(0)
    x = PointCloud(r.random((20, 2)) * 0.2)
    y = PointCloud(r.random((20, 2)) * 0.2)
    res = decimation_match(x, y, 2)
    assert res.matching.total_length == pytest.approx(solve_exact(x, y).total_length, rel=1e-12)
    assert res.per_level_cost == [0.0, 0.0]


def test_result_bookkeeping_and_json():
    x, y = cloud_pair(2, 64, 50, 4)
    res = decimation_match(x, y, 3)
    res.matching.check(x, y)
    assert res.matching.total_length == pytest.approx(res.leaf_cost + sum(res.per_level_cost),
                                                      rel=1e-12)
    assert len(res.matching.unmatched_x) == 14 and len(res.matching.unmatched_y) == 0
    assert res.leftover_law_ok
    t = build_tree(x, y, 3)
    assert res.per_level_discrepancy_sum == [t.discrepancy_sum(k) for k in range(4)]
    d = json.loads(res.to_json())
    assert d["per_level_discrepancy_sum"] == res.per_level_discrepancy_sum
    assert d["unmatched"] == 14


def test_merge_edges_bounded_by_cell_diameter():
    for i in range(20):
        x, y = cloud_pair(2, 64, 64, derive_seed(5, i))
        res = decimation_match(x, y, 3)
        lengths = np.linalg.norm(x.points[res.matching.pairs[:, 0]] - y.points[res.matching.pairs[:, 1]],
                                 axis=1)
        cap = np.array([math.sqrt(2) * res.cell_edges[j] for j in res.pair_level])
        assert np.all(lengths <= cap + 1e-12)


def test_recursive_chain_on_random_instances():
    for i in range(100):
        s = derive_seed(6, i)
        dim, K = 2 + i % 2, 1 + i % 3
        x, y = cloud_pair(dim, 64, 64, s)
        res, rep = recursive_bound_report(x, y, K)
        assert rep.dominance_ok and rep.upper_ok and rep.leftover_law_ok, s


def test_bound_terms():
    # two isolated unmatched surpluses in opposite halves of the line
    x, y = pc(0.1, 0.2), pc(0.15, 0.9)
    res, rep = recursive_bound_report(x, y, 1)
    assert rep.leaf_sum == pytest.approx(0.05)
    # level-1 discrepancy 2, merge bound 1/2 * edge 1 * sqrt(1) * 2
    assert rep.merge_bound == [1.0]
    assert rep.heuristic == pytest.approx(0.05 + 0.7)


def test_faulty_leaf_solver_breaks_upper_bound_only():
    def inflated(a, b):
        m = solve_exact(a, b)
        m.total_length *= 1.1
        return m

    x, y = cloud_pair(2, 30, 30, 7)
    _, rep = recursive_bound_report(x, y, 0, leaf_solver=inflated)
    assert rep.dominance_ok and not rep.upper_ok


def test_single_split_examples():
    e = PointCloud.empty(2)
    rep = verify_single_split(e, e)
    assert (rep.exact, rep.middle, rep.crude) == (0.0, 0.0, 0.0) and rep.ok
    r = np.random.default_rng(1)
    x, y = PointCloud(r.random((10, 2)) * 0.4), PointCloud(r.random((10, 2)) * 0.4)
    rep = verify_single_split(x, y)
    assert rep.leftover == 0.0
    assert rep.exact == pytest.approx(rep.split_sum, rel=1e-12)


def test_single_split_chain_on_random_instances():
    for i in range(100):
        x, y = cloud_pair(2, 32, 32, derive_seed(8, i))
        assert verify_single_split(x, y).ok


def test_single_split_subcube():
    r = np.random.default_rng(2)
    x = PointCloud(0.5 + 0.25 * r.random((12, 2)))
    y = PointCloud(0.5 + 0.25 * r.random((9, 2)))
    assert verify_single_split(x, y, edge=0.25, origin=[0.5, 0.5]).ok
    with pytest.raises(ValueError):
        verify_single_split(x, y, edge=0.1, origin=[0.5, 0.5])


def test_padded_m1_is_exact():
    x, y = cloud_pair(2, 25, 30, 9)
    res, rep = padded_subdivision(x, y, 1)
    assert res.matching.total_length == pytest.approx(solve_exact(x, y).total_length, rel=1e-12)


@pytest.mark.parametrize("K", [1, 2, 3])
def test_padded_power_of_two_matches_dyadic(K):
    x, y = cloud_pair(2, 64, 64, 10 + K)
    res, _ = padded_subdivision(x, y, 2**K)
    ref = decimation_match(x, y, K)
    # same leaf partition; one extra (trivial) padded level on top
    assert res.leaf_cost == pytest.approx(ref.leaf_cost, rel=1e-12)
    assert res.matching.total_length == pytest.approx(ref.matching.total_length, rel=1e-12)


def test_padded_m3_chain():
    for i in range(50):
        x, y = cloud_pair(2, 32, 32, derive_seed(12, i))
        res, rep = padded_subdivision(x, y, 3)
        assert rep.ok
        assert rep.bound <= rep.crude_bound + 1e-12
        assert res.cell_edges[-1] == pytest.approx(1 / 3)


def test_padded_rejects_bad_m():
    x, y = cloud_pair(2, 3, 3, 1)
    with pytest.raises(ValueError):
        padded_subdivision(x, y, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 3), st.integers(0, 40), st.integers(0, 40),
       st.integers(0, 4))
def test_property_residue_and_leftover_laws(seed, dim, n1, n2, K):
    x, y = cloud_pair(dim, n1, n2, seed)
    res, rep = recursive_bound_report(x, y, K)
    res.matching.check(x, y)
    assert len(res.matching.unmatched_x) + len(res.matching.unmatched_y) == abs(n1 - n2)
    assert rep.ok


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 3), st.integers(1, 30), st.integers(1, 30),
       st.integers(1, 9))
def test_property_padded(seed, dim, n1, n2, m):
    x, y = cloud_pair(dim, n1, n2, seed)
    res, rep = padded_subdivision(x, y, m)
    res.matching.check(x, y)
    assert rep.ok
