"""Exact minimum-length bipartite matching between two point clouds.

With unequal cardinalities the matching pairs every point of the smaller
cloud and leaves the surplus of the larger one unmatched; unmatched points
contribute nothing to the length.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _lap
from .sampling import PointCloud

DENSE_LIMIT = 300 * 300
CERT_TOL = 1e-11
KNN = 12
MAX_ROUNDS = 40
BRUTE_FORCE_MAX = 8
BRUTE_FORCE_MAX_INJECTIONS = 2_000_000


@dataclass
class Matching:
    pairs: np.ndarray  # (m, 2) int: x index, y index
    unmatched_x: np.ndarray
    unmatched_y: np.ndarray
    total_length: float
    stats: dict = field(default_factory=dict, compare=False, repr=False)

    def __len__(self):
        return len(self.pairs)

    def check(self, x: PointCloud, y: PointCloud, rtol: float = 1e-12) -> None:
        """Raise AssertionError if any structural invariant is violated."""
        n1, n2 = len(x), len(y)
        xi, yi = self.pairs[:, 0], self.pairs[:, 1]
        assert len(set(xi.tolist())) == len(xi), "x index used twice"
        assert len(set(yi.tolist())) == len(yi), "y index used twice"
        assert len(self.pairs) == min(n1, n2), "matching is not of maximum cardinality"
        assert sorted(xi.tolist() + self.unmatched_x.tolist()) == list(range(n1))
        assert sorted(yi.tolist() + self.unmatched_y.tolist()) == list(range(n2))
        assert len(self.unmatched_x) + len(self.unmatched_y) == abs(n1 - n2)
        recomputed = matching_length(x, y, self.pairs)
        assert math.isclose(self.total_length, recomputed, rel_tol=rtol, abs_tol=1e-300), (
            f"total_length {self.total_length!r} != recomputed {recomputed!r}")


def pair_lengths(x: PointCloud, y: PointCloud, pairs) -> np.ndarray:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    diff = x.points[pairs[:, 0]] - y.points[pairs[:, 1]]
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def matching_length(x: PointCloud, y: PointCloud, pairs) -> float:
    return math.fsum(pair_lengths(x, y, pairs))


def _from_assignment(x, y, col4row, x_is_rows, stats=None) -> Matching:
    rows = np.arange(len(col4row), dtype=np.int64)
    cols = np.asarray(col4row, dtype=np.int64)
    if x_is_rows:
        pairs = np.column_stack([rows, cols])
    else:
        pairs = np.column_stack([cols, rows])
    pairs = pairs[np.argsort(pairs[:, 0], kind="stable")]
    mx = np.ones(len(x), bool)
    mx[pairs[:, 0]] = False
    my = np.ones(len(y), bool)
    my[pairs[:, 1]] = False
    return Matching(pairs, np.flatnonzero(mx), np.flatnonzero(my),
                    matching_length(x, y, pairs), stats or {})


def _empty(x: PointCloud, y: PointCloud) -> Matching:
    return Matching(np.empty((0, 2), np.int64), np.arange(len(x)), np.arange(len(y)), 0.0)


def _check_dims(x: PointCloud, y: PointCloud):
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")


def _solve_dense(rows: np.ndarray, cols: np.ndarray):
    cost = _lap.distance_matrix(rows, cols)
    col4row, _, _, ok = _lap.dense_ssp(cost)
    if not ok:  # pragma: no cover - finite costs always admit a matching
        raise RuntimeError("dense assignment failed")
    return col4row, {"method": "dense"}


def _solve_sparse(rows: np.ndarray, cols: np.ndarray, k: int = KNN, tol: float = CERT_TOL):
    """Sparse candidate graph, grown until the duals certify optimality on
    the complete bipartite graph.

    Certificate: every pair has reduced cost >= -tol, and (rectangular case)
    every free column keeps the maximal potential 0.
    """
    nr, nc = len(rows), len(cols)
    ei, ej = _lap.knn_edges(rows, cols, k)
    ptr, idx, cst = _lap.build_csr(rows, cols, ei, ej)
    col4row, u, v = _lap.row_reduction(nr, nc, ptr, idx, cst)
    cold = 0
    for rounds in range(1, MAX_ROUNDS + 1):
        if not _lap.sparse_ssp(nr, nc, ptr, idx, cst, col4row, u, v):
            k = min(2 * k, nc)
            ki, kj = _lap.knn_edges(rows, cols, k)
            ei, ej = np.concatenate([ei, ki]), np.concatenate([ej, kj])
            ptr, idx, cst = _lap.build_csr(rows, cols, ei, ej)
            _lap.repair_duals(nr, ptr, idx, cst, col4row, u, v, tol)
            continue
        vi, vj, count = _lap.dual_violations(rows, cols, u, v, tol, 4 * nr)
        free = np.ones(nc, bool)
        free[col4row] = False
        free_ok = nr == nc or bool(np.all(v[free] >= -tol))
        if count == 0 and free_ok:
            return col4row, {"method": "sparse", "rounds": rounds, "cold_restarts": cold,
                             "edges": int(len(idx))}
        if count:
            ei, ej = np.concatenate([ei, vi]), np.concatenate([ej, vj])
            ptr, idx, cst = _lap.build_csr(rows, cols, ei, ej)
        if nr == nc:
            _lap.repair_duals(nr, ptr, idx, cst, col4row, u, v, tol)
        else:
            # freeing a column during repair can leave it with v < 0, which
            # the rectangular certificate forbids; restart the duals instead
            cold += 1
            col4row, u, v = _lap.row_reduction(nr, nc, ptr, idx, cst)
    col4row, stats = _solve_dense(rows, cols)
    stats["fallback"] = True
    return col4row, stats


def solve_exact(x: PointCloud, y: PointCloud, method: str = "auto") -> Matching:
    """Minimum total Euclidean length matching of cardinality min(|x|, |y|).

    ``method`` is ``"auto"``, ``"dense"`` or ``"sparse"``; all give the same
    optimal length, only the speed differs. Ties between optimal pairings
    are broken arbitrarily.
    """
    _check_dims(x, y)
    n1, n2 = len(x), len(y)
    if min(n1, n2) == 0:
        return _empty(x, y)
    x_is_rows = n1 <= n2
    rows, cols = (x.points, y.points) if x_is_rows else (y.points, x.points)
    if method == "auto":
        method = "dense" if n1 * n2 <= DENSE_LIMIT else "sparse"
    if method == "dense":
        col4row, stats = _solve_dense(rows, cols)
    elif method == "sparse":
        col4row, stats = _solve_sparse(rows, cols)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _from_assignment(x, y, col4row, x_is_rows, stats)


def brute_force(x: PointCloud, y: PointCloud) -> Matching:
    """Exhaustive search over injections of the smaller cloud into the larger."""
    _check_dims(x, y)
    n1, n2 = len(x), len(y)
    small = min(n1, n2)
    if small > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force limited to min(N1, N2) <= {BRUTE_FORCE_MAX}, got {small}")
    if small == 0:
        return _empty(x, y)
    if math.perm(max(n1, n2), small) > BRUTE_FORCE_MAX_INJECTIONS:
        raise ValueError(f"brute force over {math.perm(max(n1, n2), small)} injections is too large")
    x_is_rows = n1 <= n2
    rows, cols = (x.points, y.points) if x_is_rows else (y.points, x.points)
    dist = np.sqrt(((rows[:, None, :] - cols[None, :, :]) ** 2).sum(-1))
    perms = np.array(list(itertools.permutations(range(len(cols)), small)), dtype=np.int64)
    totals = dist[np.arange(small), perms].sum(axis=1)
    best = perms[int(np.argmin(totals))]
    return _from_assignment(x, y, best, x_is_rows, {"method": "brute_force"})


def sorted_match_1d(x: PointCloud, y: PointCloud) -> Matching:
    """Optimal matching on the line: pair the order statistics."""
    _check_dims(x, y)
    if x.dim != 1:
        raise ValueError(f"sorted matching needs dim 1, got {x.dim}")
    if len(x) != len(y):
        raise ValueError(f"sorted matching needs equal cardinalities, got {len(x)} and {len(y)}")
    ox = np.argsort(x.points[:, 0], kind="stable")
    oy = np.argsort(y.points[:, 0], kind="stable")
    col4row = np.empty(len(x), np.int64)
    col4row[ox] = oy
    return _from_assignment(x, y, col4row, True, {"method": "sorted"})


def solve_assignment(costs) -> tuple[np.ndarray, float]:
    """Minimum-cost assignment on an explicit ``(n1, n2)`` cost matrix.

    Returns ``(pairs, total)``, pairing every index of the smaller side.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise ValueError("cost matrix must be 2-d")
    if not np.all(np.isfinite(costs)):
        raise ValueError("costs must be finite")
    n1, n2 = costs.shape
    if min(n1, n2) == 0:
        return np.empty((0, 2), np.int64), 0.0
    transpose = n1 > n2
    mat = np.ascontiguousarray(costs.T if transpose else costs)
    col4row, _, _, _ = _lap.dense_ssp(mat)
    rows = np.arange(len(col4row))
    pairs = np.column_stack([col4row, rows] if transpose else [rows, col4row])
    pairs = pairs[np.argsort(pairs[:, 0], kind="stable")]
    return pairs, math.fsum(costs[pairs[:, 0], pairs[:, 1]])
