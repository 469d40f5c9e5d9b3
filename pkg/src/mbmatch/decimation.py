"""Dyadic subdivision of the cube and the recursive decimation matching.

Points are matched exactly inside each leaf cell; the points left unpaired
are promoted one level up and matched again inside their parent cell, and
so on up to the root. Cells are half-open ``[a, b)`` along every axis,
except that the upper face of the whole cube is closed, so each point falls
in exactly one cell per level.

A cell at level ``k`` is addressed by its integer index along every axis,
``(i_1, ..., i_d)`` with ``0 <= i_t < 2**k``; :func:`cell_address` converts
that to the child-digit path ``(p_1, ..., p_k)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .matching import Matching, solve_exact
from .sampling import PointCloud

MAX_DEPTH_DIM = 30

LeafSolver = Callable[[PointCloud, PointCloud], Matching]


@dataclass(frozen=True)
class CellStats:
    n1: int
    n2: int

    @property
    def discrepancy(self) -> int:
        return abs(self.n1 - self.n2)


_EMPTY_CELL = CellStats(0, 0)


@dataclass
class DyadicTree:
    dim: int
    depth: int
    levels: list[dict[tuple[int, ...], CellStats]]  # sparse: empty cells omitted

    def n_cells(self, level: int) -> int:
        return 2 ** (level * self.dim)

    def cell(self, level: int, index: tuple[int, ...]) -> CellStats:
        return self.levels[level].get(tuple(index), _EMPTY_CELL)

    def discrepancy_sum(self, level: int) -> int:
        return sum(c.discrepancy for c in self.levels[level].values())


def cell_address(index: tuple[int, ...], level: int) -> tuple[int, ...]:
    """Child-digit path ``(p_1..p_level)``, each digit in ``[0, 2**d)``."""
    digits = []
    for k in range(level - 1, -1, -1):
        digits.append(sum(((i >> k) & 1) << t for t, i in enumerate(index)))
    return tuple(digits)


def _check_depth(depth: int, dim: int):
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if depth * dim > MAX_DEPTH_DIM:
        raise ValueError(f"depth*dim = {depth * dim} exceeds the guard {MAX_DEPTH_DIM}")


def _leaf_index(points: np.ndarray, cells_per_axis: int, origin=0.0, edge=1.0) -> np.ndarray:
    idx = np.floor((points - origin) / edge * cells_per_axis).astype(np.int64)
    return np.clip(idx, 0, cells_per_axis - 1)


def _keys(idx: np.ndarray, shift: int, level: int) -> np.ndarray:
    """Scalar cell keys at ``level`` given leaf indices ``shift`` levels finer."""
    coarse = idx >> shift
    key = np.zeros(len(idx), np.int64)
    for t in range(idx.shape[1] - 1, -1, -1):
        key = (key << level) | coarse[:, t]
    return key


def _counts(idx_x, idx_y, shift) -> dict[tuple[int, ...], CellStats]:
    cells: dict[tuple[int, ...], list[int]] = {}
    for col, idx in ((0, idx_x), (1, idx_y)):
        if len(idx) == 0:
            continue
        uniq, cnt = np.unique(idx >> shift, axis=0, return_counts=True)
        for row, c in zip(uniq.tolist(), cnt.tolist()):
            cells.setdefault(tuple(row), [0, 0])[col] = c
    return {k: CellStats(*v) for k, v in sorted(cells.items())}


def build_tree(x: PointCloud, y: PointCloud, depth: int) -> DyadicTree:
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    _check_depth(depth, x.dim)
    scale = 2 ** depth
    ix = _leaf_index(x.points, scale)
    iy = _leaf_index(y.points, scale)
    levels = [_counts(ix, iy, depth - k) for k in range(depth + 1)]
    return DyadicTree(x.dim, depth, levels)


@dataclass
class DecimationResult:
    matching: Matching
    dim: int
    leaf_level: int
    cell_edges: list[float]            # edge length of a cell at each level
    leaf_cost: float
    per_level_cost: list[float]        # merge inside level-j cells, j < leaf_level
    per_level_discrepancy_sum: list[int]   # sum_cells |n1 - n2| at each level
    leaf_values: list[float] = field(repr=False, default_factory=list)
    pair_level: np.ndarray = field(repr=False, default=None)
    leftover_law_ok: bool = True

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "leaf_level": self.leaf_level,
            "cell_edges": [float(e) for e in self.cell_edges],
            "leaf_cost": float(self.leaf_cost),
            "per_level_cost": [float(c) for c in self.per_level_cost],
            "per_level_discrepancy_sum": [int(s) for s in self.per_level_discrepancy_sum],
            "total_length": float(self.matching.total_length),
            "unmatched": int(len(self.matching.unmatched_x) + len(self.matching.unmatched_y)),
            "leftover_law_ok": bool(self.leftover_law_ok),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _groups(keys: np.ndarray):
    """Yield ``(key, positions)`` for each distinct key, in key order."""
    if len(keys) == 0:
        return
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    cuts = np.flatnonzero(np.diff(sk)) + 1
    for part in np.split(order, cuts):
        yield int(keys[part[0]]), part


def _match_cells(x, y, lx, ly, key_x, key_y, solver):
    """Match ``x[lx]`` against ``y[ly]`` separately inside every cell.

    Returns (pairs, reported lengths per cell, leftover x, leftover y,
    leftover counts per cell).
    """
    kx, ky = key_x[lx], key_y[ly]
    gx = dict(_groups(kx))
    gy = dict(_groups(ky))
    pairs, values = [], []
    left_x, left_y = [], []
    leftover = {}
    for key in sorted(set(gx) | set(gy)):
        cx = lx[gx[key]] if key in gx else lx[:0]
        cy = ly[gy[key]] if key in gy else ly[:0]
        if len(cx) and len(cy):  # single-colour cells just pass their points up
            m = solver(x.take(cx), y.take(cy))
            pairs.append(np.column_stack([cx[m.pairs[:, 0]], cy[m.pairs[:, 1]]]))
            values.append(m.total_length)
            ux, uy = cx[m.unmatched_x], cy[m.unmatched_y]
        else:
            ux, uy = cx, cy
        left_x.append(ux)
        left_y.append(uy)
        leftover[key] = len(ux) + len(uy)
    cat = lambda parts: np.concatenate(parts) if parts else np.empty(0, np.int64)
    pairs = np.concatenate(pairs) if pairs else np.empty((0, 2), np.int64)
    return pairs, values, cat(left_x), cat(left_y), leftover


def _leftover_law(left: dict, disc: dict) -> bool:
    return all(left.get(k, 0) == disc.get(k, 0) for k in set(left) | set(disc))


def _hierarchical(x, y, ix, iy, leaf_level, cell_edges, solver) -> DecimationResult:
    dim = x.dim
    all_x = np.arange(len(x), dtype=np.int64)
    all_y = np.arange(len(y), dtype=np.int64)
    keys = [(_keys(ix, leaf_level - j, j), _keys(iy, leaf_level - j, j)) for j in range(leaf_level + 1)]

    disc_sum = []
    disc_by_level = []
    for kx, ky in keys:
        cx = dict(zip(*np.unique(kx, return_counts=True))) if len(kx) else {}
        cy = dict(zip(*np.unique(ky, return_counts=True))) if len(ky) else {}
        d = {k: abs(int(cx.get(k, 0)) - int(cy.get(k, 0))) for k in set(cx) | set(cy)}
        disc_by_level.append(d)
        disc_sum.append(sum(d.values()))

    law_ok = True
    pairs, values, lx, ly, left = _match_cells(x, y, all_x, all_y, *keys[leaf_level], solver)
    law_ok &= _leftover_law(left, disc_by_level[leaf_level])
    all_pairs = [pairs]
    levels = [np.full(len(pairs), leaf_level, np.int64)]
    leaf_values = list(values)
    leaf_cost = math.fsum(values)
    per_level = [0.0] * leaf_level
    for j in range(leaf_level - 1, -1, -1):
        pairs, values, lx, ly, left = _match_cells(x, y, lx, ly, *keys[j], solver)
        law_ok &= _leftover_law(left, disc_by_level[j])
        per_level[j] = math.fsum(values)
        all_pairs.append(pairs)
        levels.append(np.full(len(pairs), j, np.int64))

    pairs = np.concatenate(all_pairs)
    pair_level = np.concatenate(levels)
    order = np.argsort(pairs[:, 0], kind="stable")
    pairs, pair_level = pairs[order], pair_level[order]
    total = math.fsum([leaf_cost, *per_level])
    matching = Matching(pairs, np.sort(lx), np.sort(ly), total, {"method": "decimation"})
    return DecimationResult(matching, dim, leaf_level, list(cell_edges), leaf_cost, per_level,
                            disc_sum, leaf_values, pair_level, bool(law_ok))


def decimation_match(x: PointCloud, y: PointCloud, depth: int,
                     leaf_solver: LeafSolver = solve_exact) -> DecimationResult:
    """Recursive decimation matching over the dyadic tree of ``depth`` levels.

    ``leaf_solver`` solves the leaf cells and every merge step.
    """
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    _check_depth(depth, x.dim)
    scale = 2 ** depth
    edges = [2.0 ** -j for j in range(depth + 1)]
    return _hierarchical(x, y, _leaf_index(x.points, scale), _leaf_index(y.points, scale),
                         depth, edges, leaf_solver)


def leaf_optimum(x, y, ix, iy, leaf_level) -> list[float]:
    """Exact optimum inside every leaf cell, independent of any leaf solver."""
    kx, ky = _keys(ix, 0, leaf_level), _keys(iy, 0, leaf_level)
    gx, gy = dict(_groups(kx)), dict(_groups(ky))
    out = []
    for key in sorted(set(gx) & set(gy)):
        out.append(solve_exact(x.take(gx[key]), y.take(gy[key])).total_length)
    return out


@dataclass
class BoundReport:
    exact: float
    heuristic: float
    bound: float
    leaf_sum: float
    merge_bound: list[float]
    leftover_law_ok: bool
    crude_bound: float | None = None

    @property
    def dominance_ok(self) -> bool:
        return self.exact <= self.heuristic * (1 + 1e-12) + 1e-12

    @property
    def upper_ok(self) -> bool:
        return self.heuristic <= self.bound * (1 + 1e-12) + 1e-12

    @property
    def ok(self) -> bool:
        ok = self.dominance_ok and self.upper_ok and self.leftover_law_ok
        if self.crude_bound is not None:
            ok = ok and self.bound <= self.crude_bound * (1 + 1e-12) + 1e-12
        return ok

    def to_dict(self) -> dict:
        d = {
            "exact": self.exact, "heuristic": self.heuristic, "bound": self.bound,
            "leaf_sum": self.leaf_sum, "merge_bound": list(self.merge_bound),
            "leftover_law_ok": self.leftover_law_ok, "dominance_ok": self.dominance_ok,
            "upper_ok": self.upper_ok, "ok": self.ok,
        }
        if self.crude_bound is not None:
            d["crude_bound"] = self.crude_bound
        return d


def _bound_report(x, y, ix, iy, result: DecimationResult, exact: float | None) -> BoundReport:
    L = result.leaf_level
    leaf_sum = math.fsum(leaf_optimum(x, y, ix, iy, L))
    sqd = math.sqrt(x.dim)
    # merging inside level-j cells pairs at most half the children's surplus,
    # each pair no longer than the cell diameter
    merge = [0.5 * result.cell_edges[j] * sqd * result.per_level_discrepancy_sum[j + 1] for j in range(L)]
    if exact is None:
        exact = solve_exact(x, y).total_length
    return BoundReport(exact, result.matching.total_length, math.fsum([leaf_sum, *merge]),
                       leaf_sum, merge, result.leftover_law_ok)


def recursive_bound_report(x: PointCloud, y: PointCloud, depth: int,
                           leaf_solver: LeafSolver = solve_exact,
                           exact: float | None = None) -> tuple[DecimationResult, BoundReport]:
    """Check exact <= decimation <= leaf optima + sum_k sqrt(d)/2^k * disc_k."""
    res = decimation_match(x, y, depth, leaf_solver)
    scale = 2 ** depth
    return res, _bound_report(x, y, _leaf_index(x.points, scale), _leaf_index(y.points, scale), res, exact)


@dataclass
class SplitReport:
    exact: float
    split_sum: float      # sum of the 2^d sub-cube optima
    leftover: float       # optimum over the points left unpaired
    crude: float

    @property
    def middle(self) -> float:
        return self.split_sum + self.leftover

    @property
    def ok(self) -> bool:
        eps = 1e-12 * max(1.0, self.crude)
        return self.exact <= self.middle + eps and self.middle <= self.crude + eps

    def to_dict(self) -> dict:
        return {"exact": self.exact, "split_sum": self.split_sum, "leftover": self.leftover,
                "middle": self.middle, "crude": self.crude, "ok": self.ok}


def verify_single_split(x: PointCloud, y: PointCloud, edge: float = 1.0, origin=None) -> SplitReport:
    """One halving of every edge of the cube ``[origin, origin + edge]^d``."""
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    if not edge > 0:
        raise ValueError("edge must be positive")
    o = np.zeros(x.dim) if origin is None else np.asarray(origin, dtype=float)
    for cloud in (x, y):
        if len(cloud) and (np.any(cloud.points < o - 1e-12) or np.any(cloud.points > o + edge + 1e-12)):
            raise ValueError("points must lie inside the cube")
    ix = _leaf_index(x.points, 2, o, edge)
    iy = _leaf_index(y.points, 2, o, edge)
    res = _hierarchical(x, y, ix, iy, 1, [edge, edge / 2], solve_exact)
    exact = solve_exact(x, y).total_length
    crude = res.leaf_cost + 0.5 * edge * math.sqrt(x.dim) * res.per_level_discrepancy_sum[1]
    return SplitReport(exact, res.leaf_cost, res.per_level_cost[0], crude)


def padded_subdivision(x: PointCloud, y: PointCloud, m: int,
                       leaf_solver: LeafSolver = solve_exact) -> tuple[DecimationResult, BoundReport]:
    """Decimation over the padded cube ``[0, 2^(K+1)/m]^d`` with ``m = 2^K + r``.

    Leaves are the ``m^d`` cells of edge ``1/m`` covering the unit cube (the
    rest of the padded cube is empty). The report's ``bound`` uses the
    per-level factor ``sqrt(d) 2^(K-k) / m`` and ``crude_bound`` the weaker
    ``sqrt(d) / 2^k``.
    """
    if x.dim != y.dim:
        raise ValueError(f"dimension mismatch: {x.dim} vs {y.dim}")
    if int(m) != m or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")
    K = int(m).bit_length() - 1
    L = K + 1
    _check_depth(L, x.dim)
    edges = [2.0 ** (L - j) / m for j in range(L + 1)]
    ix, iy = _leaf_index(x.points, m), _leaf_index(y.points, m)
    res = _hierarchical(x, y, ix, iy, L, edges, leaf_solver)
    rep = _bound_report(x, y, ix, iy, res, None)
    sqd = math.sqrt(x.dim)
    rep.crude_bound = math.fsum([rep.leaf_sum] + [sqd / 2 ** k * res.per_level_discrepancy_sum[k + 1]
                                                   for k in range(L)])
    return res, rep
