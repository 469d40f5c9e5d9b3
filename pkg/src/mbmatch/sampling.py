"""Uniform random point clouds in the unit cube.

Every cloud is a pure function of its :class:`SampleSpec`; substreams for
trials and clouds are derived with :func:`derive_seed` so runs can be
replayed piecewise.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np


@dataclass(frozen=True)
class Fixed:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValueError(f"Fixed cardinality must be a non-negative integer, got {self.n!r}")


@dataclass(frozen=True)
class Poisson:
    mean: float

    def __post_init__(self):
        if not self.mean > 0 or not np.isfinite(self.mean):
            raise ValueError(f"Poisson mean must be positive and finite, got {self.mean!r}")


Cardinality = Union[Fixed, Poisson]


@dataclass(frozen=True)
class SampleSpec:
    dim: int
    cardinality: Cardinality
    seed: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim!r}")
        if not isinstance(self.cardinality, (Fixed, Poisson)):
            raise TypeError("cardinality must be Fixed(n) or Poisson(mean)")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


class PointCloud:
    """An immutable ``(count, dim)`` array of points in ``[0, 1]^dim``."""

    __slots__ = ("_points",)

    def __init__(self, points, dim: int | None = None):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim == 1:
            if dim is None:
                raise ValueError("flat coordinates need an explicit dim")
            if pts.size % dim:
                raise ValueError(f"{pts.size} coordinates is not a multiple of dim={dim}")
            pts = pts.reshape(-1, dim)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-d array")
        if dim is not None and pts.shape[1] != dim:
            raise ValueError(f"points have dim {pts.shape[1]}, expected {dim}")
        if pts.shape[1] < 1:
            raise ValueError("dim must be >= 1")
        if pts.size and (not np.all(np.isfinite(pts)) or pts.min() < 0.0 or pts.max() > 1.0):
            raise ValueError("coordinates must lie in [0, 1]")
        pts = np.ascontiguousarray(pts)
        pts.flags.writeable = False
        self._points = pts

    @classmethod
    def empty(cls, dim: int) -> "PointCloud":
        return cls(np.empty((0, dim)))

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def coords(self) -> np.ndarray:
        """Flat row-major coordinates."""
        return self._points.reshape(-1)

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def __len__(self):
        return self._points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self._points.shape == other._points.shape and bool(np.array_equal(self._points, other._points))

    def __hash__(self):
        return hash((self._points.shape, self._points.tobytes()))

    def __repr__(self):
        return f"PointCloud(count={len(self)}, dim={self.dim})"

    def take(self, idx) -> "PointCloud":
        return PointCloud(self._points[np.asarray(idx, dtype=np.int64)].reshape(-1, self.dim))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed of ``seed`` for the key path ``keys``."""
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def _generator(seed: int, stream: int | None = None) -> np.random.Generator:
    if stream is None:
        ss = np.random.SeedSequence(seed)
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.Generator(np.random.PCG64(ss))


def _draw(spec: SampleSpec, rng: np.random.Generator) -> PointCloud:
    card = spec.cardinality
    n = card.n if isinstance(card, Fixed) else int(rng.poisson(card.mean))
    return PointCloud(rng.random((n, spec.dim)))


def sample_cloud(spec: SampleSpec) -> PointCloud:
    """Draw a cloud; identical specs give bit-identical clouds."""
    return _draw(spec, _generator(spec.seed))


def sample_pair(spec_x: SampleSpec, spec_y: SampleSpec) -> tuple[PointCloud, PointCloud]:
    """Draw two independent clouds.

    The two clouds come from separate spawned streams, so reusing one seed
    for both specs still yields independent (and distinct) clouds. Note that
    this makes ``sample_pair(s, t)[0]`` differ from ``sample_cloud(s)``.
    """
    if spec_x.dim != spec_y.dim:
        raise ValueError(f"dimension mismatch: {spec_x.dim} vs {spec_y.dim}")
    return _draw(spec_x, _generator(spec_x.seed, 0)), _draw(spec_y, _generator(spec_y.seed, 1))


def write_csv(cloud: PointCloud, path) -> None:
    """One point per row, ``x1,...,xd``, shortest round-trip floats."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for p in cloud.points:
            w.writerow([repr(float(c)) for c in p])


def read_csv(path, dim: int | None = None) -> PointCloud:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{Path(path).name}:{lineno}: {exc}") from None
    if not rows:
        if dim is None:
            raise ValueError(f"{path}: empty file, dimension unknown")
        return PointCloud.empty(dim)
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have differing lengths")
    return PointCloud(np.array(rows), dim=dim)
