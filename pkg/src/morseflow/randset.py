"""Grid cell sets approximating (random) compact subsets of the state box.

A :class:`CellSet` is a canonical sorted array of flat cell indices on a
uniform :class:`Partition`. Sets built from intervals/boxes or from points
remember that geometry, so point membership can be exact where it matters
(entrance times) and point-like invariant sets (fixed points) are mapped as
points rather than as whole cells.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import ndimage

from .cocycle import CocycleSystem, StateBox
from .errors import ConfigurationError, EmptySetError, PartitionMismatchError
from .noise import NoisePath, format_real

# fraction of a cell width treated as "on the boundary"
_EDGE_EPS = 1e-9
DEFAULT_SAMPLES = 5


@dataclass(frozen=True)
class Partition:
    box: StateBox
    cells_per_axis: int

    def __post_init__(self):
        if int(self.cells_per_axis) != self.cells_per_axis or self.cells_per_axis < 2:
            raise ConfigurationError(f"cells_per_axis must be an integer >= 2, got {self.cells_per_axis}")
        object.__setattr__(self, "cells_per_axis", int(self.cells_per_axis))

    @property
    def dim(self) -> int:
        return self.box.dim

    @property
    def shape(self) -> tuple:
        return (self.cells_per_axis,) * self.dim

    @property
    def n_cells(self) -> int:
        return self.cells_per_axis ** self.dim

    @property
    def width(self) -> np.ndarray:
        return (self.box.hi - self.box.lo) / self.cells_per_axis

    @property
    def cell_diameter(self) -> float:
        return float(np.linalg.norm(self.width))

    def edges(self, axis: int = 0) -> np.ndarray:
        n = self.cells_per_axis
        lo, hi = self.box.lower[axis], self.box.upper[axis]
        return lo + (hi - lo) * np.arange(n + 1) / n

    def multi_index(self, idx) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(idx, dtype=np.int64), self.shape), axis=-1)

    def flat_index(self, multi) -> np.ndarray:
        multi = np.asarray(multi, dtype=np.int64).reshape(-1, self.dim)
        return np.ravel_multi_index(tuple(multi.T), self.shape)

    def _coords(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.dim)
        return (X - self.box.lo) / self.width

    def cell_of(self, X) -> np.ndarray:
        """Flat index of the (half-open) cell holding each point; the top face goes to the last cell."""
        c = np.floor(self._coords(X)).astype(np.int64)
        c = np.clip(c, 0, self.cells_per_axis - 1)
        return self.flat_index(c)

    def cells_touching(self, X) -> tuple:
        """All closed cells containing each point.

        Returns ``(cells, owner)``; a point on a face belongs to both neighbours.
        """
        c = self._coords(X)
        m = c.shape[0]
        n = self.cells_per_axis
        base = np.clip(np.floor(c).astype(np.int64), 0, n - 1)
        frac = c - base
        on_lower = (frac < _EDGE_EPS) & (base > 0)
        on_upper = (frac > 1 - _EDGE_EPS) & (base < n - 1)
        owners, cells = [], []
        for offset in itertools.product((-1, 0, 1), repeat=self.dim):
            ok = np.ones(m, dtype=bool)
            for axis, o in enumerate(offset):
                if o == -1:
                    ok &= on_lower[:, axis]
                elif o == 1:
                    ok &= on_upper[:, axis]
            if ok.any():
                owners.append(np.flatnonzero(ok))
                cells.append(self.flat_index(base[ok] + np.array(offset)))
        return np.concatenate(cells), np.concatenate(owners)

    def centers(self, idx) -> np.ndarray:
        return self.box.lo + (self.multi_index(idx) + 0.5) * self.width

    def cell_bounds(self, idx) -> tuple:
        mi = self.multi_index(idx)
        lo = np.empty(mi.shape)
        hi = np.empty(mi.shape)
        for axis in range(self.dim):
            e = self.edges(axis)
            lo[:, axis] = e[mi[:, axis]]
            hi[:, axis] = e[mi[:, axis] + 1]
        return lo, hi

    def sample_lattice(self, idx, k: int) -> tuple:
        """``k`` points per axis per cell, edges included; returns (points, owner position)."""
        if k < 1:
            raise ConfigurationError(f"samples_per_cell must be >= 1, got {k}")
        idx = np.asarray(idx, dtype=np.int64)
        lo, hi = self.cell_bounds(idx)
        frac = np.array([0.5]) if k == 1 else np.linspace(0.0, 1.0, k)
        grids = np.meshgrid(*([frac] * self.dim), indexing="ij")
        offs = np.stack([g.ravel() for g in grids], axis=-1)  # (k^d, d)
        pts = lo[:, None, :] + offs[None, :, :] * (hi - lo)[:, None, :]
        owner = np.repeat(np.arange(len(idx)), offs.shape[0])
        return pts.reshape(-1, self.dim), owner


class CellSet:
    """Immutable set of cells of one partition.

    ``geometry`` is ``None``, ``("boxes", array (b, 2, d))`` or
    ``("points", array (p, d))``; it survives only construction and
    identity-preserving operations.
    """

    __slots__ = ("partition", "members", "geometry", "_mask")

    def __init__(self, partition: Partition, members=(), geometry=None):
        m = np.unique(np.asarray(members, dtype=np.int64).ravel())
        if m.size and (m[0] < 0 or m[-1] >= partition.n_cells):
            raise ConfigurationError(f"cell index out of range for a {partition.n_cells}-cell partition")
        m.setflags(write=False)
        self.partition = partition
        self.members = m
        self.geometry = geometry
        self._mask = None

    # -------------------------------------------------------------- builders
    @classmethod
    def from_mask(cls, partition: Partition, mask) -> "CellSet":
        return cls(partition, np.flatnonzero(np.asarray(mask, dtype=bool).ravel()))

    @classmethod
    def empty(cls, partition: Partition) -> "CellSet":
        return cls(partition, ())

    @classmethod
    def whole(cls, partition: Partition) -> "CellSet":
        b = partition.box
        return cls(partition, np.arange(partition.n_cells), ("boxes", np.array([[b.lower, b.upper]])))

    @classmethod
    def from_boxes(cls, partition: Partition, boxes) -> "CellSet":
        """Cells overlapping the given closed boxes (degenerate boxes: cells touching them).

        In 1-D a box is an interval ``(lo, hi)``; in 2-D it is
        ``((x_lo, y_lo), (x_hi, y_hi))``.
        """
        d = partition.dim
        arr = np.asarray(boxes, dtype=np.float64).reshape(-1, 2, d)
        if np.any(arr[:, 0] > arr[:, 1]):
            raise ConfigurationError(f"box with lower > upper: {arr.tolist()}")
        mask = np.zeros(partition.shape, dtype=bool)
        w = partition.width
        for lo, hi in arr:
            sel = []
            for axis in range(d):
                e = partition.edges(axis)
                eps = _EDGE_EPS * w[axis]
                if hi[axis] - lo[axis] <= eps:
                    ok = (e[:-1] <= lo[axis] + eps) & (e[1:] >= hi[axis] - eps)
                else:
                    ok = (e[1:] > lo[axis] + eps) & (e[:-1] < hi[axis] - eps)
                sel.append(ok)
            mask |= (sel[0][:, None] & sel[1][None, :]) if d > 1 else sel[0]
        out = cls.from_mask(partition, mask)
        out.geometry = ("boxes", arr)
        return out

    @classmethod
    def from_intervals(cls, partition: Partition, intervals) -> "CellSet":
        return cls.from_boxes(partition, intervals)

    @classmethod
    def from_points(cls, partition: Partition, points) -> "CellSet":
        """Closed cells containing the given points; the points are kept as exact representatives."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, partition.dim)
        if not partition.box.contains(pts).all():
            raise ConfigurationError(f"points {pts.tolist()} outside the state box")
        cells, _ = partition.cells_touching(pts)
        return cls(partition, cells, ("points", pts))

    # -------------------------------------------------------------- protocol
    @property
    def mask(self) -> np.ndarray:
        if self._mask is None:
            mk = np.zeros(self.partition.n_cells, dtype=bool)
            mk[self.members] = True
            mk.setflags(write=False)
            self._mask = mk
        return self._mask

    def grid_mask(self) -> np.ndarray:
        return self.mask.reshape(self.partition.shape)

    def __len__(self) -> int:
        return int(self.members.size)

    def __bool__(self) -> bool:
        return self.members.size > 0

    def is_empty(self) -> bool:
        return self.members.size == 0

    def __iter__(self):
        return iter(self.members.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellSet):
            return NotImplemented
        return self.partition == other.partition and np.array_equal(self.members, other.members)

    def __hash__(self):
        return hash((self.partition, self.members.tobytes()))

    def __repr__(self) -> str:
        if self.partition.dim == 1 and len(self) < 10_000:
            ivs = ", ".join(f"[{a:.4g},{b:.4g}]" for a, b in self.intervals())
            return f"CellSet({len(self)} cells: {ivs})"
        return f"CellSet({len(self)} of {self.partition.n_cells} cells)"

    def issubset(self, other: "CellSet") -> bool:
        _same(self, other)
        return bool(np.all(other.mask[self.members]))

    __le__ = issubset

    def contains(self, X) -> np.ndarray:
        """Point membership: exact for box and point geometry, closed-cell membership otherwise."""
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.partition.dim)
        if self.geometry is not None and self.geometry[0] == "points":
            reps = self.geometry[1]
            if reps.shape[0] == 0:
                return np.zeros(X.shape[0], dtype=bool)
            gap = np.max(np.abs(X[:, None, :] - reps[None, :, :]), axis=2)
            return np.min(gap, axis=1) <= 1e-12
        if self.geometry is not None and self.geometry[0] == "boxes":
            boxes = self.geometry[1]
            tol = 1e-12
            inside = (X[:, None, :] >= boxes[None, :, 0, :] - tol) & (X[:, None, :] <= boxes[None, :, 1, :] + tol)
            return np.any(np.all(inside, axis=2), axis=1)
        cells, owner = self.partition.cells_touching(X)
        hit = np.zeros(X.shape[0], dtype=bool)
        np.logical_or.at(hit, owner, self.mask[cells])
        return hit

    def sample_points(self, k: int = DEFAULT_SAMPLES) -> tuple:
        """Representative points and their owning member position (``None`` for point geometry)."""
        if self.geometry is not None and self.geometry[0] == "points":
            return self.geometry[1].copy(), None
        return self.partition.sample_lattice(self.members, k)

    def centers(self) -> np.ndarray:
        return self.partition.centers(self.members)

    def intervals(self) -> list:
        """1-D only: maximal runs of member cells as ``(lo, hi)`` pairs."""
        if self.partition.dim != 1:
            raise ConfigurationError("interval export is 1-D only")
        if self.is_empty():
            return []
        m = self.members
        breaks = np.flatnonzero(np.diff(m) > 1)
        starts = np.concatenate([[m[0]], m[breaks + 1]])
        stops = np.concatenate([m[breaks], [m[-1]]])
        e = self.partition.edges(0)
        return [(float(e[a]), float(e[b + 1])) for a, b in zip(starts, stops)]

    def bounding_interval(self) -> tuple:
        e = self.partition.edges(0)
        return float(e[self.members[0]]), float(e[self.members[-1] + 1])

    def to_csv(self, path) -> None:
        p = self.partition
        idx = np.arange(p.n_cells)
        centers = p.centers(idx)
        names = ["x", "y"][:p.dim]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell_index"] + [f"center_{n}" for n in names] + ["member"])
            for i in idx:
                w.writerow([int(i)] + [format_real(c) for c in centers[i]] + [int(self.mask[i])])

    def intervals_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lo", "hi"])
            for a, b in self.intervals():
                w.writerow([format_real(a), format_real(b)])


def _same(a: CellSet, b: CellSet) -> None:
    if a.partition != b.partition:
        raise PartitionMismatchError("cell sets live on different partitions")


# ---------------------------------------------------------------- set algebra
def complement(S: CellSet) -> CellSet:
    return CellSet.from_mask(S.partition, ~S.mask)


def _points(S: CellSet):
    return S.geometry[1] if S.geometry is not None and S.geometry[0] == "points" else None


def union(A: CellSet, B: CellSet) -> CellSet:
    _same(A, B)
    pa, pb = _points(A), _points(B)
    if pa is not None and pb is not None:
        return CellSet.from_points(A.partition, np.unique(np.concatenate([pa, pb]), axis=0))
    return CellSet.from_mask(A.partition, A.mask | B.mask)


def intersect(A: CellSet, B: CellSet) -> CellSet:
    """Cell intersection; point representatives of either side survive if the other side contains them."""
    _same(A, B)
    pa, pb = _points(A), _points(B)
    if pa is not None or pb is not None:
        pts, other = (pa, B) if pa is not None else (pb, A)
        pts = pts[other.contains(pts)] if len(pts) else pts
        if not len(pts):
            return CellSet(A.partition, (), ("points", pts))
        cells, _ = A.partition.cells_touching(pts)
        kept = np.intersect1d(cells, np.flatnonzero(A.mask & B.mask))
        return CellSet(A.partition, kept, ("points", pts))
    return CellSet.from_mask(A.partition, A.mask & B.mask)


def difference(A: CellSet, B: CellSet) -> CellSet:
    _same(A, B)
    return CellSet.from_mask(A.partition, A.mask & ~B.mask)


def dilate(S: CellSet, k: int = 1) -> CellSet:
    """Grow by ``k`` cells (Chebyshev neighbourhood); approximates closure / padding."""
    if k <= 0 or S.is_empty():
        return S
    st = np.ones((3,) * S.partition.dim, dtype=bool)
    grown = ndimage.binary_dilation(S.grid_mask(), structure=st, iterations=int(k), border_value=0)
    return CellSet.from_mask(S.partition, grown)


def erode(S: CellSet, k: int = 1) -> CellSet:
    """Shrink by ``k`` cells; approximates ``int S`` relative to the box (box faces are not boundary)."""
    if k <= 0:
        return S
    return complement(dilate(complement(S), k))


def boundary_cells(S: CellSet) -> CellSet:
    """Member cells with a non-member neighbour inside the box."""
    return difference(S, erode(S, 1))


# ---------------------------------------------------------------- distances
def _box_dist(points: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Distance from each point to each box, shape (len(points), len(lo))."""
    gap = np.maximum(np.maximum(lo[None] - points[:, None], points[:, None] - hi[None]), 0.0)
    return np.sqrt(np.sum(gap * gap, axis=-1))


def _dist_to_set(points: np.ndarray, S: CellSet, chunk: int = 512) -> np.ndarray:
    lo, hi = S.partition.cell_bounds(S.members)
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk):
        out[start:start + chunk] = _box_dist(points[start:start + chunk], lo, hi).min(axis=1)
    return out


def dist_point_set(x, S: CellSet) -> float:
    """Euclidean distance from ``x`` to the union of the member cells."""
    if S.is_empty():
        raise EmptySetError("distance to an empty cell set is undefined (+inf)")
    pts = np.asarray(x, dtype=np.float64).reshape(-1, S.partition.dim)
    return float(_dist_to_set(pts, S)[0]) if pts.shape[0] == 1 else _dist_to_set(pts, S)


def hausdorff_semi(A: CellSet, B: CellSet) -> float:
    """Certified upper bound on ``sup_{a in A} dist(a, B)`` for the cell unions.

    Cells of ``A`` inside ``B`` contribute 0; any other cell contributes the
    distance from its center to ``B`` plus half a cell diameter. Hence the
    value is 0 iff ``A`` is a subset of ``B`` and at most one cell diameter
    when ``A`` lies in ``dilate(B, 1)``. Empty ``A`` gives 0.
    """
    _same(A, B)
    if A.is_empty():
        return 0.0
    if B.is_empty():
        raise EmptySetError("Hausdorff semi-distance to an empty set is undefined")
    outside = A.members[~B.mask[A.members]]
    if outside.size == 0:
        return 0.0
    d = _dist_to_set(A.partition.centers(outside), B)
    return float(d.max() + 0.5 * A.partition.cell_diameter)


def hausdorff(A: CellSet, B: CellSet) -> float:
    """Symmetric version ``max(d(A|B), d(B|A))``; two empty sets are at distance 0."""
    if A.is_empty() and B.is_empty():
        return 0.0
    if A.is_empty() or B.is_empty():
        return float("inf")
    return max(hausdorff_semi(A, B), hausdorff_semi(B, A))


# ---------------------------------------------------------------- images
def _fill_boxes(partition: Partition, lo_idx: np.ndarray, hi_idx: np.ndarray) -> np.ndarray:
    """Mark every cell in the index boxes ``[lo_idx, hi_idx]`` (inclusive)."""
    n = partition.cells_per_axis
    d = partition.dim
    if d == 1:
        diff = np.zeros(n + 1, dtype=np.int64)
        np.add.at(diff, lo_idx[:, 0], 1)
        np.add.at(diff, hi_idx[:, 0] + 1, -1)
        return np.cumsum(diff[:-1]) > 0
    diff = np.zeros((n + 1, n + 1), dtype=np.int64)
    a0, a1 = lo_idx[:, 0], lo_idx[:, 1]
    b0, b1 = hi_idx[:, 0] + 1, hi_idx[:, 1] + 1
    np.add.at(diff, (a0, a1), 1)
    np.add.at(diff, (a0, b1), -1)
    np.add.at(diff, (b0, a1), -1)
    np.add.at(diff, (b0, b1), 1)
    return (np.cumsum(np.cumsum(diff, axis=0), axis=1)[:-1, :-1] > 0).ravel()


def cells_of_images(partition: Partition, Y: np.ndarray, groups: Optional[np.ndarray]) -> np.ndarray:
    """Mask of cells hit by image points.

    With ``groups`` given, each group's images are replaced by the index box
    spanning them (exact image of a cell under a 1-D homeomorphism; a
    bounding-box outer approximation in 2-D). Without groups every point
    marks the closed cells containing it.
    """
    Y = Y.reshape(-1, partition.dim)
    if groups is None:
        cells, _ = partition.cells_touching(Y)
        mask = np.zeros(partition.n_cells, dtype=bool)
        mask[cells] = True
        return mask
    n = partition.cells_per_axis
    c = (Y - partition.box.lo) / partition.width
    uniq, inv = np.unique(groups, return_inverse=True)
    cmin = np.full((uniq.size, partition.dim), np.inf)
    cmax = np.full((uniq.size, partition.dim), -np.inf)
    for axis in range(partition.dim):
        np.minimum.at(cmin[:, axis], inv, c[:, axis])
        np.maximum.at(cmax[:, axis], inv, c[:, axis])
    # cells meeting the hull [cmin, cmax] in more than a face
    lo = np.clip(np.floor(cmin + _EDGE_EPS).astype(np.int64), 0, n - 1)
    hi = np.clip(np.ceil(cmax - _EDGE_EPS).astype(np.int64) - 1, 0, n - 1)
    return _fill_boxes(partition, lo, np.maximum(lo, hi))


def image_cells(S: CellSet, images: np.ndarray, owner: Optional[np.ndarray], pad: int = 1) -> CellSet:
    """Cell set hit by precomputed images of ``S.sample_points()``; ``images`` is (n_times, m, d)."""
    p = S.partition
    images = np.asarray(images).reshape(-1, images.shape[-2], p.dim)
    if owner is None:
        groups = None
    else:
        groups = (np.arange(images.shape[0])[:, None] * (owner.max() + 1) + owner[None, :]).ravel()
    out = CellSet.from_mask(p, cells_of_images(p, images, groups))
    return dilate(out, pad)


def image_under_flow(S: CellSet, sys: CocycleSystem, t: float, path: NoisePath,
                     samples_per_cell: int = DEFAULT_SAMPLES, pad: int = 1) -> CellSet:
    """Outer approximation of ``phi(t, omega) S`` padded by ``pad`` cells."""
    if S.is_empty():
        return S
    pts, owner = S.sample_points(samples_per_cell)
    Y = sys.flow_times(np.array([float(t)]), path, pts)
    return image_cells(S, Y, owner, pad)


# ---------------------------------------------------------------- random sets
class RandomSet:
    """A rule ``omega -> CellSet`` evaluated per noise realization and cached.

    ``realizations`` exposes the cached values on unshifted paths, keyed by
    seed.
    """

    def __init__(self, rule: Callable[[NoisePath], CellSet], description: str = "",
                 constant: Optional[CellSet] = None, partition: Optional[Partition] = None):
        self._rule = rule
        self.description = description
        self.constant = constant
        self.partition = constant.partition if constant is not None else partition
        self._cache = {}

    @classmethod
    def fixed(cls, S: CellSet, description: str = "") -> "RandomSet":
        return cls(lambda path: S, description or repr(S), constant=S)

    @property
    def is_constant(self) -> bool:
        return self.constant is not None

    def __call__(self, path: NoisePath) -> CellSet:
        if self.constant is not None:
            return self.constant
        key = path.key
        hit = self._cache.get(key)
        if hit is None:
            hit = self._rule(path)
            self._cache[key] = hit
        return hit

    @property
    def realizations(self) -> dict:
        if self.constant is not None:
            return {}
        return {k[0]: v for k, v in self._cache.items() if k[1] == 0.0}

    def __repr__(self) -> str:
        return f"RandomSet({self.description})"


def as_random_set(obj) -> RandomSet:
    if isinstance(obj, RandomSet):
        return obj
    if isinstance(obj, CellSet):
        return RandomSet.fixed(obj)
    if callable(obj):
        return RandomSet(obj, getattr(obj, "__name__", "rule"))
    raise TypeError(f"cannot use {type(obj).__name__} as a random set")
