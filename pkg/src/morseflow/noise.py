"""Two-sided Wiener paths and the shift flow on them.

A :class:`NoisePath` stores Brownian levels on a finite two-sided grid and
an ``offset``; shifting never copies data, it only moves the offset, so
``shift(shift(p, s), t)`` and ``shift(p, s + t)`` read the same nodes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import ConfigurationError, HorizonError

_GRID_RTOL = 1e-9
# slack for rounding when a query lands on the horizon edge
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[t_min, t_max]`` containing ``t = 0`` as a node."""

    t_min: float
    t_max: float
    dt: float

    def __post_init__(self):
        problems = []
        if not (self.dt > 0 and math.isfinite(self.dt)):
            problems.append(f"dt must be positive, got {self.dt}")
        if self.t_min > 0:
            problems.append(f"t_min must be <= 0, got {self.t_min}")
        if self.t_max < 0:
            problems.append(f"t_max must be >= 0, got {self.t_max}")
        if not problems:
            for name, value in (("t_min", self.t_min), ("t_max", self.t_max)):
                steps = value / self.dt
                if abs(steps - round(steps)) > _GRID_RTOL * max(1.0, abs(steps)):
                    problems.append(f"{name}={value} is not a whole number of dt={self.dt} steps")
        if problems:
            raise ConfigurationError("invalid time grid: " + "; ".join(problems), problems)

    @property
    def n_neg(self) -> int:
        return int(round(-self.t_min / self.dt))

    @property
    def n_pos(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def n_nodes(self) -> int:
        return self.n_neg + self.n_pos + 1

    def times(self) -> np.ndarray:
        return np.arange(-self.n_neg, self.n_pos + 1, dtype=np.float64) * self.dt

    def covers(self, t_lo: float, t_hi: float) -> bool:
        return t_lo >= self.t_min - _EDGE_TOL and t_hi <= self.t_max + _EDGE_TOL


@dataclass(frozen=True, eq=False)
class NoisePath:
    """A sampled two-sided Brownian path ``omega`` seen through the shift ``theta_offset``.

    ``values`` are the raw node levels (with ``values`` at t=0 equal to 0);
    the path evaluates at ``u`` to ``raw(u + offset) - raw(offset)``.
    """

    grid: TimeGrid
    values: np.ndarray = field(repr=False)
    seed: Optional[int] = None
    offset: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (self.grid.n_nodes,):
            raise ConfigurationError(
                f"path has {vals.shape} values, grid needs ({self.grid.n_nodes},)"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if not self.grid.covers(self.offset, self.offset):
            raise HorizonError(f"shift offset {self.offset} outside [{self.grid.t_min}, {self.grid.t_max}]")
        object.__setattr__(self, "_base", float(self._raw(np.array([self.offset]))[0]))

    # raw, unshifted evaluation in absolute time
    def _raw(self, u):
        g = self.grid
        u = np.asarray(u, dtype=np.float64)
        if u.size and (u.min() < g.t_min - _EDGE_TOL or u.max() > g.t_max + _EDGE_TOL):
            raise HorizonError(
                f"time range [{u.min() - self.offset:.6g}, {u.max() - self.offset:.6g}] "
                f"(absolute [{u.min():.6g}, {u.max():.6g}]) outside noise horizon "
                f"[{g.t_min}, {g.t_max}]"
            )
        # index coordinates relative to the t_min node; t=0 is an exact node
        pos = np.clip((u - g.t_min) / g.dt, 0.0, g.n_nodes - 1)
        k = np.minimum(np.floor(pos).astype(np.int64), g.n_nodes - 2)
        frac = pos - k
        v = self.values
        return v[k] + frac * (v[k + 1] - v[k])

    def evaluate(self, t):
        """Brownian level ``W_t`` of this (possibly shifted) path; scalar or array ``t``."""
        scalar = np.ndim(t) == 0
        out = self._raw(np.asarray(t, dtype=np.float64) + self.offset) - self._base
        if scalar:
            return float(out)
        return out

    __call__ = evaluate

    def shift(self, s: float) -> "NoisePath":
        """``theta_s`` of this path: evaluates at ``u`` to ``self(u + s) - self(s)``."""
        if s == 0:
            return self
        return NoisePath(self.grid, self.values, self.seed, self.offset + float(s))

    @property
    def horizon(self) -> tuple:
        """Relative time range still evaluable from this path."""
        return (self.grid.t_min - self.offset, self.grid.t_max - self.offset)

    def node_times(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Relative times of the stored nodes that fall in ``[t_lo, t_hi]``."""
        g = self.grid
        a = math.ceil((t_lo + self.offset) / g.dt - 1e-9)
        b = math.floor((t_hi + self.offset) / g.dt + 1e-9)
        if b < a:
            return np.empty(0)
        return np.arange(a, b + 1, dtype=np.float64) * g.dt - self.offset

    @property
    def key(self) -> tuple:
        """Hashable identity (seed, offset) used for caching per-realization sets."""
        return (self.seed, round(self.offset, 12), id(self.values) if self.seed is None else 0)

    def to_csv(self, path) -> None:
        """Dump the stored nodes as ``t,value`` (relative time, shifted levels)."""
        times = self.grid.times() - self.offset
        vals = self.values - self._base
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "value"])
            for t, v in zip(times, vals):
                writer.writerow([format_real(t), format_real(v)])


def format_real(v) -> str:
    return format(float(v), ".17g")


def sample_wiener(grid: TimeGrid, seed: int) -> NoisePath:
    """Sample a two-sided Wiener path with ``W_0 = 0``.

    The positive and negative halves come from two independent child
    streams of ``SeedSequence(seed)``, so the same ``(grid, seed)`` always
    gives bit-identical values.
    """
    if not isinstance(grid, TimeGrid):
        raise ConfigurationError(f"expected a TimeGrid, got {type(grid).__name__}")
    pos_ss, neg_ss = np.random.SeedSequence(int(seed)).spawn(2)
    sd = math.sqrt(grid.dt)
    up = np.random.default_rng(pos_ss).standard_normal(grid.n_pos) * sd
    down = np.random.default_rng(neg_ss).standard_normal(grid.n_neg) * sd
    values = np.empty(grid.n_nodes)
    values[grid.n_neg] = 0.0
    values[grid.n_neg + 1:] = np.cumsum(up)
    values[:grid.n_neg] = np.cumsum(down)[::-1]
    return NoisePath(grid, values, int(seed))


def zero_path(grid: TimeGrid) -> NoisePath:
    """Noise-free debug path (``W = 0`` everywhere)."""
    return NoisePath(grid, np.zeros(grid.n_nodes), None)


def sample_paths(grid: TimeGrid, seeds: Iterable[int]) -> list:
    return [sample_wiener(grid, s) for s in seeds]


def shift(path: NoisePath, s: float) -> NoisePath:
    return path.shift(s)


def evaluate(path: NoisePath, t):
    return path.evaluate(t)
