"""Pullback limit sets, attractors, basins and entrance times on cell sets."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cocycle import CocycleSystem
from .errors import ConfigurationError, HorizonError, MisuseError
from .noise import NoisePath, format_real
from .randset import (DEFAULT_SAMPLES, CellSet, RandomSet, _dist_to_set, as_random_set, boundary_cells,
                      cells_of_images, complement, difference, dilate, erode, hausdorff,
                      hausdorff_semi, image_cells, image_under_flow, union)

DEFAULT_PASS_FRACTION = 0.95


@dataclass(frozen=True)
class PullbackSchedule:
    """Finite ladder of lookback times replacing ``T -> infinity``.

    ``dt`` is the sampling step of ``t`` inside each ladder window.
    """

    T_ladder: tuple
    samples_per_cell: int = DEFAULT_SAMPLES
    stop_tol: float = 0.0
    dt: float = 0.01

    def __post_init__(self):
        ladder = tuple(float(t) for t in self.T_ladder)
        object.__setattr__(self, "T_ladder", ladder)
        problems = []
        if not ladder:
            problems.append("T_ladder must be nonempty")
        elif any(b <= a for a, b in zip(ladder, ladder[1:])):
            problems.append(f"T_ladder must be strictly increasing, got {ladder}")
        elif ladder[0] < 0:
            problems.append("T_ladder entries must be >= 0")
        if int(self.samples_per_cell) != self.samples_per_cell or self.samples_per_cell < 1:
            problems.append(f"samples_per_cell must be a positive integer, got {self.samples_per_cell}")
        if self.stop_tol < 0:
            problems.append(f"stop_tol must be >= 0, got {self.stop_tol}")
        if not self.dt > 0:
            problems.append(f"dt must be positive, got {self.dt}")
        if problems:
            raise ConfigurationError("invalid pullback schedule", problems)

    @property
    def T_max(self) -> float:
        return self.T_ladder[-1]

    @classmethod
    def uniform(cls, T_max: float, step: float, **kw) -> "PullbackSchedule":
        n = int(round(T_max / step))
        return cls(tuple(step * np.arange(n + 1)), **kw)


@dataclass
class LimitResult:
    limit: CellSet
    converged: bool
    history: list  # (T, CellSet, hausdorff step)
    under_resolved: bool = False

    def history_rows(self) -> list:
        return [(T, step) for T, _, step in self.history]

    def history_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T", "hausdorff_step"])
            for T, step in self.history_rows():
                w.writerow([format_real(T), format_real(step)])


def _window_times(T_lo: float, T_hi: float, dt: float) -> np.ndarray:
    if T_hi <= T_lo:
        return np.array([T_lo])
    n = max(1, int(math.ceil((T_hi - T_lo) / dt - 1e-9)))
    return T_lo + (T_hi - T_lo) * np.arange(n + 1) / n


def _check_horizon(path: NoisePath, t_lo: float, t_hi: float) -> None:
    lo, hi = path.horizon
    if t_lo < lo - 1e-9 or t_hi > hi + 1e-9:
        raise HorizonError(f"analysis needs noise on [{t_lo}, {t_hi}], path covers [{lo}, {hi}]")


def _pulled_images(D: RandomSet, sys: CocycleSystem, path: NoisePath, times: np.ndarray,
                   k: int, backward: bool) -> np.ndarray:
    """Mask union over ``t`` of ``phi(t, theta_{-t} w) D(theta_{-t} w)`` (or its time reversal)."""
    p = D.partition
    mask = np.zeros(p.n_cells, dtype=bool)
    sign = 1.0 if backward else -1.0
    mover = sys.pullback_inverse if backward else sys.pullback
    if D.is_constant:
        S = D.constant
        if S.is_empty():
            return mask
        pts, owner = S.sample_points(k)
        Y = mover(times, path, pts)
        groups = None
        if owner is not None:
            groups = (np.arange(len(times))[:, None] * (owner.max() + 1) + owner[None, :]).ravel()
        return cells_of_images(p, Y, groups)
    for t in times:
        S = D(path.shift(sign * t))
        if S.is_empty():
            continue
        pts, owner = S.sample_points(k)
        mask |= cells_of_images(p, mover(np.array([t]), path, pts), owner)
    return mask


def _limit(D, sys, path, sched: PullbackSchedule, backward: bool) -> LimitResult:
    D = as_random_set(D)
    ladder = sched.T_ladder
    if backward:
        _check_horizon(path, 0.0, sched.T_max)
    else:
        _check_horizon(path, -sched.T_max, 0.0)
    part = D.partition
    windows = []
    for i, T in enumerate(ladder):
        T_next = ladder[i + 1] if i + 1 < len(ladder) else T
        w_mask = _pulled_images(D, sys, path, _window_times(T, T_next, sched.dt),
                                sched.samples_per_cell, backward)
        windows.append(w_mask)
    # tails: union over t >= T_k (up to T_max); nested decreasing by construction
    tails = [None] * len(windows)
    acc = np.zeros(part.n_cells, dtype=bool)
    for i in range(len(windows) - 1, -1, -1):
        acc = acc | windows[i]
        tails[i] = dilate(CellSet.from_mask(part, acc), 1)
    start = D(path)
    history = []
    prev = union(dilate(start, 1), tails[0]) if not start.is_empty() else tails[0]
    under = False
    for T, cur in zip(ladder, tails):
        if cur.is_empty():
            under = True
            step = 0.0 if prev.is_empty() else float("inf")
        else:
            step = hausdorff(prev, cur)
        history.append((T, cur, step))
        prev = cur
    limit = tails[-1]
    if limit.is_empty():
        return LimitResult(limit, True, history, under_resolved=True)
    converged = len(history) > 1 and history[-1][2] <= sched.stop_tol
    return LimitResult(limit, converged, history, under_resolved=under)


def omega_limit(D, sys: CocycleSystem, path: NoisePath, sched: PullbackSchedule) -> LimitResult:
    """Pullback omega-limit ``Omega_D(w)`` truncated to the schedule's ladder."""
    return _limit(D, sys, path, sched, backward=False)


def alpha_limit(D, sys: CocycleSystem, path: NoisePath, sched: PullbackSchedule) -> LimitResult:
    """Alpha-limit ``alpha_D(w)``: images ``phi(-t, theta_t w) D(theta_t w)`` for large ``t``."""
    return _limit(D, sys, path, sched, backward=True)


def invariant_hull(N, sys: CocycleSystem, path: NoisePath, T_max: float, dt: float = 0.01,
                   samples_per_cell: int = DEFAULT_SAMPLES) -> CellSet:
    """Union of pullback images of ``N`` over ``t in [0, T_max]``, padded by one cell."""
    N = as_random_set(N)
    _check_horizon(path, -T_max, 0.0)
    mask = _pulled_images(N, sys, path, _window_times(0.0, T_max, dt), samples_per_cell, False)
    return dilate(union(CellSet.from_mask(N.partition, mask), N(path)), 1)


def invariant_hull_rule(N, sys: CocycleSystem, T_max: float, dt: float = 0.01,
                        samples_per_cell: int = DEFAULT_SAMPLES) -> RandomSet:
    """``w -> invariant_hull(N, ..., w)`` as a cached random set."""
    N = as_random_set(N)
    return RandomSet(lambda p: invariant_hull(N, sys, p, T_max, dt, samples_per_cell),
                     f"hull({N.description}, T={T_max})", partition=N.partition)


@dataclass
class InvarianceCheck:
    invariant: bool
    max_violation: float

    def __bool__(self) -> bool:
        return self.invariant


def is_forward_invariant(D, sys: CocycleSystem, path: NoisePath, t_checks: Sequence[float],
                         samples_per_cell: int = DEFAULT_SAMPLES) -> InvarianceCheck:
    """Check ``image(D(w), t)`` inside ``dilate(D(theta_t w), 1)`` at every checked ``t``."""
    D = as_random_set(D)
    worst = 0.0
    for t in t_checks:
        if t <= 0:
            raise MisuseError(f"forward-invariance checks need t > 0, got {t}")
        S = D(path)
        if S.is_empty():
            continue
        img = image_under_flow(S, sys, t, path, samples_per_cell)
        target = D(path.shift(t))
        escaped = difference(img, dilate(target, 1))
        if not escaped.is_empty():
            worst = max(worst, hausdorff_semi(escaped, target) if not target.is_empty() else math.inf)
    return InvarianceCheck(worst == 0.0, worst)


@dataclass
class SeedRow:
    seed: Optional[int]
    converged: bool
    hausdorff_to_target: float
    passed: bool
    note: str = ""


@dataclass
class VerificationReport:
    name: str
    rows: list
    pass_fraction_required: float
    precondition_ok: bool = True
    details: dict = field(default_factory=dict)

    @property
    def pass_fraction(self) -> float:
        return sum(r.passed for r in self.rows) / len(self.rows) if self.rows else 0.0

    @property
    def passed(self) -> bool:
        return self.precondition_ok and bool(self.rows) and self.pass_fraction >= self.pass_fraction_required

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "converged", "hausdorff_to_target", "pass"])
            for r in self.rows:
                w.writerow(["" if r.seed is None else r.seed, int(r.converged),
                            format_real(r.hausdorff_to_target), int(r.passed)])


def _invariance_error(A: RandomSet, sys, path, t_checks, k) -> float:
    """Largest escape of ``A`` under the flow (forward) and its inverse (backward)."""
    worst = 0.0
    for t in t_checks:
        here = A(path)
        there = A(path.shift(t))
        if here.is_empty() and there.is_empty():
            continue
        fwd = image_under_flow(here, sys, t, path, k)
        pts, owner = there.sample_points(k)
        bwd = image_cells(there, sys.pullback_inverse(np.array([t]), path, pts), owner)
        worst = max(worst, hausdorff_semi(fwd, there), hausdorff_semi(bwd, here))
    return worst


def verify_attractor(A, N, sys: CocycleSystem, paths: Sequence[NoisePath], sched: PullbackSchedule,
                     pass_fraction: float = DEFAULT_PASS_FRACTION, tol_cells: float = 2.0,
                     t_checks: Sequence[float] = (0.5, 1.0)) -> VerificationReport:
    """Check ``A(w) = Omega_N(w)`` (within ``tol_cells``) and invariance of ``A`` per realization."""
    A = as_random_set(A)
    N = as_random_set(N)
    rows = []
    for path in paths:
        a, n = A(path), N(path)
        if not a.issubset(erode(n, 1)):
            raise MisuseError(f"seed {path.seed}: attractor candidate is not inside int N")
        tol = tol_cells * a.partition.cell_diameter
        lim = omega_limit(N, sys, path, sched)
        dist = hausdorff(lim.limit, a)
        inv = _invariance_error(A, sys, path, t_checks, sched.samples_per_cell)
        ok = dist <= tol + 1e-12 and inv <= tol + 1e-12
        note = "" if ok else ("omega-limit mismatch" if dist > tol + 1e-12 else "not invariant")
        rows.append(SeedRow(path.seed, lim.converged, dist, ok, note))
    return VerificationReport("verify_attractor", rows, pass_fraction)


def verify_strong_neighborhood(N, A, sys: CocycleSystem, paths: Sequence[NoisePath],
                               t_checks: Sequence[float], samples_per_cell: int = DEFAULT_SAMPLES,
                               pass_fraction: float = DEFAULT_PASS_FRACTION) -> VerificationReport:
    """Check that boundary points of ``N(w)`` land in ``int N(theta_t w)`` for every ``t > 0`` checked."""
    N = as_random_set(N)
    rows = []
    precondition = True
    for path in paths:
        inv = is_forward_invariant(N, sys, path, t_checks, samples_per_cell)
        if not inv:
            precondition = False
            rows.append(SeedRow(path.seed, False, inv.max_violation, False, "N not forward invariant"))
            continue
        edge = boundary_cells(N(path))
        worst = 0.0
        if not edge.is_empty():
            pts, _ = edge.partition.sample_lattice(edge.members, samples_per_cell)
            for t in t_checks:
                Y = sys.flow_times(np.array([t]), path, pts)[0]
                inner = erode(N(path.shift(t)), 1)
                miss = ~inner.mask[edge.partition.cell_of(Y)]
                if miss.any():
                    if inner.is_empty():
                        worst = math.inf
                    else:
                        worst = max(worst, float(np.max(_dist_to_set(Y[miss], inner))))
        rows.append(SeedRow(path.seed, True, worst, worst == 0.0, "" if worst == 0.0 else "boundary escapes interior"))
    return VerificationReport("verify_strong_neighborhood", rows, pass_fraction, precondition)


def basin_estimate(A, N, sys: CocycleSystem, path: NoisePath, T_max: float, dt: float = 0.01,
                   samples_per_cell: int = DEFAULT_SAMPLES) -> CellSet:
    """Cells all of whose sample points enter ``int N(theta_t w)`` for some ``0 <= t <= T_max``."""
    N = as_random_set(N)
    part = N.partition
    _check_horizon(path, 0.0, T_max)
    idx = np.arange(part.n_cells)
    pts, owner = part.sample_lattice(idx, samples_per_cell)
    times = _window_times(0.0, T_max, dt)
    Y = sys.flow_times(times, path, pts)
    entered = np.zeros(pts.shape[0], dtype=bool)
    if N.is_constant:
        inner = erode(N.constant, 1).mask
        cells = part.cell_of(Y.reshape(-1, part.dim)).reshape(len(times), -1)
        entered = inner[cells].any(axis=0)
    else:
        for k, t in enumerate(times):
            inner = erode(N(path.shift(t)), 1).mask
            entered |= inner[part.cell_of(Y[k])]
    all_in = np.ones(part.n_cells, dtype=bool)
    np.logical_and.at(all_in, owner, entered)
    return CellSet.from_mask(part, all_in)


def basin_rule(A, N, sys: CocycleSystem, T_max: float, dt: float = 0.01,
               samples_per_cell: int = DEFAULT_SAMPLES) -> RandomSet:
    N = as_random_set(N)
    return RandomSet(lambda p: basin_estimate(A, N, sys, p, T_max, dt, samples_per_cell),
                     f"basin(N={N.description})", partition=N.partition)


def uniform_entrance_time(K: CellSet, N, sys: CocycleSystem, path: NoisePath, T_max: float,
                          dt: float = 0.01, samples_per_cell: int = DEFAULT_SAMPLES) -> float:
    """Smallest checked ``T`` with ``phi(t, w) K`` inside ``int N(theta_t w)`` for all checked ``t >= T``.

    Images are taken without padding so the answer is not biased by two
    layers of cell slack. Returns ``inf`` when no such ``T <= T_max`` exists.
    """
    N = as_random_set(N)
    _check_horizon(path, 0.0, T_max)
    if K.is_empty():
        return 0.0
    times = _window_times(0.0, T_max, dt)
    pts, owner = K.sample_points(samples_per_cell)
    Y = sys.flow_times(times, path, pts)
    inside = np.empty(len(times), dtype=bool)
    for k, t in enumerate(times):
        img = image_cells(K, Y[k:k + 1], owner, pad=0)
        inner = erode(N(path.shift(t)) if not N.is_constant else N.constant, 1)
        inside[k] = img.issubset(inner)
    if not inside[-1]:
        return math.inf
    bad = np.flatnonzero(~inside)
    return float(times[0] if bad.size == 0 else times[bad[-1] + 1])


def repeller_by_duality(N, sys: CocycleSystem, path: NoisePath, sched: PullbackSchedule) -> LimitResult:
    """Alpha-limit of ``complement(int N)``; should reproduce the basin complement."""
    N = as_random_set(N)
    if N.is_constant:
        D = complement(erode(N.constant, 1))
    else:
        D = RandomSet(lambda p: complement(erode(N(p), 1)), f"X - int {N.description}", partition=N.partition)
    return alpha_limit(D, sys, path, sched)
