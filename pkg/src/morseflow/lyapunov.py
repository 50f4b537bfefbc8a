"""Entrance times and the Lyapunov functions built from them.

For an attractor-repeller pair ``(A, R)`` with fundamental neighborhood
``N`` the entrance time is

    tau(w, x) = -inf on A(w), +inf on R(w),
                inf{t : phi(t, w) x in N(theta_t w)} otherwise,

and ``L = e^tau / 2`` for ``tau < 0``, ``L = (1 + (2/pi) arctan tau) / 2``
for ``tau >= 0``. Morse decompositions combine the pair functions with
weights ``2 / 3^(i+1)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .cocycle import CocycleSystem
from .errors import ConfigurationError, HorizonError
from .noise import NoisePath, format_real
from .randset import CellSet, RandomSet, as_random_set

NEG_INF = "neg-infinity"
FINITE = "finite"
POS_INF = "pos-infinity"
_TAG_ORDER = {NEG_INF: 0, FINITE: 1, POS_INF: 2}


@dataclass(frozen=True)
class ExtendedTime:
    """A value in ``{-inf} u R u {+inf}``; finite values may be censored at the search window."""

    tag: str
    value: float = 0.0
    censored: Optional[str] = None  # "low" / "high"

    def __post_init__(self):
        if self.tag not in _TAG_ORDER:
            raise ValueError(f"unknown tag {self.tag!r}")
        if self.tag == FINITE and not math.isfinite(self.value):
            raise ValueError(f"finite entrance time must be a real number, got {self.value}")

    @classmethod
    def finite(cls, value: float, censored: Optional[str] = None) -> "ExtendedTime":
        return cls(FINITE, float(value), censored)

    @classmethod
    def neg_inf(cls) -> "ExtendedTime":
        return cls(NEG_INF, -math.inf)

    @classmethod
    def pos_inf(cls) -> "ExtendedTime":
        return cls(POS_INF, math.inf)

    @property
    def is_finite(self) -> bool:
        return self.tag == FINITE

    @property
    def uncensored(self) -> bool:
        return self.tag == FINITE and self.censored is None

    def _key(self):
        return (_TAG_ORDER[self.tag], self.value if self.tag == FINITE else 0.0)

    def __lt__(self, other):
        return self._key() < other._key()

    def __le__(self, other):
        return self._key() <= other._key()

    def __gt__(self, other):
        return self._key() > other._key()

    def __ge__(self, other):
        return self._key() >= other._key()

    def __float__(self):
        return float(self.value)


@dataclass(frozen=True)
class SearchWindow:
    """Entrance-time search: scan ``[t_lo, t_hi]`` then bisect ``refine_iters`` times.

    The scan always visits the noise nodes inside the window (the path is
    linear between them); ``dt`` optionally refines that scan further.
    """

    t_lo: float = -10.0
    t_hi: float = 10.0
    dt: Optional[float] = None
    refine_iters: int = 30

    def __post_init__(self):
        problems = []
        if self.t_lo > 0 or self.t_hi < 0:
            problems.append(f"need t_lo <= 0 <= t_hi, got [{self.t_lo}, {self.t_hi}]")
        if self.dt is not None and not self.dt > 0:
            problems.append(f"dt must be positive, got {self.dt}")
        if self.refine_iters < 0:
            problems.append("refine_iters must be >= 0")
        if problems:
            raise ConfigurationError("invalid search window", problems)

    def scan_step(self, path: NoisePath) -> float:
        step = path.grid.dt
        if self.dt is not None:
            step = step / max(1, math.ceil(step / self.dt - 1e-9))
        return step

    def precision(self, path: NoisePath) -> float:
        """Width of the final bisection bracket."""
        return self.scan_step(path) / 2 ** self.refine_iters

    def scan_times(self, path: NoisePath) -> np.ndarray:
        lo, hi = path.horizon
        if self.t_lo < lo - 1e-9 or self.t_hi > hi + 1e-9:
            raise HorizonError(f"entrance search [{self.t_lo}, {self.t_hi}] exceeds noise horizon [{lo}, {hi}]")
        nodes = path.node_times(self.t_lo, self.t_hi)
        times = np.concatenate([[self.t_lo], nodes, [0.0, self.t_hi]])
        if self.dt is not None:
            sub = max(1, math.ceil(path.grid.dt / self.dt - 1e-9))
            if sub > 1 and nodes.size > 1:
                frac = np.arange(1, sub) / sub
                fine = (nodes[:-1, None] + (nodes[1:] - nodes[:-1])[:, None] * frac[None, :]).ravel()
                times = np.concatenate([times, fine])
        times = np.unique(times)
        return times[(times >= self.t_lo) & (times <= self.t_hi)]


@dataclass
class PairContext:
    """Attractor ``A``, repeller ``R`` and fundamental neighborhood ``N`` of ``A``."""

    A: RandomSet
    R: RandomSet
    N: RandomSet
    search: SearchWindow = field(default_factory=SearchWindow)

    def __post_init__(self):
        self.A = as_random_set(self.A)
        self.R = as_random_set(self.R)
        self.N = as_random_set(self.N)

    def check(self, path: NoisePath) -> list:
        """Problems with ``A inside int N`` and ``R`` disjoint from ``N`` at this realization."""
        from .randset import erode, intersect
        a, r, n = self.A(path), self.R(path), self.N(path)
        problems = []
        if not a.issubset(erode(n, 1)):
            problems.append("A is not inside int N")
        if not intersect(r, n).is_empty():
            problems.append("R meets N")
        return problems


@dataclass
class TauBatch:
    """Vectorized entrance times: ``values`` carries -inf / +inf for the infinite tags."""

    values: np.ndarray
    censored: np.ndarray  # -1 low, 0 none, +1 high
    precision: float

    def tag(self, i: int) -> str:
        v = self.values[i]
        return NEG_INF if v == -math.inf else POS_INF if v == math.inf else FINITE

    def item(self, i: int) -> ExtendedTime:
        tag = self.tag(i)
        if tag != FINITE:
            return ExtendedTime(tag, float(self.values[i]))
        c = {-1: "low", 1: "high"}.get(int(self.censored[i]))
        return ExtendedTime.finite(self.values[i], c)

    @property
    def uncensored_finite(self) -> np.ndarray:
        return np.isfinite(self.values) & (self.censored == 0)


def _in_set(S: RandomSet, path: NoisePath, times: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Membership of ``Y[i]`` in ``S(theta_{times[i]} path)``."""
    if S.is_constant:
        return S.constant.contains(Y)
    out = np.empty(Y.shape[0], dtype=bool)
    for i, t in enumerate(times):
        out[i] = S(path.shift(float(t))).contains(Y[i:i + 1])[0]
    return out


def entrance_times(ctx: PairContext, sys: CocycleSystem, path: NoisePath, X) -> TauBatch:
    """First entrance time of each orbit into ``N(theta_t w)`` (grid scan, then bisection)."""
    X, _ = sys.as_points(X)
    sys.check_domain(X)
    m = X.shape[0]
    search = ctx.search
    values = np.full(m, np.nan)
    censored = np.zeros(m, dtype=np.int8)
    in_a = ctx.A(path).contains(X)
    in_r = ctx.R(path).contains(X) & ~in_a
    values[in_a] = -math.inf
    values[in_r] = math.inf
    todo = np.flatnonzero(~in_a & ~in_r)
    prec = search.precision(path)
    if todo.size == 0:
        return TauBatch(values, censored, prec)
    times = search.scan_times(path)
    Xt = X[todo]
    Y = sys.flow_times(times, path, Xt)  # (n_t, m', d)
    nt = len(times)
    if ctx.N.is_constant:
        inside = ctx.N.constant.contains(Y.reshape(-1, sys.dim)).reshape(nt, -1)
    else:
        inside = np.stack([ctx.N(path.shift(float(t))).contains(Y[k]) for k, t in enumerate(times)])
    hit = inside.any(axis=0)
    first = np.argmax(inside, axis=0)
    never = ~hit
    values[todo[never]] = search.t_hi
    censored[todo[never]] = 1
    at_start = hit & (first == 0)
    values[todo[at_start]] = search.t_lo
    censored[todo[at_start]] = -1
    sel = np.flatnonzero(hit & (first > 0))
    if sel.size:
        k = first[sel]
        lo = times[k - 1].copy()
        hi = times[k].copy()
        pts = Xt[sel]
        lo_states = Y[k - 1, sel]
        for _ in range(search.refine_iters):
            mid = 0.5 * (lo + hi)
            Ym = sys.flow_pairs(mid, path, pts, lo, lo_states)
            ok = _in_set(ctx.N, path, mid, Ym)
            hi = np.where(ok, mid, hi)
            moved = ~ok
            lo = np.where(moved, mid, lo)
            if sys.kind != "exact-double-well":
                lo_states = np.where(moved[:, None], Ym, lo_states)
        values[todo[sel]] = hi
    return TauBatch(values, censored, prec)


def entrance_time(ctx: PairContext, sys: CocycleSystem, path: NoisePath, x) -> ExtendedTime:
    return entrance_times(ctx, sys, path, np.atleast_1d(np.asarray(x, dtype=np.float64))
                          if sys.dim == 1 else np.asarray(x, dtype=np.float64).reshape(1, -1)).item(0)


def lyap_values(tau) -> np.ndarray:
    """Vectorized Lyapunov transform of entrance times (``+-inf`` allowed)."""
    tau = np.asarray(tau, dtype=np.float64)
    with np.errstate(over="ignore"):
        neg = 0.5 * np.exp(np.minimum(tau, 0.0))
    pos = 0.5 * (1.0 + (2.0 / math.pi) * np.arctan(np.maximum(tau, 0.0)))
    return np.where(tau < 0, neg, pos)


def lyap_value(tau) -> float:
    """``L`` for one entrance time: 0 at ``-inf``, 1/2 at 0, 1 at ``+inf``."""
    if isinstance(tau, ExtendedTime):
        if tau.tag == NEG_INF:
            return 0.0
        if tau.tag == POS_INF:
            return 1.0
        tau = tau.value
    tau = float(tau)
    if tau < 0:
        return 0.5 * math.exp(tau)
    return 0.5 * (1.0 + (2.0 / math.pi) * math.atan(tau))


def pair_lyapunov(ctx: PairContext, sys: CocycleSystem, path: NoisePath, x):
    """Lyapunov function of the pair at ``(w, x)``; scalar in, scalar out."""
    batch = entrance_times(ctx, sys, path, x)
    L = lyap_values(batch.values)
    return float(L[0]) if np.ndim(x) == 0 else L


def tau_cocycle_check(ctx: PairContext, sys: CocycleSystem, path: NoisePath, x, t: float) -> Optional[float]:
    """``|tau(theta_t w, phi(t, w) x) - (tau(w, x) - t)|``; ``None`` when either side is infinite or censored.

    Both sides search the same stretch of absolute time: the shifted side
    uses the window ``[t_lo - t, t_hi - t]``. With a window that moves with
    the fiber, an orbit that visits ``N`` early, leaves and comes back would
    report different (and uncensored) first entrances on the two sides.
    """
    if t == 0:
        return 0.0
    search = ctx.search
    if not search.t_lo <= t <= search.t_hi:
        return None
    before = entrance_time(ctx, sys, path, x)
    if not before.uncensored:
        return None
    X, restore = sys.as_points(x)
    y = restore(sys.flow_points(t, path, X))
    moved = replace(ctx, search=replace(search, t_lo=search.t_lo - t, t_hi=search.t_hi - t))
    after = entrance_time(moved, sys, path.shift(t), y)
    if not after.uncensored:
        return None
    return abs(after.value - (before.value - t))


# ---------------------------------------------------------------- Morse combinations
def plateau_value(i: int) -> Fraction:
    """Exact plateau ``sum_{j<i} 2/3^(j+1) = 1 - 3^-i`` of the i-th Morse set."""
    return sum((Fraction(2, 3 ** (j + 1)) for j in range(i)), Fraction(0))


@dataclass
class MorseContext:
    """Pair contexts for ``(A_i, R_i)``, ``i = 0..n``, with ``A_0 = {}`` and ``A_n = X``."""

    pairs: list

    @classmethod
    def from_filtration(cls, partition, attractors: Sequence, repellers: Sequence, neighborhoods: Sequence,
                        search: Optional[SearchWindow] = None) -> "MorseContext":
        """Build from the inner pairs ``i = 1..n-1``; the trivial end pairs are added here."""
        if not (len(attractors) == len(repellers) == len(neighborhoods)):
            raise ConfigurationError("need one repeller and one neighborhood per inner attractor")
        search = search or SearchWindow()
        empty = CellSet.empty(partition)
        whole = CellSet.whole(partition)
        pairs = [PairContext(empty, whole, empty, search)]
        for A, R, N in zip(attractors, repellers, neighborhoods):
            pairs.append(PairContext(A, R, N, search))
        pairs.append(PairContext(whole, empty, whole, search))
        return cls(pairs)

    @property
    def n(self) -> int:
        return len(self.pairs) - 1

    @property
    def weights(self) -> np.ndarray:
        return np.array([2.0 / 3 ** (i + 1) for i in range(len(self.pairs))])


def morse_components(mctx: MorseContext, sys: CocycleSystem, path: NoisePath, X) -> tuple:
    """Pair values ``l_i`` (shape (n+1, m)) and a censoring flag per point."""
    X, _ = sys.as_points(X)
    ls = np.empty((len(mctx.pairs), X.shape[0]))
    cens = np.zeros(X.shape[0], dtype=bool)
    for i, ctx in enumerate(mctx.pairs):
        batch = entrance_times(ctx, sys, path, X)
        ls[i] = lyap_values(batch.values)
        cens |= batch.censored != 0
    return ls, cens


def morse_lyapunov(mctx: MorseContext, sys: CocycleSystem, path: NoisePath, x):
    """``L = sum_i 2 l_i / 3^(i+1)``; scalar in, scalar out."""
    ls, _ = morse_components(mctx, sys, path, x)
    L = np.zeros(ls.shape[1])
    for w, li in zip(mctx.weights, ls):
        L = L + w * li
    return float(L[0]) if np.ndim(x) == 0 else L


def monotonicity_profile(kind: str, ctx, sys: CocycleSystem, path: NoisePath, x, t_grid) -> list:
    """``[(t, L(theta_t w, phi(t, w) x)) ...]`` along one orbit."""
    if kind not in ("pair", "morse"):
        raise ConfigurationError(f"profile kind must be 'pair' or 'morse', got {kind!r}")
    X, _ = sys.as_points(x)
    if X.shape[0] != 1:
        raise ConfigurationError("monotonicity_profile follows a single orbit")
    out = []
    for t in t_grid:
        y = sys.flow_points(t, path, X)
        p = path.shift(t)
        if kind == "pair":
            val = float(lyap_values(entrance_times(ctx, sys, p, y).values)[0])
        else:
            val = float(morse_lyapunov(ctx, sys, p, y)[0])
        out.append((float(t), val))
    return out


# ---------------------------------------------------------------- fields for verification
class PairField:
    """Pair Lyapunov function as an evaluatable field ``(path, X) -> (L, censored)``."""

    def __init__(self, ctx: PairContext, sys: CocycleSystem):
        self.ctx = ctx
        self.sys = sys

    def evaluate(self, path: NoisePath, X):
        batch = entrance_times(self.ctx, self.sys, path, X)
        return lyap_values(batch.values), batch.censored != 0


class MorseField:
    def __init__(self, mctx: MorseContext, sys: CocycleSystem):
        self.mctx = mctx
        self.sys = sys

    def evaluate(self, path: NoisePath, X):
        ls, cens = morse_components(self.mctx, self.sys, path, X)
        L = np.zeros(ls.shape[1])
        for w, li in zip(self.mctx.weights, ls):
            L = L + w * li
        return L, cens


class ConstantField:
    def __init__(self, value: float):
        self.value = float(value)

    def evaluate(self, path: NoisePath, X):
        n = np.asarray(X).reshape(-1, np.asarray(X).shape[-1] if np.ndim(X) > 1 else 1).shape[0]
        return np.full(n, self.value), np.zeros(n, dtype=bool)


def write_field_csv(path_out, rows) -> None:
    """``rows``: iterable of ``(seed, x, ExtendedTime or None, L)``; ``x`` scalar or 2-vector."""
    rows = list(rows)
    two_d = bool(rows) and np.ndim(rows[0][1]) > 0
    with open(path_out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed"] + (["x", "y"] if two_d else ["x"]) + ["tau_tag", "tau_value", "L"])
        for seed, x, tau, L in rows:
            xs = [format_real(v) for v in np.atleast_1d(x)]
            tag = "" if tau is None else tau.tag
            tv = "" if tau is None else format_real(tau.value)
            w.writerow(["" if seed is None else seed] + xs + [tag, tv, format_real(L)])


def write_profile_csv(path_out, profile) -> None:
    with open(path_out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "L"])
        for t, L in profile:
            w.writerow([format_real(t), format_real(L)])
