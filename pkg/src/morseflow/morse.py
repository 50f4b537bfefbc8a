"""Attractor filtrations, repellers, Morse sets and their Lyapunov certificates."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .cocycle import CocycleSystem
from .errors import ConfigurationError, FiltrationError
from .lyapunov import MorseContext, PairContext, SearchWindow, plateau_value
from .noise import NoisePath, format_real
from .pullback import (DEFAULT_PASS_FRACTION, PullbackSchedule, _invariance_error, basin_estimate,
                       repeller_by_duality)
from .randset import (DEFAULT_SAMPLES, CellSet, Partition, RandomSet, as_random_set, complement,
                      difference, dilate, hausdorff, intersect, union)


@dataclass
class Filtration:
    """Inner attractors ``A_1..A_{n-1}`` with fundamental neighborhoods ``N_1..N_{n-1}``.

    The end members ``A_0 = {}`` and ``A_n = X`` are implicit; use
    :meth:`attractor` for the full list.
    """

    partition: Partition
    inner_attractors: list
    neighborhoods: list
    names: Optional[list] = None

    def __post_init__(self):
        if len(self.inner_attractors) != len(self.neighborhoods):
            raise ConfigurationError("need exactly one neighborhood per inner attractor")
        self.inner_attractors = [as_random_set(a) for a in self.inner_attractors]
        self.neighborhoods = [as_random_set(n) for n in self.neighborhoods]
        for s in self.inner_attractors + self.neighborhoods:
            if s.partition is not None and s.partition != self.partition:
                raise ConfigurationError("filtration sets must share one partition")
        self._empty = RandomSet.fixed(CellSet.empty(self.partition), "empty")
        self._whole = RandomSet.fixed(CellSet.whole(self.partition), "X")

    @property
    def n(self) -> int:
        return len(self.inner_attractors) + 1

    def attractor(self, i: int) -> RandomSet:
        if i == 0:
            return self._empty
        if i == self.n:
            return self._whole
        return self.inner_attractors[i - 1]

    def neighborhood(self, i: int) -> RandomSet:
        if i == 0:
            return self._empty
        if i == self.n:
            return self._whole
        return self.neighborhoods[i - 1]

    def check_nesting(self, paths: Sequence[NoisePath]) -> None:
        """Raise :class:`FiltrationError` unless ``A_{i-1}`` is a strict subset of ``A_i`` on every path.

        Strict means at least one full cell of ``A_i`` is missing from
        ``A_{i-1}``; the grid cannot certify anything thinner.
        """
        witnesses = []
        for path in paths:
            for i in range(1, self.n + 1):
                lo, hi = self.attractor(i - 1)(path), self.attractor(i)(path)
                extra = difference(lo, hi)
                if not extra.is_empty():
                    witnesses.append((path.seed, i, "not nested", extra.members[:10].tolist()))
                elif len(hi) - len(lo) < 1:
                    witnesses.append((path.seed, i, "not strict", []))
        if witnesses:
            raise FiltrationError(f"filtration nesting fails at {len(witnesses)} (seed, level) pairs", witnesses)


@dataclass
class RepellerCheck:
    """Per-seed distance between the basin-complement repeller and its alpha-limit twin."""

    seeds: list
    discrepancy: list
    tol: float

    @property
    def pass_fraction(self) -> float:
        if not self.discrepancy:
            return 1.0
        return float(np.mean([d <= self.tol + 1e-12 for d in self.discrepancy]))

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancy, default=0.0)


@dataclass
class RepellerResult:
    rule: RandomSet
    check: RepellerCheck


def repeller_of(A, N, sys: CocycleSystem, paths: Sequence[NoisePath], sched: PullbackSchedule,
                basin_T: Optional[float] = None, tol_cells: float = 2.0) -> RepellerResult:
    """Repeller ``X - B(A)`` as a random set, cross-checked against ``alpha(X - int N)`` on ``paths``."""
    A = as_random_set(A)
    N = as_random_set(N)
    part = N.partition if N.partition is not None else A.partition
    T = sched.T_max if basin_T is None else basin_T
    if N.is_constant and N.constant == CellSet.whole(part):
        rule = RandomSet.fixed(CellSet.empty(part), "empty")
        return RepellerResult(rule, RepellerCheck([p.seed for p in paths], [0.0] * len(paths), 0.0))

    def _rule(p: NoisePath) -> CellSet:
        return complement(basin_estimate(A, N, sys, p, T, sched.dt, sched.samples_per_cell))

    rule = RandomSet(_rule, f"X - basin({A.description})", partition=part)
    tol = tol_cells * part.cell_diameter
    disc = []
    for p in paths:
        dual = repeller_by_duality(N, sys, p, sched).limit
        disc.append(hausdorff(rule(p), dual))
    return RepellerResult(rule, RepellerCheck([p.seed for p in paths], disc, tol))


@dataclass
class MorseDecomposition:
    """Morse sets ``M_i = A_i & R_{i-1}`` with exact plateaus ``alpha_i``.

    ``repellers`` has ``n + 1`` entries, ``R_0 = X`` through ``R_n = {}``.
    """

    filtration: Filtration
    repellers: list
    morse_sets: list
    plateaus: list
    repeller_checks: list = field(default_factory=list)
    findings: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.morse_sets)

    def union_of_morse_sets(self, path: NoisePath) -> CellSet:
        out = CellSet.empty(self.filtration.partition)
        for M in self.morse_sets:
            out = union(out, M(path))
        return out

    def morse_context(self, search: Optional[SearchWindow] = None) -> MorseContext:
        """Pair contexts ``(A_i, R_i, N_i)`` for the Morse Lyapunov function."""
        search = search or SearchWindow()
        f = self.filtration
        return MorseContext([PairContext(f.attractor(i), self.repellers[i], f.neighborhood(i), search)
                             for i in range(f.n + 1)])

    def with_repeller(self, i: int, rule) -> "MorseDecomposition":
        """Copy with ``R_i`` replaced and the Morse sets left untouched (for negative controls)."""
        reps = list(self.repellers)
        reps[i] = as_random_set(rule)
        return replace(self, repellers=reps)


def _morse_rule(A: RandomSet, R: RandomSet, i: int) -> RandomSet:
    return RandomSet(lambda p: intersect(A(p), R(p)), f"M_{i}", partition=A.partition or R.partition)


def build_decomposition(f: Filtration, sys: CocycleSystem, paths: Sequence[NoisePath],
                        sched: PullbackSchedule, basin_T: Optional[float] = None,
                        t_checks: Sequence[float] = (0.02,), tol_cells: float = 2.0,
                        repellers: Optional[dict] = None) -> MorseDecomposition:
    """Derive repellers, Morse sets and plateaus from a filtration; check them on ``paths``.

    ``repellers`` may pre-supply ``{i: RepellerResult}`` so coarsening
    reuses already computed basins.
    """
    f.check_nesting(paths)
    part = f.partition
    reps = [RandomSet.fixed(CellSet.whole(part), "X")]
    checks = [None]
    for i in range(1, f.n):
        res = (repellers or {}).get(i)
        if res is None:
            res = repeller_of(f.attractor(i), f.neighborhood(i), sys, paths, sched, basin_T, tol_cells)
        reps.append(res.rule)
        checks.append(res.check)
    reps.append(RandomSet.fixed(CellSet.empty(part), "empty"))
    checks.append(None)
    morse = [_morse_rule(f.attractor(i), reps[i - 1], i) for i in range(1, f.n + 1)]
    plateaus = [plateau_value(i) for i in range(1, f.n + 1)]

    findings = {"overlaps": [], "not_invariant": [], "repeller_nesting": [], "empty_morse_sets": []}
    slack = tol_cells * part.cell_diameter
    for p in paths:
        sets = [M(p) for M in morse]
        for i in range(len(sets)):
            if sets[i].is_empty():
                findings["empty_morse_sets"].append((p.seed, i + 1))
            for j in range(i + 1, len(sets)):
                common = intersect(sets[i], sets[j])
                if len(common) > 1:
                    findings["overlaps"].append((p.seed, i + 1, j + 1, common.members[:10].tolist()))
        for i, M in enumerate(morse, start=1):
            err = _invariance_error(M, sys, p, t_checks, sched.samples_per_cell)
            if err > slack + 1e-12:
                findings["not_invariant"].append((p.seed, i, err))
        for i in range(1, f.n + 1):
            leak = difference(reps[i](p), dilate(reps[i - 1](p), 1))
            if not leak.is_empty():
                findings["repeller_nesting"].append((p.seed, i, leak.members[:10].tolist()))
    return MorseDecomposition(f, reps, morse, plateaus, checks, findings)


@dataclass
class IdentityCheck:
    """Two-sided Hausdorff distance between ``U M_i`` and ``& (A_i | R_i)`` per seed."""

    seeds: list
    discrepancy: list
    tol: float

    @property
    def max_discrepancy(self) -> float:
        return max(self.discrepancy, default=0.0)

    @property
    def pass_fraction(self) -> float:
        if not self.discrepancy:
            return 1.0
        return float(np.mean([d <= self.tol + 1e-12 for d in self.discrepancy]))


def morse_union_identity_check(d: MorseDecomposition, paths: Sequence[NoisePath],
                               tol_cells: float = 2.0) -> IdentityCheck:
    f = d.filtration
    part = f.partition
    disc = []
    for p in paths:
        lhs = d.union_of_morse_sets(p)
        rhs = CellSet.whole(part)
        for i in range(f.n + 1):
            rhs = intersect(rhs, union(f.attractor(i)(p), d.repellers[i](p)))
        disc.append(hausdorff(lhs, rhs) if (lhs or rhs) else 0.0)
    return IdentityCheck([p.seed for p in paths], disc, tol_cells * part.cell_diameter)


def coarsen(d: MorseDecomposition, keep_indices: Sequence[int], sys: CocycleSystem,
            paths: Sequence[NoisePath], sched: PullbackSchedule, **kw) -> MorseDecomposition:
    """Decomposition of the sub-filtration ``A_{i_1} < ... < A_{i_k}`` (indices from ``1..n-1``)."""
    keep = list(keep_indices)
    f = d.filtration
    if any(b <= a for a, b in zip(keep, keep[1:])) or any(not 1 <= i <= f.n - 1 for i in keep):
        raise ConfigurationError(f"keep_indices must be increasing within 1..{f.n - 1}, got {keep}")
    sub = Filtration(f.partition, [f.attractor(i) for i in keep], [f.neighborhood(i) for i in keep],
                     [f.names[i - 1] for i in keep] if f.names else None)
    known = {j: RepellerResult(d.repellers[i], d.repeller_checks[i]) for j, i in enumerate(keep, start=1)}
    out = build_decomposition(sub, sys, paths, sched, repellers=known, **kw)
    escapes = []
    for p in paths:
        leak = difference(d.union_of_morse_sets(p), dilate(out.union_of_morse_sets(p), 1))
        if not leak.is_empty():
            escapes.append((p.seed, leak.members[:10].tolist()))
    out.findings["coarsening_escapes"] = escapes
    return out


# ---------------------------------------------------------------- Lyapunov certificate
@dataclass
class ConditionResult:
    passed: bool
    detail: str
    witnesses: list = field(default_factory=list)


@dataclass
class LyapunovCertificate:
    """Outcome of the numerical converse check; never a proof."""

    conditions: dict
    plateau_means: list
    n_checked: int
    n_censored: int

    @property
    def consistent(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    @property
    def verdict(self) -> str:
        if self.consistent:
            return "consistent with Morse decomposition"
        failed = ", ".join(k for k, c in self.conditions.items() if not c.passed)
        return f"not consistent with Morse decomposition (failed: {failed})"


def verify_by_lyapunov(candidates: Sequence, L, sys: CocycleSystem, paths: Sequence[NoisePath],
                       samples_per_cell: int = 2, t_steps: Sequence[float] = (0.5, 1.0),
                       tol_const: float = 1e-9, invariance_t: Sequence[float] = (0.02,)) -> LyapunovCertificate:
    """Check a candidate Morse family against a Lyapunov field ``L.evaluate(path, X) -> (values, censored)``.

    Conditions: ``pre`` disjoint and invariant candidates, ``ii`` constant
    ``L`` on each set, ``iii`` strictly increasing plateaus, ``iv`` strict
    decrease along orbits started off the union. Censored points are
    counted but never used as evidence.
    """
    cands = [as_random_set(c) for c in candidates]
    part = next(c.partition for c in cands if c.partition is not None)
    slack = part.cell_diameter
    pre_w, const_w, dec_w = [], [], []
    per_set = [[] for _ in cands]
    n_checked = n_censored = 0
    for p in paths:
        sets = [c(p) for c in cands]
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                if len(intersect(sets[i], sets[j])) > 1:
                    pre_w.append((p.seed, f"M_{i + 1} meets M_{j + 1}"))
            if not sets[i].is_empty():
                err = _invariance_error(cands[i], sys, p, invariance_t, DEFAULT_SAMPLES)
                if err > 2 * slack + 1e-12:
                    pre_w.append((p.seed, f"M_{i + 1} not invariant ({err:.3g})"))
        for i, S in enumerate(sets):
            if S.is_empty():
                continue
            pts, _ = S.sample_points(samples_per_cell)
            vals, cens = L.evaluate(p, pts)
            per_set[i].extend(vals[~cens].tolist())
        off = complement(union_all(sets, part))
        if off.is_empty():
            continue
        pts, _ = part.sample_lattice(off.members, samples_per_cell)
        # drop lattice points that touch a candidate cell: they are on the union by closed-cell membership
        on_union = union_all(sets, part).contains(pts)
        pts = pts[~on_union] if on_union.any() and not on_union.all() else pts
        if on_union.all():
            continue
        L0, c0 = L.evaluate(p, pts)
        for t in t_steps:
            Y = sys.flow_points(t, p, pts)
            Lt, ct = L.evaluate(p.shift(t), Y)
            usable = ~(c0 | ct)
            n_checked += int(usable.sum())
            n_censored += int((~usable).sum())
            bad = usable & ~(Lt < L0)
            for k in np.flatnonzero(bad)[:20]:
                dec_w.append((p.seed, float(pts[k, 0]) if part.dim == 1 else pts[k].tolist(),
                               int(part.cell_of(pts[k:k + 1])[0]), float(t), float(L0[k]), float(Lt[k])))
    means, spread_ok = [], True
    for i, vals in enumerate(per_set):
        if not vals:
            means.append(math.nan)
            continue
        spread = max(vals) - min(vals)
        means.append(float(np.mean(vals)))
        if spread > tol_const:
            spread_ok = False
            const_w.append((i + 1, spread))
    finite = [m for m in means if not math.isnan(m)]
    order_ok = all(b > a for a, b in zip(finite, finite[1:]))
    conds = {
        "pre": ConditionResult(not pre_w, "candidates pairwise disjoint and invariant", pre_w),
        "ii": ConditionResult(spread_ok, f"L constant on each candidate (tol {tol_const:g})", const_w),
        "iii": ConditionResult(order_ok, "plateau values strictly increasing",
                               [] if order_ok else [tuple(means)]),
        "iv": ConditionResult(not dec_w, "L strictly decreasing along orbits off the union", dec_w),
    }
    return LyapunovCertificate(conds, means, n_checked, n_censored)


def union_all(sets: Sequence[CellSet], partition: Partition) -> CellSet:
    out = CellSet.empty(partition)
    for s in sets:
        out = union(out, s)
    return out


# ---------------------------------------------------------------- reports
def write_decomposition_report(d: MorseDecomposition, paths: Sequence[NoisePath], out_csv, summary_path,
                               identity: Optional[IdentityCheck] = None,
                               certificate: Optional[LyapunovCertificate] = None) -> None:
    """Per-seed CSV (seed, i, cells, intervals, alpha_i) and a plain ``key: value`` summary."""
    part = d.filtration.partition
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "i", "cells", "intervals", "alpha", "alpha_exact"])
        for p in paths:
            for i, M in enumerate(d.morse_sets, start=1):
                S = M(p)
                cells = " ".join(str(int(c)) for c in S.members)
                iv = " ".join(f"[{format_real(a)};{format_real(b)}]" for a, b in S.intervals()) if part.dim == 1 else ""
                a = d.plateaus[i - 1]
                w.writerow(["" if p.seed is None else p.seed, i, cells, iv, format_real(float(a)), str(a)])
    lines = [f"morse_sets: {d.n}",
             "plateaus: " + ", ".join(str(a) for a in d.plateaus),
             f"seeds: {len(paths)}"]
    for i, chk in enumerate(d.repeller_checks):
        if chk is not None:
            lines.append(f"repeller_{i}_duality_pass_fraction: {format_real(chk.pass_fraction)}")
    for key, vals in sorted(d.findings.items()):
        lines.append(f"finding_{key}: {len(vals)}")
    if identity is not None:
        lines.append(f"identity_pass_fraction: {format_real(identity.pass_fraction)}")
        lines.append(f"identity_max_discrepancy: {format_real(identity.max_discrepancy)}")
    if certificate is not None:
        for k, c in certificate.conditions.items():
            lines.append(f"lyapunov_condition_{k}: {'pass' if c.passed else 'fail'}")
        lines.append(f"lyapunov_verdict: {certificate.verdict}")
    with open(summary_path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def exact_plateaus(n: int) -> list:
    return [plateau_value(i) for i in range(1, n + 1)]


__all__ = ["Filtration", "RepellerResult", "RepellerCheck", "repeller_of", "MorseDecomposition",
           "build_decomposition", "IdentityCheck", "morse_union_identity_check", "coarsen",
           "ConditionResult", "LyapunovCertificate", "verify_by_lyapunov", "write_decomposition_report",
           "exact_plateaus", "union_all"]
