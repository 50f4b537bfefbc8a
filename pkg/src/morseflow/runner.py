"""Execute scenario analyses and write their CSV outputs."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .cocycle import make_system
from .config import ScenarioConfig, analysis_dependencies, order_analyses, schedule_kwargs
from .errors import ConfigurationError, FiltrationError, HorizonError, MisuseError, MorseflowError
from .lyapunov import (MorseField, PairContext, SearchWindow, entrance_times, lyap_values,
                       monotonicity_profile, write_field_csv, write_profile_csv)
from .morse import (Filtration, build_decomposition, coarsen, morse_union_identity_check, repeller_of,
                    verify_by_lyapunov, write_decomposition_report)
from .noise import TimeGrid, format_real, sample_wiener
from .pullback import (PullbackSchedule, alpha_limit, basin_estimate, invariant_hull, is_forward_invariant,
                       omega_limit, uniform_entrance_time, verify_attractor, verify_strong_neighborhood)
from .randset import CellSet, Partition, RandomSet

log = logging.getLogger("morseflow")

OUTPUT_ENV = "MORSEFLOW_OUTPUT_DIR"
PLOT_KINDS = ("lyapunov-field", "limit-history", "orbit-profile")

# reason codes carried by every analysis outcome
OK = "ok"
FINDING = "finding"
ERR_HORIZON = "error-horizon"
ERR_MISUSE = "error-misuse"
ERR_FILTRATION = "error-filtration"
ERR_CONFIG = "error-configuration"
ERR_INTERNAL = "error-internal"
SKIPPED = "skipped-dependency-failed"


@dataclass
class ResultHandle:
    """A finished analysis: its payload plus where its files went."""

    id: str
    op: str
    payload: Any
    out_dir: Path


@dataclass
class AnalysisOutcome:
    id: str
    op: str
    status: str  # "ok" | "finding" | "error" | "skipped"
    reason: str
    message: str = ""
    files: list = field(default_factory=list)
    seconds: float = 0.0


@dataclass
class RunReport:
    """Outcome of one scenario run; ``timing`` and per-analysis seconds stay in memory only."""

    scenario: str
    output_dir: Path
    outcomes: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    handles: dict = field(default_factory=dict)
    timing: float = 0.0

    @property
    def errored(self) -> bool:
        return any(o.status == "error" for o in self.outcomes)

    @property
    def exit_code(self) -> int:
        return 1 if self.errored else 0

    def handle(self, analysis_id: str) -> ResultHandle:
        try:
            return self.handles[analysis_id]
        except KeyError:
            raise MisuseError(f"no result handle {analysis_id!r}; known: {sorted(self.handles)}") from None

    def write(self) -> Path:
        path = self.output_dir / "report.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["analysis", "op", "status", "reason", "message", "files"])
            for o in self.outcomes:
                rel = [str(Path(f).relative_to(self.output_dir)) for f in o.files]
                w.writerow([o.id, o.op, o.status, o.reason, o.message, " ".join(rel)])
        with open(self.output_dir / "warnings.txt", "w", newline="") as fh:
            for line in self.warnings:
                fh.write(line + "\n")
        return path


class _Scenario:
    """Objects built once per run: system, partition, paths and named sets."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.sys = make_system(cfg.system)
        self.part = Partition(self.sys.box, int(cfg.partition["cells_per_axis"]))
        self.grid = TimeGrid(float(cfg.noise["t_min"]), float(cfg.noise["t_max"]), float(cfg.noise["dt"]))
        self.seeds = cfg.seed_list
        self.paths = [sample_wiener(self.grid, s) for s in self.seeds]
        self.sets = {name: RandomSet.fixed(self._build_set(spec), name) for name, spec in cfg.sets.items()}
        self.search = SearchWindow(**{k: cfg.search[k] for k in ("t_lo", "t_hi", "dt", "refine_iters")
                                      if k in cfg.search})

    def _build_set(self, spec: dict) -> CellSet:
        if spec.get("whole"):
            return CellSet.whole(self.part)
        if spec.get("empty"):
            return CellSet.empty(self.part)
        if "intervals" in spec:
            return CellSet.from_intervals(self.part, spec["intervals"])
        if "boxes" in spec:
            return CellSet.from_boxes(self.part, np.asarray(spec["boxes"], dtype=np.float64))
        return CellSet.from_points(self.part, np.asarray(spec["points"], dtype=np.float64))

    def schedule(self, name: str) -> PullbackSchedule:
        return PullbackSchedule(**schedule_kwargs(self.cfg.schedules[name]))


def _seed_label(seed) -> str:
    return "none" if seed is None else str(seed)


def _write_rows(path: Path, header: list, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)
    return path


class Runner:
    def __init__(self, cfg: ScenarioConfig, output_dir: Optional[Path] = None):
        self.cfg = cfg
        self.sc = _Scenario(cfg)
        env = os.environ.get(OUTPUT_ENV)
        base = output_dir or (Path(env) if env else None) or Path(cfg.output_dir or f"morseflow-out/{cfg.name}")
        self.out = Path(base)
        self.results: dict = {}

    # ------------------------------------------------------------ helpers
    def _dir(self, aid: str) -> Path:
        d = self.out / aid
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _set(self, name: str) -> RandomSet:
        return self.sc.sets[name]

    def _pair_context(self, args: dict) -> PairContext:
        rep = args["repeller"]
        R = self.results[rep].payload.rule if rep in self.results else self._set(rep)
        return PairContext(self._set(args["attractor"]), R, self._set(args["neighborhood"]), self.sc.search)

    def _lyapunov_source(self, args: dict):
        """``("morse", MorseContext)`` from a decomposition, else ``("pair", PairContext)``."""
        if "decomposition" in args:
            return "morse", self.results[args["decomposition"]].payload.morse_context(self.sc.search)
        return "pair", self._pair_context(args)

    # ------------------------------------------------------------ operations
    def _limit(self, a, backward: bool):
        args, d = a.get("args", {}), self._dir(a["id"])
        sched = self.sc.schedule(args["schedule"])
        fn = alpha_limit if backward else omega_limit
        results, files, rows = {}, [], []
        for p in self.sc.paths:
            res = fn(self._set(args["set"]), self.sc.sys, p, sched)
            results[p.seed] = res
            f = d / f"limit_seed{_seed_label(p.seed)}.csv"
            res.limit.to_csv(f)
            files.append(f)
            lo_hi = res.limit.intervals() if self.sc.part.dim == 1 else []
            rows.append([p.seed, int(res.converged), int(res.under_resolved), len(res.limit),
                         " ".join(f"[{format_real(x)};{format_real(y)}]" for x, y in lo_hi)])
        files.append(_write_rows(d / "summary.csv", ["seed", "converged", "under_resolved", "cells", "intervals"], rows))
        status = OK if all(r.converged for r in results.values()) else FINDING
        return results, files, status, "" if status == OK else "some limits did not converge"

    def op_omega_limit(self, a):
        return self._limit(a, backward=False)

    def op_alpha_limit(self, a):
        return self._limit(a, backward=True)

    def op_invariant_hull(self, a):
        args, d = a["args"], self._dir(a["id"])
        files, out = [], {}
        for p in self.sc.paths:
            S = invariant_hull(self._set(args["set"]), self.sc.sys, p, float(args["T_max"]), float(args.get("dt", 0.01)))
            out[p.seed] = S
            f = d / f"hull_seed{_seed_label(p.seed)}.csv"
            S.to_csv(f)
            files.append(f)
        return out, files, OK, ""

    def op_is_forward_invariant(self, a):
        args, d = a["args"], self._dir(a["id"])
        rows, out = [], {}
        for p in self.sc.paths:
            chk = is_forward_invariant(self._set(args["set"]), self.sc.sys, p, args["t_checks"])
            out[p.seed] = chk
            rows.append([p.seed, int(chk.invariant), format_real(chk.max_violation)])
        f = _write_rows(d / "invariance.csv", ["seed", "invariant", "max_violation"], rows)
        ok = all(c.invariant for c in out.values())
        return out, [f], OK if ok else FINDING, "" if ok else "set is not forward invariant on every seed"

    def _report(self, a, rep):
        f = self._dir(a["id"]) / "report.csv"
        rep.to_csv(f)
        if not rep.precondition_ok:
            return rep, [f], FINDING, "precondition failed"
        return rep, [f], OK if rep.passed else FINDING, "" if rep.passed else f"pass fraction {rep.pass_fraction:.3f}"

    def op_verify_attractor(self, a):
        args = a["args"]
        rep = verify_attractor(self._set(args["attractor"]), self._set(args["neighborhood"]), self.sc.sys,
                               self.sc.paths, self.sc.schedule(args["schedule"]),
                               float(args.get("pass_fraction", 0.95)), float(args.get("tol_cells", 2.0)))
        return self._report(a, rep)

    def op_verify_strong_neighborhood(self, a):
        args = a["args"]
        rep = verify_strong_neighborhood(self._set(args["neighborhood"]), self._set(args["attractor"]), self.sc.sys,
                                         self.sc.paths, args["t_checks"],
                                         pass_fraction=float(args.get("pass_fraction", 0.95)))
        return self._report(a, rep)

    def op_basin_estimate(self, a):
        args, d = a["args"], self._dir(a["id"])
        out, files = {}, []
        for p in self.sc.paths:
            S = basin_estimate(self._set(args["attractor"]), self._set(args["neighborhood"]), self.sc.sys, p,
                               float(args["T_max"]), float(args.get("dt", 0.01)))
            out[p.seed] = S
            f = d / f"basin_seed{_seed_label(p.seed)}.csv"
            S.to_csv(f)
            files.append(f)
        return out, files, OK, ""

    def op_uniform_entrance_time(self, a):
        args, d = a["args"], self._dir(a["id"])
        K = self._set(args["set"]).constant
        rows, out = [], {}
        for p in self.sc.paths:
            T = uniform_entrance_time(K, self._set(args["neighborhood"]), self.sc.sys, p, float(args["T_max"]),
                                      float(args.get("dt", 0.01)))
            out[p.seed] = T
            rows.append([p.seed, format_real(T)])
        f = _write_rows(d / "entrance.csv", ["seed", "T"], rows)
        ok = all(math.isfinite(t) for t in out.values())
        return out, [f], OK if ok else FINDING, "" if ok else "no uniform entrance within T_max on some seeds"

    def op_repeller_of(self, a):
        args, d = a["args"], self._dir(a["id"])
        res = repeller_of(self._set(args["attractor"]), self._set(args["neighborhood"]), self.sc.sys, self.sc.paths,
                          self.sc.schedule(args["schedule"]), args.get("basin_T"), float(args.get("tol_cells", 2.0)))
        files = []
        for p in self.sc.paths:
            f = d / f"repeller_seed{_seed_label(p.seed)}.csv"
            res.rule(p).to_csv(f)
            files.append(f)
        files.append(_write_rows(d / "duality.csv", ["seed", "discrepancy", "pass"],
                                 [[s, format_real(x), int(x <= res.check.tol + 1e-12)]
                                  for s, x in zip(res.check.seeds, res.check.discrepancy)]))
        ok = res.check.pass_fraction >= float(args.get("pass_fraction", 0.95))
        return res, files, OK if ok else FINDING, "" if ok else "duality cross-check failed (under-resolution suspected)"

    def _write_decomposition(self, a, dec, extra=None):
        d = self._dir(a["id"])
        csv_path, summary = d / "morse_sets.csv", d / "summary.txt"
        write_decomposition_report(dec, self.sc.paths, csv_path, summary)
        problems = sum(len(v) for v in dec.findings.values())
        return dec, [csv_path, summary], OK if problems == 0 else FINDING, "" if problems == 0 else f"{problems} finding(s)"

    def op_build_decomposition(self, a):
        args = a["args"]
        f = Filtration(self.sc.part, [self._set(n) for n in args["attractors"]],
                       [self._set(n) for n in args["neighborhoods"]], list(args["attractors"]))
        dec = build_decomposition(f, self.sc.sys, self.sc.paths, self.sc.schedule(args["schedule"]),
                                  args.get("basin_T"), tol_cells=float(args.get("tol_cells", 2.0)))
        return self._write_decomposition(a, dec)

    def op_coarsen(self, a):
        args = a["args"]
        base = self.results[args["decomposition"]].payload
        sched = self.sc.schedule(args["schedule"]) if "schedule" in args else PullbackSchedule((0.0,))
        dec = coarsen(base, args["keep"], self.sc.sys, self.sc.paths, sched)
        return self._write_decomposition(a, dec)

    def op_morse_union_identity_check(self, a):
        args, d = a["args"], self._dir(a["id"])
        dec = self.results[args["decomposition"]].payload
        chk = morse_union_identity_check(dec, self.sc.paths, float(args.get("tol_cells", 2.0)))
        f = _write_rows(d / "identity.csv", ["seed", "discrepancy", "pass"],
                        [[s, format_real(x), int(x <= chk.tol + 1e-12)] for s, x in zip(chk.seeds, chk.discrepancy)])
        ok = chk.pass_fraction >= float(args.get("pass_fraction", 0.95))
        return chk, [f], OK if ok else FINDING, "" if ok else "identity discrepancy above tolerance"

    def op_verify_by_lyapunov(self, a):
        args, d = a["args"], self._dir(a["id"])
        dec = self.results[args["decomposition"]].payload
        idx = args.get("candidates")
        cands = dec.morse_sets if idx is None else [dec.morse_sets[i - 1] if isinstance(i, int) else self._set(i)
                                                    for i in idx]
        field_ = MorseField(dec.morse_context(self.sc.search), self.sc.sys)
        cert = verify_by_lyapunov(cands, field_, self.sc.sys, self.sc.paths,
                                  int(args.get("samples_per_cell", 2)), tuple(args.get("t_steps", (0.5, 1.0))))
        rows = [[k, "pass" if c.passed else "fail", c.detail, len(c.witnesses)] for k, c in cert.conditions.items()]
        f1 = _write_rows(d / "conditions.csv", ["condition", "result", "detail", "witnesses"], rows)
        wrows = []
        for seed, x, cell, t, L0, Lt in cert.conditions["iv"].witnesses:
            wrows.append([seed, format_real(x) if not isinstance(x, list) else " ".join(map(format_real, x)), cell,
                          format_real(t), format_real(L0), format_real(Lt)])
        f2 = _write_rows(d / "decrease_witnesses.csv", ["seed", "x", "cell", "t", "L_before", "L_after"], wrows)
        f3 = _write_rows(d / "plateaus.csv", ["i", "mean_L"],
                         [[i + 1, format_real(m)] for i, m in enumerate(cert.plateau_means)])
        return cert, [f1, f2, f3], OK if cert.consistent else FINDING, cert.verdict

    def op_lyapunov_field(self, a):
        args, d = a["args"], self._dir(a["id"])
        kind, ctx = self._lyapunov_source(args)
        g = args["x_grid"]
        xs = np.linspace(float(g["lo"]), float(g["hi"]), int(g["n"]))
        rows = []
        for p in self.sc.paths:
            if kind == "pair":
                batch = entrance_times(ctx, self.sc.sys, p, xs)
                L = lyap_values(batch.values)
                rows.extend((p.seed, x, batch.item(k), L[k]) for k, x in enumerate(xs))
            else:
                L, _ = MorseField(ctx, self.sc.sys).evaluate(p, xs)
                rows.extend((p.seed, x, None, L[k]) for k, x in enumerate(xs))
        f = d / "field.csv"
        write_field_csv(f, rows)
        return {"kind": kind, "rows": rows}, [f], OK, ""

    def op_orbit_profile(self, a):
        args, d = a["args"], self._dir(a["id"])
        kind, ctx = self._lyapunov_source(args)
        g = args["t_grid"]
        ts = g if isinstance(g, list) else list(np.round(np.arange(float(g["start"]), float(g["stop"]) + 1e-9,
                                                                    float(g["step"])), 12))
        out, files = {}, []
        for p in self.sc.paths:
            prof = monotonicity_profile(kind, ctx, self.sc.sys, p, float(args["x"]), ts)
            out[p.seed] = prof
            f = d / f"profile_seed{_seed_label(p.seed)}.csv"
            write_profile_csv(f, prof)
            files.append(f)
        return out, files, OK, ""

    # ------------------------------------------------------------ driver
    def run(self) -> RunReport:
        t0 = time.perf_counter()
        self.out.mkdir(parents=True, exist_ok=True)
        report = RunReport(self.cfg.name, self.out)
        by_id = {a["id"]: a for a in self.cfg.analyses}
        failed = set()
        deps = analysis_dependencies(self.cfg.analyses)
        for aid in order_analyses(self.cfg.analyses):
            a = by_id[aid]
            if deps[aid] & failed:
                failed.add(aid)
                report.outcomes.append(AnalysisOutcome(aid, a["op"], "skipped", SKIPPED,
                                                       "depends on " + ", ".join(sorted(deps[aid] & failed))))
                continue
            start = time.perf_counter()
            try:
                payload, files, reason, msg = getattr(self, "op_" + a["op"])(a)
                status = "ok" if reason == OK else "finding"
            except HorizonError as exc:
                payload, files, status, reason, msg = None, [], "error", ERR_HORIZON, str(exc)
            except FiltrationError as exc:
                payload, files, status, reason, msg = None, [], "error", ERR_FILTRATION, str(exc)
            except MisuseError as exc:
                payload, files, status, reason, msg = None, [], "error", ERR_MISUSE, str(exc)
            except ConfigurationError as exc:
                payload, files, status, reason, msg = None, [], "error", ERR_CONFIG, str(exc)
            except (MorseflowError, ArithmeticError, ValueError) as exc:
                payload, files, status, reason, msg = None, [], "error", ERR_INTERNAL, f"{type(exc).__name__}: {exc}"
            secs = time.perf_counter() - start
            if status == "error":
                failed.add(aid)
                log.error("%s (%s) failed: %s", aid, a["op"], msg)
            else:
                h = ResultHandle(aid, a["op"], payload, self.out / aid)
                self.results[aid] = h
                report.handles[aid] = h
                for kind in a.get("plots", []):
                    files.append(emit_plot_data(h, kind))
            report.outcomes.append(AnalysisOutcome(aid, a["op"], status, reason, msg, files, secs))
        if self.sc.sys.max_clamp > 1e-6:
            report.warnings.append(f"integrator results were clamped to the box by up to {self.sc.sys.max_clamp:.3g}")
        for h in report.handles.values():
            if h.op in ("omega_limit", "alpha_limit"):
                for seed, res in h.payload.items():
                    if res.under_resolved:
                        report.warnings.append(f"{h.id}: seed {seed} limit is empty (under-resolution suspected)")
        report.write()
        report.timing = time.perf_counter() - t0
        return report


def run(cfg: ScenarioConfig, output_dir=None) -> RunReport:
    """Run every analysis of ``cfg`` in dependency order and write the output tree."""
    return Runner(cfg, Path(output_dir) if output_dir else None).run()


def emit_plot_data(handle: ResultHandle, kind: str, path=None) -> Path:
    """Write plot-ready CSV for a finished analysis.

    ``lyapunov-field`` gives ``seed, x, L``; ``limit-history`` gives
    ``seed, T, hausdorff_step``; ``orbit-profile`` gives ``seed, t, L``.
    """
    if not isinstance(handle, ResultHandle):
        raise MisuseError(f"unknown result handle {handle!r}")
    if kind not in PLOT_KINDS:
        raise ConfigurationError(f"plot kind must be one of {PLOT_KINDS}, got {kind!r}")
    path = Path(path) if path else handle.out_dir / f"plot_{kind}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    if kind == "lyapunov-field":
        if handle.op != "lyapunov_field":
            raise MisuseError(f"{handle.id} ({handle.op}) has no Lyapunov field")
        rows = [[r[0], format_real(r[1]), format_real(r[3])] for r in handle.payload["rows"]]
        return _write_rows(path, ["seed", "x", "L"], rows)
    if kind == "limit-history":
        if handle.op not in ("omega_limit", "alpha_limit"):
            raise MisuseError(f"{handle.id} ({handle.op}) has no limit history")
        rows = [[seed, format_real(T), format_real(step)]
                for seed, res in handle.payload.items() for T, step in res.history_rows()]
        return _write_rows(path, ["seed", "T", "hausdorff_step"], rows)
    if handle.op != "orbit_profile":
        raise MisuseError(f"{handle.id} ({handle.op}) has no orbit profile")
    rows = [[seed, format_real(t), format_real(L)] for seed, prof in handle.payload.items() for t, L in prof]
    return _write_rows(path, ["seed", "t", "L"], rows)
