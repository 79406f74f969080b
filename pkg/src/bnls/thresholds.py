"""Critical masses and scales located by continuation sweeps and bisection."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import NoBracket
from .functionals import ModelParams, Problem
from .grid import Field, Grid, make_grid
from .minimizer import (
    GroundState,
    SolveOptions,
    lowest_energy_seen,
    select_best,
    solve_ground_state,
    solve_hat_ground_state,
)
from .scalings import (
    exponent_s, exponent_t, gamma, kappa, lambda_of_mass, mass_of_lambda, mass_of_tau, tau_of_mass,
)

DELTA_GAP = 1e-6
CSV_COLUMNS = ("c", "m_c", "hat_reference", "grad_y_sq", "branch", "el_residual", "lambda_or_tau")
THRESHOLD_NAMES = ("c0", "c_plus", "c_minus", "lambda_star", "tau_star", "c_gt0", "c_neq0")


@dataclass(frozen=True)
class SweepRecord:
    c: float
    m_c: float
    hat_reference: float
    grad_y_sq: float
    branch: str
    el_residual: float
    lambda_or_tau: float | None
    converged: bool = True
    theta: float = float("nan")
    box_reference: float | None = None

    @property
    def gap(self) -> float:
        return self.hat_reference - self.m_c

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ThresholdReport:
    name: str
    bracket: tuple[float, float]
    evidence: tuple[SweepRecord | None, SweepRecord | None]
    params: ModelParams
    predicate: str
    tol: float
    delta_gap: float = DELTA_GAP
    mapped_bracket: tuple[float, float] | None = None
    mapped_name: str | None = None
    records: tuple[SweepRecord, ...] = field(default=(), repr=False)
    notes: tuple[str, ...] = ()

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bracket": list(self.bracket),
            "width": self.width,
            "evidence": [r.to_dict() if r else None for r in self.evidence],
            "params": self.params.to_dict(),
            "predicate": self.predicate,
            "tol": self.tol,
            "delta_gap": self.delta_gap,
            "mapped_bracket": list(self.mapped_bracket) if self.mapped_bracket else None,
            "mapped_name": self.mapped_name,
            "records": [r.to_dict() for r in self.records],
            "notes": list(self.notes),
        }

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path


def threshold_grid(p: ModelParams) -> Grid:
    """Moderate grid for threshold work (sweeps need many solves)."""
    if p.d + p.n <= 2:
        return make_grid(p.d, p.n, 8 * np.pi, 128, 32)
    return make_grid(p.d, p.n, 8 * np.pi, 64, 16)


def sweep_options(**kw) -> SolveOptions:
    base = dict(max_iters=20000, raise_on_fail=False, multistart=3)
    base.update(kw)
    return SolveOptions(**base)


def box_reference(p: ModelParams, c: float, grid: Grid) -> float:
    """Lowest energy over box-spread plane waves ``sqrt(c/V) e^{i w.x}``.

    On a periodized box these admissible states stand in for the vanishing
    (spreading) competitors of the unbounded domain.
    """
    vol = (2 * grid.L) ** grid.d * (2 * np.pi) ** grid.n
    quad = min(0.0, float(np.min(grid.xi**4 + p.beta * grid.xi**2))) if p.beta < 0 else 0.0
    return 0.5 * quad * c - (c / vol) ** ((p.alpha + 2) / 2) * vol / (p.alpha + 2)


def _coordinate(p: ModelParams, c: float) -> float | None:
    try:
        if p.beta == 0:
            return lambda_of_mass(c, p)
        if p.beta > 0:
            return tau_of_mass(c, p)
    except ValueError:
        pass
    return None


class _Solver:
    """Caches solves and Euclidean references on a fixed grid."""

    def __init__(self, p: ModelParams, grid: Grid, opts: SolveOptions):
        self.p, self.grid, self.opts = p, grid, opts
        self._hat: dict[tuple, float] = {}
        self._cache: dict[tuple, GroundState] = {}

    def hat_reference(self, c: float, problem: Problem = Problem("m_c")) -> float:
        hp = problem.hat_counterpart()
        key = (hp.kind, hp.scale, c)
        if key not in self._hat:
            vol = (2 * np.pi) ** self.p.n
            hs = solve_hat_ground_state(
                self.p, c / vol, hp.kind[4:], hp.scale,
                replace(self.opts, init="auto", multistart=1, raise_on_fail=True), self.grid.euclidean(),
            )
            self._hat[key] = vol * hs.energy.total
        return self._hat[key]

    def solve(self, c: float, problem: Problem = Problem("m_c"), warm: Field | None = None) -> GroundState:
        key = (problem.tag, c)
        states = []
        if key in self._cache:
            states.append(self._cache[key])
        else:
            states.append(solve_ground_state(self.p, c, problem, self.opts, self.grid))
        if warm is not None:
            w = warm * math.sqrt(c / float(np.sum(np.abs(warm.values) ** 2) * warm.grid.cell_volume))
            states.append(
                solve_ground_state(self.p, c, problem, replace(self.opts, init=w, multistart=1), self.grid)
            )
        gs = select_best(states) if len(states) > 1 else states[0]
        self._cache[key] = gs
        return gs

    def record(self, c: float, gs: GroundState, problem: Problem = Problem("m_c")) -> SweepRecord:
        ref = self.hat_reference(c, problem)
        return SweepRecord(
            c=c,
            m_c=min(lowest_energy_seen(gs), gs.energy.total),
            hat_reference=ref,
            grad_y_sq=gs.grad_y_sq,
            branch="flat" if gs.y_flat else "broken",
            el_residual=gs.el_residual,
            lambda_or_tau=_coordinate(self.p, c) if problem.kind == "m_c" else problem.scale,
            converged=gs.converged,
            theta=gs.theta,
            box_reference=box_reference(self.p, c, self.grid),
        )


def sweep_mass(
    p: ModelParams,
    c_grid: Sequence[float],
    opts: SolveOptions | None = None,
    grid: Grid | None = None,
    jobs: int = 1,
    bidirectional: bool = True,
    solver: _Solver | None = None,
) -> list[SweepRecord]:
    """One record per mass.  Serial runs warm-start each point from its neighbour."""
    cs = [float(c) for c in c_grid]
    if any(b <= a for a, b in zip(cs, cs[1:])):
        raise ValueError("c_grid must be strictly increasing")
    if any(c <= 0 for c in cs):
        raise ValueError("masses must be positive")
    grid = grid or threshold_grid(p)
    sv = solver or _Solver(p, grid, opts or sweep_options())
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            states = list(ex.map(sv.solve, cs))
    else:
        states = []
        prev = None
        for c in cs:
            gs = sv.solve(c, warm=prev)
            states.append(gs)
            prev = gs.u
        if bidirectional:
            for i in range(len(cs) - 2, -1, -1):
                states[i] = sv.solve(cs[i], warm=states[i + 1].u)
    return [sv.record(c, gs) for c, gs in zip(cs, states)]


@dataclass(frozen=True)
class SweepDiagnostics:
    nonincreasing: bool
    scaled_strictly_decreasing: bool
    below_reference: bool
    worst_increase: float
    worst_scaled_increase: float


def check_sweep(records: Sequence[SweepRecord], tol: float = 1e-6) -> SweepDiagnostics:
    """Monotonicity of ``m_c`` and of ``m_c / c`` (where negative) along a sweep."""
    inc = [b.m_c - a.m_c for a, b in zip(records, records[1:])]
    sc = [
        b.m_c / b.c - a.m_c / a.c
        for a, b in zip(records, records[1:])
        if a.m_c < 0 and b.m_c < 0
    ]
    return SweepDiagnostics(
        nonincreasing=all(d <= tol for d in inc),
        scaled_strictly_decreasing=all(d < tol for d in sc),
        below_reference=all(r.m_c <= r.hat_reference + 1e-8 for r in records),
        worst_increase=max(inc, default=-math.inf),
        worst_scaled_increase=max(sc, default=-math.inf),
    )


def subadditivity_defects(records: Sequence[SweepRecord], max_pairs: int = 10) -> list[tuple[float, float, float]]:
    """``m_{c1+c2} - m_{c1} - m_{c2}`` for pairs whose sum lies on the sweep."""
    by_c = {round(r.c, 12): r for r in records}
    out = []
    for i, a in enumerate(records):
        for b in records[i:]:
            s = by_c.get(round(a.c + b.c, 12))
            if s is not None:
                out.append((a.c, b.c, s.m_c - a.m_c - b.m_c))
                if len(out) >= max_pairs:
                    return out
    return out


def write_sweep_csv(records: Sequence[SweepRecord], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([repr(r.c), repr(r.m_c), repr(r.hat_reference), repr(r.grad_y_sq), r.branch,
                        repr(r.el_residual), "" if r.lambda_or_tau is None else repr(r.lambda_or_tau)])
    return path


def read_sweep_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _bisect(
    lo: float, hi: float, tol: float, holds: Callable[[float], tuple[bool, SweepRecord]],
    rec_lo: SweepRecord | None, rec_hi: SweepRecord | None, log: list,
) -> tuple[float, float, SweepRecord | None, SweepRecord | None]:
    """Shrink ``[lo, hi]`` keeping ``holds(lo) = False`` and ``holds(hi) = True``."""
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok, rec = holds(mid)
        log.append(rec)
        if ok:
            hi, rec_hi = mid, rec
        else:
            lo, rec_lo = mid, rec
    return lo, hi, rec_lo, rec_hi


def _first_change(cs, flags):
    for i in range(1, len(cs)):
        if not flags[i - 1] and flags[i]:
            return i
    return None


def _locate(
    name: str, p: ModelParams, c_probe: Sequence[float], tol: float, predicate: str,
    test: Callable[[SweepRecord], bool], sv: _Solver, allow_zero: bool = False,
) -> ThresholdReport:
    cs = sorted(float(c) for c in c_probe)
    records = sweep_mass(p, cs, solver=sv)
    flags = [test(r) for r in records]
    by_c = {r.c: r for r in records}

    def holds(c):
        rec = sv.record(c, sv.solve(c, warm=_nearest_state(sv, c)))
        return test(rec), rec

    log: list = []
    notes = []
    if flags[0]:
        if not allow_zero:
            raise NoBracket(f"{name}: predicate already holds at the smallest mass {cs[0]:g}",
                            (cs[0], cs[-1]), records)
        notes.append("predicate holds at the smallest probed mass; threshold is at or below it")
        rep = ThresholdReport(name, (0.0, cs[0]), (None, records[0]), p, predicate, tol,
                              records=tuple(records), notes=tuple(notes))
        return rep
    i = _first_change(cs, flags)
    if i is None:
        raise NoBracket(f"{name}: no sign change of the predicate on [{cs[0]:g}, {cs[-1]:g}]",
                        (cs[0], cs[-1]), records)
    if any(not f for f in flags[i:]):
        notes.append("predicate changes more than once across the probe sweep")
    lo, hi, rlo, rhi = _bisect(cs[i - 1], cs[i], tol, holds, by_c[cs[i - 1]], by_c[cs[i]], log)
    return ThresholdReport(name, (lo, hi), (rlo, rhi), p, predicate, tol,
                           records=tuple(sorted(records + log, key=lambda r: r.c)), notes=tuple(notes))


def _nearest_state(sv: _Solver, c: float) -> Field | None:
    keys = [k for k in sv._cache if k[0] == "m_c"]
    if not keys:
        return None
    k = min(keys, key=lambda k: abs(k[1] - c))
    return sv._cache[k].u


def _gap_test(delta: float):
    return lambda r: r.m_c < r.hat_reference - delta


def find_c0(
    p: ModelParams,
    tol: float = 1e-2,
    c_probe: Sequence[float] | None = None,
    opts: SolveOptions | None = None,
    grid: Grid | None = None,
    delta_gap: float = DELTA_GAP,
) -> ThresholdReport:
    """Mass where the minimizer stops being y-flat (``beta = 0``).

    The bracket is also reported as the matching lambda interval
    ``[kappa_{hi}^4, kappa_{lo}^4]``.
    """
    if p.beta != 0:
        raise ValueError("find_c0 needs beta = 0")
    sv = _Solver(p, grid or threshold_grid(p), opts or sweep_options())
    c_probe = c_probe or list(np.geomspace(1.0, 64.0, 13))
    rep = _locate("c0", p, c_probe, tol, f"m_c < flat reference - {delta_gap:g}", _gap_test(delta_gap), sv)
    lo, hi = rep.bracket
    return replace(rep, mapped_name="lambda_star",
                   mapped_bracket=(lambda_of_mass(hi, p), lambda_of_mass(lo, p)) if lo > 0 else None)


def find_cplus(
    p: ModelParams,
    tol: float = 1e-2,
    c_probe: Sequence[float] | None = None,
    opts: SolveOptions | None = None,
    grid: Grid | None = None,
    delta_gap: float = DELTA_GAP,
) -> ThresholdReport:
    """Onset of negative energy (``beta > 0``, ``4/d <= alpha < 8/(d+n)``).

    On the periodized box the spread-out plane wave has slightly negative
    energy, so the predicate compares against that state instead of 0.
    """
    if p.beta <= 0:
        raise ValueError("find_cplus needs beta > 0")
    if not (4.0 / p.d <= p.alpha < 8.0 / (p.d + p.n)):
        raise ValueError("find_cplus needs 4/d <= alpha < 8/(d+n)")
    sv = _Solver(p, grid or threshold_grid(p), opts or sweep_options())
    c_probe = c_probe or list(np.geomspace(1.0, 256.0, 9))
    return _locate("c_plus", p, c_probe, tol, f"m_c < box plane-wave energy - {delta_gap:g}",
                   lambda r: r.m_c < r.box_reference - delta_gap, sv)


def find_cminus(
    p: ModelParams,
    tol: float = 1e-2,
    c_probe: Sequence[float] | None = None,
    opts: SolveOptions | None = None,
    grid: Grid | None = None,
    delta_gap: float = DELTA_GAP,
) -> ThresholdReport:
    """Onset of ``m_c < -beta^2 c / 8`` (``beta < 0``); box-adjusted like :func:`find_cplus`."""
    if p.beta >= 0:
        raise ValueError("find_cminus needs beta < 0")
    sv = _Solver(p, grid or threshold_grid(p), opts or sweep_options())
    c_probe = c_probe or list(np.geomspace(0.25, 64.0, 9))
    return _locate("c_minus", p, c_probe, tol,
                   f"m_c < min(-beta^2 c/8, box plane-wave energy) - {delta_gap:g}",
                   lambda r: r.m_c < min(-p.beta**2 * r.c / 8, r.box_reference) - delta_gap,
                   sv, allow_zero=True)


def _scale_report(name: str, kind: str, p: ModelParams, s_probe, tol, opts, grid, delta_gap):
    sv = _Solver(p, grid or threshold_grid(p), opts or sweep_options())
    log: list = []
    to_mass, expo = (mass_of_lambda, exponent_t(p)) if kind == "m_1_lambda" else (mass_of_tau, exponent_s(p))

    def holds(s):
        prob = Problem(kind, s)
        rec = sv.record(1.0, sv.solve(1.0, prob), prob)
        log.append(rec)
        # energies at unit mass are c^{-e} times the mass-c ones; carry delta_gap along
        return rec.m_c < rec.hat_reference - delta_gap * to_mass(s, p) ** (-expo), rec

    ss = sorted(float(s) for s in s_probe)
    # broken for small scales: the predicate is tested on -log(s) ordering
    res = [holds(s) for s in ss]
    flags = [ok for ok, _ in res]
    idx = next((i for i in range(1, len(ss)) if flags[i - 1] and not flags[i]), None)
    if idx is None:
        raise NoBracket(f"{name}: no change of branch on [{ss[0]:g}, {ss[-1]:g}]", (ss[0], ss[-1]), log)
    lo, hi = ss[idx - 1], ss[idx]
    rlo, rhi = res[idx - 1][1], res[idx][1]
    while hi / lo > 1 + tol:
        mid = math.sqrt(lo * hi)
        ok, rec = holds(mid)
        if ok:
            lo, rlo = mid, rec
        else:
            hi, rhi = mid, rec
    return ThresholdReport(name, (lo, hi), (rlo, rhi), p,
                           f"scaled minimum < flat reference - {delta_gap:g} c^(-e) (holds below the bracket)",
                           tol, records=tuple(sorted(log, key=lambda r: r.lambda_or_tau)),
                           notes=("tolerance is relative for scale brackets",))


def find_lambda_star(p: ModelParams, tol: float = 1e-2, s_probe=None, opts=None, grid=None,
                     delta_gap: float = DELTA_GAP) -> ThresholdReport:
    if p.beta != 0:
        raise ValueError("find_lambda_star needs beta = 0")
    s_probe = s_probe or list(np.geomspace(1e-3, 10.0, 9))
    rep = _scale_report("lambda_star", "m_1_lambda", p, s_probe, tol, opts, grid, delta_gap)
    lo, hi = rep.bracket
    return replace(rep, mapped_name="c0", mapped_bracket=(mass_of_lambda(hi, p), mass_of_lambda(lo, p)))


def find_tau_star(p: ModelParams, tol: float = 1e-2, s_probe=None, opts=None, grid=None,
                  delta_gap: float = DELTA_GAP) -> ThresholdReport:
    if p.beta <= 0:
        raise ValueError("find_tau_star needs beta > 0")
    s_probe = s_probe or list(np.geomspace(1e-2, 10.0, 9))
    rep = _scale_report("tau_star", "mu_1_tau", p, s_probe, tol, opts, grid, delta_gap)
    lo, hi = rep.bracket
    return replace(rep, mapped_name="c_gt0", mapped_bracket=(mass_of_tau(hi, p), mass_of_tau(lo, p)))


@dataclass(frozen=True)
class PairedThresholds:
    c_gt0: ThresholdReport | None
    c_neq0: ThresholdReport | None
    overlap: bool | None
    errors: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "c_gt0": self.c_gt0.to_dict() if self.c_gt0 else None,
            "c_neq0": self.c_neq0.to_dict() if self.c_neq0 else None,
            "overlap": self.overlap,
            "errors": list(self.errors),
        }


def probe_cgt0_vs_cneq0(
    p: ModelParams,
    tol: float = 1e-2,
    c_probe: Sequence[float] | None = None,
    opts: SolveOptions | None = None,
    grid: Grid | None = None,
    delta_gap: float = DELTA_GAP,
    eta_flat: float | None = None,
) -> PairedThresholds:
    """Energy-gap bracket and y-dependence bracket for ``beta > 0``; evidence only."""
    if p.beta <= 0:
        raise ValueError("probe_cgt0_vs_cneq0 needs beta > 0")
    if not p.alpha < 4.0 / (p.d + p.n):
        raise ValueError("probe_cgt0_vs_cneq0 needs alpha < 4/(d+n)")
    sv = _Solver(p, grid or threshold_grid(p), opts or sweep_options())
    c_probe = c_probe or list(np.geomspace(1.0, 256.0, 9))
    errs, out = [], {}
    for name, test, desc in (
        ("c_gt0", _gap_test(delta_gap), f"m_c < flat reference - {delta_gap:g}"),
        ("c_neq0", lambda r: r.branch == "broken", "minimizer has grad_y u != 0"),
    ):
        try:
            out[name] = _locate(name, p, c_probe, tol, desc, test, sv)
        except NoBracket as exc:
            errs.append(str(exc))
            out[name] = None
    a, b = out["c_gt0"], out["c_neq0"]
    overlap = None
    if a and b:
        overlap = max(a.bracket[0], b.bracket[0]) <= min(a.bracket[1], b.bracket[1])
    return PairedThresholds(a, b, overlap, tuple(errs))


__all__ = [
    "SweepRecord", "ThresholdReport", "PairedThresholds", "SweepDiagnostics", "sweep_mass",
    "check_sweep", "subadditivity_defects", "write_sweep_csv", "read_sweep_csv", "find_c0",
    "find_cplus", "find_cminus", "find_lambda_star", "find_tau_star", "probe_cgt0_vs_cneq0",
    "box_reference", "threshold_grid", "sweep_options", "kappa", "gamma",
]
