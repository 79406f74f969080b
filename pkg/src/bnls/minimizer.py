"""Constrained ground states by preconditioned, mass-normalized gradient descent.

Each step moves along the (optionally conjugated) direction
``-(sigma + L)^{-1} g`` where ``g = L u + theta u - |u|^alpha u`` is the
constrained gradient, ``L`` the diagonal Fourier symbol of the energy's
quadratic part and ``theta`` the current multiplier estimate.  The trial
point is renormalized onto the mass sphere and accepted only if the energy
does not increase.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .errors import Diverged, Unconverged
from .functionals import (
    EnergyBreakdown,
    ModelParams,
    Problem,
    _breakdown,
    evaluate,
    pohozaev_residual,
    quadratic_form,
)
from .grid import Field, Grid, _diff_norms_hat, make_grid
from .snapshot import read_snapshot, write_snapshot

ETA_FLAT = 1e-8
ACCEPT_TOL = 1e-5
TIE_TOL = 1e-9
PLATEAU_WINDOW = 200
PLATEAU_ACCEPT = 1e-7


@dataclass(frozen=True)
class SolveOptions:
    """Solver controls.

    ``dt = None`` picks the step preconditioner from the running multiplier;
    an explicit ``dt`` fixes it to ``1/dt + shift`` (classic semi-implicit
    normalized gradient flow with a constrained-gradient right-hand side).
    ``init`` is ``"auto"``, ``"lifted_1d"``, ``"gaussian"``,
    ``"torus_modulated"``, ``"random"``, ``"localized"`` or a :class:`Field`.
    """

    dt: float | None = None
    tol_stat: float = 1e-9
    max_iters: int = 20000
    shift: float = 0.0
    init: Any = "auto"
    mode_k: int = 1
    multistart: int = 3
    seed: int = 0
    tol_el: float = 1e-9
    accelerate: bool = True
    include_cross: bool = True
    eta_flat: float = ETA_FLAT
    record_history: bool = False
    raise_on_fail: bool = True

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.tol_stat > 0:
            raise ValueError(f"tol_stat must be positive, got {self.tol_stat}")
        if not self.tol_el > 0:
            raise ValueError(f"tol_el must be positive, got {self.tol_el}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.multistart < 1:
            raise ValueError(f"multistart must be >= 1, got {self.multistart}")
        if self.shift < 0:
            raise ValueError(f"shift must be nonnegative, got {self.shift}")

    def validate_for(self, p: ModelParams):
        if self.dt is not None and p.beta < 0 and not self.shift > p.beta**2 / 4:
            raise ValueError(
                f"shift must exceed beta^2/4 = {p.beta**2 / 4:g} when beta < 0 (got {self.shift})"
            )

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        if isinstance(self.init, Field):
            out["init"] = "warm"
        return out


@dataclass(frozen=True, eq=False)
class GroundState:
    u: Field
    c: float
    energy: EnergyBreakdown
    theta: float
    el_residual: float
    poho_residual: float
    grad_y_sq: float
    y_flat: bool
    problem_tag: str
    params: ModelParams
    include_cross: bool = True
    converged: bool = True
    iterations: int = 0
    init_tag: str = ""
    candidates: tuple = ()
    history: tuple = field(default=(), repr=False)

    @property
    def problem(self) -> Problem:
        return Problem.parse(self.problem_tag)

    def certificate(self) -> dict:
        return {
            "c": self.c,
            "problem": self.problem_tag,
            "energy": self.energy.to_dict(),
            "theta": self.theta,
            "el_residual": self.el_residual,
            "poho_residual": self.poho_residual,
            "grad_y_sq": self.grad_y_sq,
            "y_flat": self.y_flat,
            "converged": self.converged,
            "iterations": self.iterations,
            "init": self.init_tag,
            "include_cross": self.include_cross,
            "params": self.params.to_dict(),
            "grid": self.u.grid.to_dict(),
            "candidates": [dict(c) for c in self.candidates],
        }

    def save(self, stem) -> tuple[Path, Path]:
        """Write ``<stem>.bnls`` and ``<stem>.json``."""
        stem = Path(stem)
        snap = write_snapshot(
            stem.with_suffix(".bnls"), self.u, self.params.alpha, self.params.beta, self.problem_tag
        )
        side = stem.with_suffix(".json")
        side.write_text(json.dumps(self.certificate(), indent=2, sort_keys=True))
        return snap, side

    @classmethod
    def load(cls, stem) -> "GroundState":
        """Reload a saved state and recompute its certificates from the samples."""
        stem = Path(stem)
        u, _ = read_snapshot(stem.with_suffix(".bnls"))
        meta = json.loads(stem.with_suffix(".json").read_text())
        p = ModelParams(**meta["params"])
        gs = certify(u, p, Problem.parse(meta["problem"]), meta["include_cross"], meta["c"])
        return replace(
            gs,
            iterations=meta["iterations"],
            init_tag=meta["init"],
            converged=meta["converged"],
            candidates=tuple(meta.get("candidates", ())),
        )


def _power(vals: np.ndarray, alpha: float, cv: float) -> float:
    return float(np.sum(np.abs(vals) ** (alpha + 2.0)) * cv)


def certify(
    u: Field, p: ModelParams, problem: Problem, include_cross: bool = True, c: float | None = None,
    eta_flat: float = ETA_FLAT,
) -> GroundState:
    """Evaluate every certificate of a candidate minimizer."""
    g = u.grid
    uh = u.hat()
    q = quadratic_form(problem, p, include_cross)
    dn = _diff_norms_hat(g, uh)
    pw = _power(u.values, p.alpha, g.cell_volume)
    m = float(np.sum(np.abs(u.values) ** 2) * g.cell_volume)
    sym = q.symbol(g)
    w = g.hat_inner_weight()
    theta = (pw - w * float(np.sum(sym * np.abs(uh) ** 2))) / m
    fh = g.fft(np.abs(u.values) ** p.alpha * u.values)
    rh = sym * uh + theta * uh - fh
    el = math.sqrt(w * float(np.sum(np.abs(rh) ** 2))) / math.sqrt(
        w * float(np.sum(g.h2_weight * np.abs(uh) ** 2))
    )
    return GroundState(
        u=u,
        c=m if c is None else c,
        energy=_breakdown(q, dn, pw, p.alpha),
        theta=theta,
        el_residual=el,
        poho_residual=pohozaev_residual(u, problem, p, include_cross, relative=True),
        grad_y_sq=dn.grad_y_sq,
        y_flat=bool(dn.grad_y_sq / m < eta_flat),
        problem_tag=problem.tag,
        params=p,
        include_cross=include_cross,
    )


@dataclass
class _RunResult:
    u: np.ndarray
    iterations: int
    residual: float
    history: list


def _descend(
    u0: np.ndarray, grid: Grid, c: float, p: ModelParams, sym: np.ndarray, opts: SolveOptions
) -> _RunResult:
    cv = grid.cell_volume
    w = grid.hat_inner_weight()
    alpha = p.alpha
    h2w = grid.h2_weight
    ifft, fft = grid.ifft, grid.fft
    guard = max(0.0, -float(sym.min())) + 1e-2

    def renorm(vals):
        return vals * math.sqrt(c / (float(np.sum(np.abs(vals) ** 2)) * cv))

    def energy_of(vals, vh):
        return 0.5 * w * float(np.sum(sym * np.abs(vh) ** 2)) - _power(vals, alpha, cv) / (alpha + 2.0)

    u = renorm(np.asarray(u0, dtype=np.complex128))
    uh = fft(u)
    e = energy_of(u, uh)
    history = [e] if opts.record_history else []
    ph = zh_old = None
    zg_old = 0.0
    res = math.inf
    stalls = 0
    it = 0
    best_res = mark_res = math.inf
    mark_it = 0
    while it < opts.max_iters:
        fh = fft(np.abs(u) ** alpha * u)
        quad = w * float(np.sum(sym * np.abs(uh) ** 2))
        theta = (_power(u, alpha, cv) - quad) / c
        gh = sym * uh + theta * uh - fh
        res = math.sqrt(w * float(np.sum(np.abs(gh) ** 2))) / math.sqrt(
            w * float(np.sum(h2w * np.abs(uh) ** 2))
        )
        if res < opts.tol_el:
            break
        best_res = min(best_res, res)
        if it - mark_it >= PLATEAU_WINDOW:
            # Round-off floor: the residual stopped improving well below the
            # acceptance level.
            if best_res > 0.5 * mark_res and best_res < PLATEAU_ACCEPT:
                break
            mark_it, mark_res = it, best_res
        if opts.dt is None:
            sigma = max(theta, 0.0) + guard
        else:
            sigma = 1.0 / opts.dt + opts.shift
        zh = gh / (sigma + sym)
        uu = float(np.real(np.vdot(uh, uh)))
        zh = zh - float(np.real(np.vdot(uh, zh))) / uu * uh
        zg = float(np.real(np.vdot(zh, gh)))
        if opts.accelerate and ph is not None and zg_old > 0:
            beta_cg = max(0.0, (zg - float(np.real(np.vdot(zh_old, gh)))) / zg_old)
            ph = -zh + beta_cg * (ph - float(np.real(np.vdot(uh, ph))) / uu * uh)
        else:
            ph = -zh
        slope = w * float(np.real(np.vdot(gh, ph)))
        if slope >= 0:
            ph = -zh
            slope = w * float(np.real(np.vdot(gh, ph)))

        accepted = False
        s = 1.0
        for _ in range(40):
            th_ = uh + s * ph
            tv = ifft(th_)
            r = math.sqrt(c / (float(np.sum(np.abs(tv) ** 2)) * cv))
            en = energy_of(tv * r, th_ * r)
            curv = (en - e - slope * s) / s**2
            if curv > 0:
                s2 = -slope / (2.0 * curv)
                th2 = uh + s2 * ph
                tv2 = ifft(th2)
                r2 = math.sqrt(c / (float(np.sum(np.abs(tv2) ** 2)) * cv))
                en2 = energy_of(tv2 * r2, th2 * r2)
                if en2 <= en:
                    th_, tv, r, en = th2, tv2, r2, en2
            if not math.isfinite(en):
                raise Diverged("energy became non-finite", suggestion=(opts.dt or 1.0) / 2)
            if en <= e + 1e-14 * abs(e):
                accepted = True
                break
            s *= 0.5
        if not accepted:
            # No descent along this direction at round-off level; restart the
            # conjugation once before giving up.
            stalls += 1
            ph = None
            if stalls > 2:
                break
            continue
        stalls = 0
        step = float(np.max(np.abs(tv * r - u)))
        zh_old, zg_old = zh, zg
        u, uh, e = tv * r, th_ * r, en
        it += 1
        if opts.record_history:
            history.append(e)
        if not np.all(np.isfinite(u)):
            raise Diverged(f"non-finite iterate at step {it}", suggestion=(opts.dt or 1.0) / 2)
        if opts.dt is not None and step / opts.dt < opts.tol_stat and res < ACCEPT_TOL:
            break
    return _RunResult(renorm(u), it, res, history)


def _gaussian(grid: Grid, width: float = 1.0) -> np.ndarray:
    coords = grid.coords()
    r2 = sum(c**2 for c in coords[: grid.d])
    return np.broadcast_to(np.exp(-r2 / (2.0 * width**2)), grid.shape).astype(np.complex128)


def _smooth_noise(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    shape = grid.shape
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    keep = (grid.xi2 <= (np.pi / grid.dx / 8) ** 2) & (grid.k2 <= 16)
    sm = grid.ifft(grid.fft(noise) * keep)
    return sm / np.max(np.abs(sm))


def lift(v: Field, grid: Grid) -> Field:
    """Extend a Euclidean field constantly along the torus axes of ``grid``."""
    if v.grid.n != 0 or v.grid.d != grid.d or v.grid.N_x != grid.N_x or v.grid.L != grid.L:
        raise ValueError("lift needs a Euclidean field on the matching x-grid")
    vals = v.values.reshape(v.grid.shape + (1,) * grid.n)
    return Field(grid, np.broadcast_to(vals, grid.shape))


def _lifted_profile(grid: Grid, c: float, p: ModelParams, problem: Problem, opts: SolveOptions) -> np.ndarray:
    if grid.n == 0:
        return _gaussian(grid)
    eg = grid.euclidean()
    hat_problem = problem.hat_counterpart()
    sub = replace(opts, init="gaussian", multistart=1, raise_on_fail=False, record_history=False)
    hs = _solve_single(eg, p.euclidean(), c / (2 * np.pi) ** grid.n, hat_problem, sub, _gaussian(eg), "gaussian")
    return lift(hs.u, grid).values


def _start_values(kind: str, grid: Grid, c: float, p: ModelParams, problem: Problem, opts: SolveOptions,
                  seed: int, cache: dict) -> np.ndarray:
    if kind == "gaussian":
        return _gaussian(grid)
    if kind == "localized":
        base = _gaussian(grid)
        for ax in grid.y_axes:
            yy = grid.coords()[ax]
            base = base * np.exp(-np.angle(np.exp(1j * (yy - np.pi))) ** 2 / 0.5)
        return base
    if "lifted" not in cache:
        cache["lifted"] = _lifted_profile(grid, c, p, problem, opts)
    lifted = cache["lifted"]
    if kind == "lifted_1d":
        return lifted
    if kind == "torus_modulated":
        mod = np.ones(grid.shape)
        for ax in grid.y_axes:
            mod = mod * (1.0 + 0.5 * np.cos(opts.mode_k * grid.coords()[ax]))
        return lifted * mod
    if kind == "random":
        rng = np.random.default_rng(seed)
        return lifted * (1.0 + 0.5 * _smooth_noise(grid, rng))
    raise ValueError(f"unknown init {kind!r}")


def _start_menu(grid: Grid, opts: SolveOptions) -> list[tuple[str, int]]:
    if isinstance(opts.init, Field):
        first = [("warm", opts.seed)]
    elif opts.init == "auto":
        first = (
            [("lifted_1d", opts.seed), ("torus_modulated", opts.seed), ("random", opts.seed)]
            if grid.n
            else [("gaussian", opts.seed)]
        )
    else:
        first = [(str(opts.init), opts.seed)]
    menu = first[: opts.multistart]
    i = 1
    while len(menu) < opts.multistart:
        menu.append(("random", opts.seed + i))
        i += 1
    return menu


def _solve_single(grid, p, c, problem, opts, u0, tag) -> GroundState:
    sym = quadratic_form(problem, p, opts.include_cross).symbol(grid)
    run = _descend(u0, grid, c, p, sym, opts)
    gs = certify(Field(grid, run.u), p, problem, opts.include_cross, c, opts.eta_flat)
    return replace(
        gs,
        converged=gs.el_residual <= ACCEPT_TOL,
        iterations=run.iterations,
        init_tag=tag,
        history=tuple(run.history),
    )


def select_best(states: list[GroundState]) -> GroundState:
    """Lowest converged energy; near-ties go to a y-flat candidate."""
    pool = [s for s in states if s.converged] or states
    best = min(pool, key=lambda s: s.energy.total)
    flat = [s for s in pool if s.y_flat and s.energy.total - best.energy.total < TIE_TOL]
    if flat and not best.y_flat:
        best = min(flat, key=lambda s: s.energy.total)
    cands = []
    for s in states:
        cands.extend(s.candidates or [_summary(s)])
    return replace(best, candidates=tuple(cands))


def _summary(s: GroundState) -> dict:
    return {"init": s.init_tag, "energy": s.energy.total, "y_flat": s.y_flat,
            "el_residual": s.el_residual, "converged": s.converged}


def lowest_energy_seen(gs: GroundState) -> float:
    """Smallest energy over all starts, converged or not (a valid upper bound on the infimum)."""
    return min([gs.energy.total] + [c["energy"] for c in gs.candidates])


def _solve(grid: Grid, p: ModelParams, c: float, problem: Problem, opts: SolveOptions) -> GroundState:
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    opts.validate_for(p)
    cache: dict = {}
    states = []
    for kind, seed in _start_menu(grid, opts):
        if kind == "warm":
            if opts.init.grid != grid:
                raise ValueError("warm start lives on a different grid")
            u0 = np.asarray(opts.init.values)
        else:
            u0 = _start_values(kind, grid, c, p, problem, opts, seed, cache)
        tag = kind if kind != "random" else f"random({seed})"
        if kind == "torus_modulated":
            tag = f"torus_modulated({opts.mode_k})"
        states.append(_solve_single(grid, p, c, problem, opts, u0, tag))
    gs = select_best(states)
    if not gs.converged and opts.raise_on_fail:
        raise Unconverged(
            f"{problem.tag} at c={c:g}: el_residual {gs.el_residual:.3g} after {gs.iterations} iterations",
            state=gs,
        )
    return gs


def default_grid(p: ModelParams) -> Grid:
    if p.d + p.n <= 2:
        return make_grid(p.d, p.n, 16 * np.pi, 512, 64) if p.n else make_grid(p.d, 0, 16 * np.pi, 512)
    return make_grid(p.d, p.n, 8 * np.pi, 64, 16) if p.n else make_grid(p.d, 0, 8 * np.pi, 128)


def solve_ground_state(
    p: ModelParams,
    c: float,
    problem: Problem | str = "m_c",
    opts: SolveOptions | None = None,
    grid: Grid | None = None,
) -> GroundState:
    """Minimize the waveguide functional of ``problem`` over the mass sphere ``M = c``.

    For the unit-mass families, pass ``c = 1``.
    """
    problem = Problem.parse(problem) if isinstance(problem, str) else problem
    if problem.euclidean:
        raise ValueError("use solve_hat_ground_state for Euclidean problems")
    if p.n < 1:
        raise ValueError("waveguide problems need n >= 1")
    grid = grid or default_grid(p)
    if (grid.d, grid.n) != (p.d, p.n):
        raise ValueError(f"grid dimensions {(grid.d, grid.n)} do not match params {(p.d, p.n)}")
    return _solve(grid, p, c, problem, opts or SolveOptions())


def solve_hat_ground_state(
    p: ModelParams,
    c: float,
    variant: str = "plain",
    scale: float | None = None,
    opts: SolveOptions | None = None,
    grid: Grid | None = None,
) -> GroundState:
    """Minimize a Euclidean functional (``plain``, ``lambda``, ``tau``, ``infinity``) on R^d."""
    problem = Problem(f"hat_{variant}", scale)
    if variant == "infinity" and not (p.beta > 0 and p.alpha < 4.0 / p.d):
        raise ValueError("the second-order limit problem needs beta > 0 and alpha < 4/d")
    pe = p.euclidean()
    grid = grid or default_grid(pe)
    if grid.n != 0 or grid.d != p.d:
        raise ValueError("solve_hat_ground_state needs a Euclidean grid with matching d")
    opts = opts or SolveOptions()
    if isinstance(opts.init, str) and opts.init == "auto":
        opts = replace(opts, multistart=1)
    return _solve(grid, pe, c, problem, opts)


def flat_reference(p: ModelParams, c: float, problem: Problem | str = "m_c", opts: SolveOptions | None = None,
                   grid: Grid | None = None) -> float:
    """``(2 pi)^n`` times the Euclidean infimum at mass ``(2 pi)^{-n} c``."""
    problem = Problem.parse(problem) if isinstance(problem, str) else problem
    hp = problem.hat_counterpart()
    g = (grid or default_grid(p)).euclidean()
    vol = (2 * np.pi) ** p.n
    variant = hp.kind[4:]
    sub = replace(opts or SolveOptions(), init="auto")
    hs = solve_hat_ground_state(p, c / vol, variant, hp.scale, sub, g)
    return vol * hs.energy.total


def energy_from(u: Field, p: ModelParams, problem: Problem, include_cross: bool = True) -> float:
    return evaluate(u, problem, p, include_cross).total
