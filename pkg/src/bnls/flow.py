"""Time evolution by Strang splitting and the orbital-stability experiment.

The evolution equation is ``i phi_t - D^2 phi + beta D phi + |phi|^alpha phi = 0``
(``D`` the Laplacian).  A standing wave ``e^{i theta t} u`` solves it exactly
when ``u`` satisfies the stationary equation with multiplier ``theta``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NonFinite
from .functionals import ModelParams, Problem, energy, mass, multiplier_estimate, quadratic_form
from .grid import Field
from .minimizer import GroundState
from .snapshot import write_snapshot

UNPERTURBED_TOL = 1e-8


@dataclass(frozen=True)
class FlowOptions:
    dt: float = 1e-3
    T: float = 1.0
    record_every: int = 100
    mass_tol: float = 1e-10
    energy_tol: float = 1e-5
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.record_every < 1:
            raise ValueError(f"record_every must be >= 1, got {self.record_every}")

    @property
    def steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    orbital_dist: list = field(default_factory=list)

    @property
    def final(self) -> Field:
        return self.fields[-1]

    def mass_drift(self) -> float:
        return max(abs(m - self.mass[0]) for m in self.mass) / self.mass[0]

    def energy_drift(self) -> float:
        e0 = self.energy[0]
        scale = abs(e0) if e0 != 0 else 1.0
        return max(abs(e - e0) for e in self.energy) / scale

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass", "energy", "orbital_dist"])
            for i, t in enumerate(self.times):
                od = self.orbital_dist[i] if i < len(self.orbital_dist) else ""
                w.writerow([repr(t), repr(self.mass[i]), repr(self.energy[i]), repr(od) if od != "" else ""])
        return path

    def write_snapshots(self, directory, p: ModelParams, stem: str = "frame") -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        return [
            write_snapshot(d / f"{stem}_{i:05d}.bnls", u, p.alpha, p.beta, f"t={t!r}")
            for i, (t, u) in enumerate(zip(self.times, self.fields))
        ]


class StrangStepper:
    """Half nonlinear phase, exact linear propagator, half nonlinear phase."""

    def __init__(self, grid, p: ModelParams, dt: float, nonlinear: bool = True):
        self.grid, self.p, self.dt, self.nonlinear = grid, p, dt, nonlinear
        self.symbol = quadratic_form(Problem("m_c"), p).symbol(grid)
        self.linear = np.exp(-1j * dt * self.symbol)

    def _phase(self, vals, h):
        return vals * np.exp(1j * h * np.abs(vals) ** self.p.alpha)

    def run(self, vals: np.ndarray, steps: int) -> np.ndarray:
        g = self.grid
        h = 0.5 * self.dt
        if not self.nonlinear:
            return g.ifft(np.exp(-1j * (steps * self.dt) * self.symbol) * g.fft(vals))
        for _ in range(steps):
            vals = self._phase(vals, h)
            vals = g.ifft(self.linear * g.fft(vals))
            vals = self._phase(vals, h)
        return vals


def _observe(traj: Trajectory, t: float, vals: np.ndarray, grid, p: ModelParams, orbits, step: int):
    if not np.all(np.isfinite(vals)):
        raise NonFinite(f"non-finite samples at step {step}", step)
    u = Field(grid, vals)
    traj.times.append(t)
    traj.fields.append(u)
    traj.mass.append(mass(u))
    traj.energy.append(energy(u, p).total)
    if orbits:
        traj.orbital_dist.append(orbital_distance(u, orbits))


def propagate(
    phi0: Field, p: ModelParams, opts: FlowOptions | None = None, orbit: Sequence[GroundState] | GroundState | None = None,
) -> Trajectory:
    """Integrate from ``phi0``; snapshots every ``record_every`` steps, first and last included.

    With ``orbit`` given, the distance to its symmetry orbit is recorded too.
    """
    opts = opts or FlowOptions()
    g = phi0.grid
    orbits = [orbit] if isinstance(orbit, GroundState) else list(orbit or [])
    stepper = StrangStepper(g, p, opts.dt, opts.nonlinear)
    traj = Trajectory()
    vals = np.array(phi0.values)
    _observe(traj, 0.0, vals, g, p, orbits, 0)
    done = 0
    total = opts.steps
    while done < total:
        k = min(opts.record_every, total - done)
        vals = stepper.run(vals, k)
        done += k
        _observe(traj, done * opts.dt, vals, g, p, orbits, done)
    return traj


def _h2_pair(phi: Field, u: Field):
    g = u.grid
    return g.h2_weight, phi.hat(), u.hat(), g.hat_inner_weight()


def orbital_distance(phi: Field, gs: GroundState | Sequence[GroundState], refine: bool = True) -> float:
    """H^2 distance from ``phi`` to the orbit of ``gs.u`` under phase rotation and translation.

    Grid shifts in every axis are scanned at once by an FFT cross-correlation;
    the x-shift is then refined continuously.  The phase is optimal in closed
    form.  With several states the minimum over their orbits is returned.
    """
    if not isinstance(gs, GroundState):
        return min(orbital_distance(phi, s, refine) for s in gs)
    u = gs.u
    g = u.grid
    if phi.grid != g:
        raise ValueError("phi and the ground state live on different grids")
    w, ph, uh, W = _h2_pair(phi, u)
    corr = g.ifft(w * np.conj(uh) * ph) * g.size
    j = np.unravel_index(int(np.argmax(np.abs(corr))), corr.shape)
    shifts = np.array([j[a] * (g.dx if a < g.d else g.dy) for a in range(g.d + g.n)], dtype=float)
    waves = g.wavenumbers()
    base = w * np.conj(uh) * ph
    y_phase = np.ones(1)
    for a in g.y_axes:
        y_phase = y_phase * np.exp(1j * waves[a] * shifts[a])

    def overlap(sx: np.ndarray) -> complex:
        ph_ = y_phase
        for a in g.x_axes:
            ph_ = ph_ * np.exp(1j * waves[a] * sx[a])
        return complex(np.sum(base * ph_))

    sx = shifts[: g.d]
    if refine:
        sx = _newton_shift(base * y_phase, [waves[a] for a in g.x_axes], sx, g.dx)
    ov = overlap(sx)
    gam = -np.angle(ov)
    total = np.exp(1j * gam) * y_phase
    for a in g.x_axes:
        total = total * np.exp(1j * waves[a] * sx[a])
    diff = total * ph - uh
    return math.sqrt(W * float(np.sum(w * np.abs(diff) ** 2)))


def _newton_shift(coef: np.ndarray, waves: list, s0: np.ndarray, dx: float, iters: int = 30) -> np.ndarray:
    """Maximize ``|sum coef exp(i xi.s)|^2`` over ``s`` by Newton steps from a grid peak.

    Derivatives are analytic, so the optimum is located to round-off rather
    than to the square root of it.
    """
    s = np.array(s0, dtype=float)
    d = len(waves)
    for _ in range(iters):
        ph = np.ones(1)
        for a in range(d):
            ph = ph * np.exp(1j * waves[a] * s[a])
        terms = coef * ph
        C = complex(np.sum(terms))
        C1 = np.array([complex(np.sum(1j * waves[a] * terms)) for a in range(d)])
        C2 = np.array([[complex(np.sum(-waves[a] * waves[b] * terms)) for b in range(d)] for a in range(d)])
        grad = 2.0 * np.real(np.conj(C) * C1)
        hess = 2.0 * (np.real(np.outer(np.conj(C1), C1)) + np.real(np.conj(C) * C2))
        try:
            step = -np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or np.max(np.abs(step)) > dx:
            break
        s = s + step
        if np.max(np.abs(step)) < 1e-15 * max(1.0, float(np.max(np.abs(s)))):
            break
    return s


def band_limited_noise(grid, rng: np.random.Generator) -> np.ndarray:
    """Complex noise with the top third of each axis spectrum removed."""
    noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    nh = grid.fft(noise)
    keep = np.ones(grid.shape, dtype=bool)
    for a, wv in enumerate(grid.wavenumbers()):
        kmax = np.max(np.abs(wv))
        keep = keep & (np.abs(wv) <= kmax * 2.0 / 3.0)
    return grid.ifft(nh * keep)


@dataclass(frozen=True)
class StabilityResult:
    delta: float
    max_orbital_dist: float
    mass_drift: float
    energy_drift: float
    verdict: bool
    valid: bool
    threshold: float
    times: tuple = field(default=(), repr=False)
    distances: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "max_orbital_dist": self.max_orbital_dist,
            "mass_drift": self.mass_drift,
            "energy_drift": self.energy_drift,
            "verdict": self.verdict,
            "valid": self.valid,
            "threshold": self.threshold,
        }


def perturb(gs: GroundState, delta: float, seed: int = 0) -> Field:
    """``gs.u`` plus noise of H^2 size ``delta``, renormalized onto the mass sphere."""
    u = gs.u
    if delta == 0:
        return u
    g = u.grid
    rng = np.random.default_rng(seed)
    eta = Field(g, band_limited_noise(g, rng))
    eta_h2 = math.sqrt(g.hat_inner_weight() * float(np.sum(g.h2_weight * np.abs(eta.hat()) ** 2)))
    v = u + eta * (delta / eta_h2)
    return v * math.sqrt(gs.c / mass(v))


def stability_experiment(
    gs: GroundState | Sequence[GroundState],
    delta: float,
    p: ModelParams,
    opts: FlowOptions | None = None,
    seed: int = 0,
    k_stab: float = 10.0,
) -> tuple[StabilityResult, Trajectory]:
    states = [gs] if isinstance(gs, GroundState) else list(gs)
    opts = opts or FlowOptions(dt=1e-3, T=50.0, record_every=100)
    phi0 = perturb(states[0], delta, seed)
    traj = propagate(phi0, p, opts, orbit=states)
    mdr, edr = traj.mass_drift(), traj.energy_drift()
    valid = mdr <= opts.mass_tol and edr <= opts.energy_tol
    dmax = max(traj.orbital_dist)
    # an unperturbed run can only drift by round-off
    thr = k_stab * math.sqrt(delta) if delta > 0 else UNPERTURBED_TOL
    res = StabilityResult(delta, dmax, mdr, edr, bool(valid and dmax <= thr), bool(valid), thr,
                          tuple(traj.times), tuple(traj.orbital_dist))
    return res, traj


def phase_velocity(traj: Trajectory, u: Field) -> float:
    """Least-squares slope of the unwrapped phase of ``<u, phi(t)>``."""
    g = u.grid
    uh = u.hat()
    ph = [np.angle(np.vdot(uh, f.hat())) for f in traj.fields]
    ph = np.unwrap(ph)
    t = np.asarray(traj.times)
    return float(np.polyfit(t, ph, 1)[0])


def standing_wave_check(gs: GroundState, p: ModelParams, opts: FlowOptions | None = None) -> tuple[float, float]:
    """(fitted phase velocity, multiplier estimate) for a run started at ``gs.u``."""
    opts = opts or FlowOptions(dt=1e-2, T=5.0, record_every=10)
    traj = propagate(gs.u, p, opts)
    return phase_velocity(traj, gs.u), multiplier_estimate(gs.u, p)
