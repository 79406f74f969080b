"""Anisotropic x-dilations that move a mass-c problem onto the unit-mass families.

``T_theta u = theta^{4/alpha} u(theta x, y)`` pairs with ``E_lambda``,
``lambda = theta^4``; ``S_theta u = theta^{2/alpha} u(theta x, y)`` pairs with
``E^tau``, ``tau = theta^2``.  Both identities hold for every ``beta``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import TailEscape
from .functionals import ModelParams, Problem, energy, energy_lambda, energy_tau
from .grid import Field, Grid, make_grid
from .minimizer import GroundState, SolveOptions, certify, solve_hat_ground_state

TAIL_TOL = 1e-10
TAIL_FRACTION = 1.0 / 16.0


def exponent_t(p: ModelParams) -> float:
    """Energy exponent ``(d - 8/alpha - 4)/(d - 8/alpha)`` of the T-reduction."""
    q = p.d - 8.0 / p.alpha
    return (q - 4.0) / q


def exponent_s(p: ModelParams) -> float:
    q = p.d - 4.0 / p.alpha
    return (q - 2.0) / q


def _root(c: float, q: float, what: str) -> float:
    if q == 0:
        raise ValueError(f"{what} is undefined when its exponent denominator vanishes")
    return c ** (1.0 / q)


def kappa(c: float, p: ModelParams) -> float:
    return _root(c, p.d - 8.0 / p.alpha, "kappa (alpha = 8/d)")


def gamma(c: float, p: ModelParams) -> float:
    return _root(c, p.d - 4.0 / p.alpha, "gamma (alpha = 4/d)")


def lambda_of_mass(c: float, p: ModelParams) -> float:
    return kappa(c, p) ** 4


def mass_of_lambda(lam: float, p: ModelParams) -> float:
    return lam ** ((p.d - 8.0 / p.alpha) / 4.0)


def tau_of_mass(c: float, p: ModelParams) -> float:
    return gamma(c, p) ** 2


def mass_of_tau(tau: float, p: ModelParams) -> float:
    return tau ** ((p.d - 4.0 / p.alpha) / 2.0)


@dataclass(frozen=True)
class ScalingMap:
    kind: str
    theta: float
    alpha: float

    def __post_init__(self):
        if self.kind not in ("T", "S"):
            raise ValueError(f"kind must be 'T' or 'S', got {self.kind!r}")
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")

    @property
    def amplitude_power(self) -> float:
        return (4.0 if self.kind == "T" else 2.0) / self.alpha

    @classmethod
    def for_mass(cls, kind: str, c: float, p: ModelParams) -> "ScalingMap":
        """The map sending the mass sphere ``S(c)`` onto ``S(1)``."""
        theta = kappa(c, p) if kind == "T" else gamma(c, p)
        return cls(kind, theta, p.alpha)

    @property
    def scale(self) -> float:
        """lambda (kind T) or tau (kind S) of the target functional."""
        return self.theta**4 if self.kind == "T" else self.theta**2

    def inverse(self) -> "ScalingMap":
        return ScalingMap(self.kind, 1.0 / self.theta, self.alpha)


@lru_cache(maxsize=64)
def _dilation_matrix(N: int, L: float, theta: float) -> np.ndarray:
    """Rows evaluate the trigonometric interpolant of grid samples at ``theta * x_j``.

    Points that land outside ``[-L, L)`` are set to zero (no periodic wrap).
    """
    dx = 2.0 * L / N
    x = -L + dx * np.arange(N)
    xi = 2.0 * np.pi * np.fft.fftfreq(N, d=dx)
    t = theta * x
    phase = np.exp(1j * np.outer(t + L, xi))
    phase[:, N // 2] = np.cos(np.abs(xi[N // 2]) * (t + L))
    # coefficients c_k = fft(u)_k / N
    F = np.exp(-1j * np.outer(xi, x + L)) / N
    M = phase @ F
    M[(t < -L) | (t >= L)] = 0.0
    return M


def dilate_x(u: Field, theta: float) -> Field:
    """``u(theta x, y)`` by exact evaluation of the trigonometric interpolant."""
    g = u.grid
    if theta == 1.0:
        return u
    M = _dilation_matrix(g.N_x, g.L, float(theta))
    vals = np.asarray(u.values)
    for ax in g.x_axes:
        vals = np.moveaxis(np.tensordot(M, vals, axes=([1], [ax])), 0, ax)
    return Field(g, vals)


def tail_fraction(u: Field) -> float:
    """Share of the mass lying in the outer 1/16 of the box along any x-axis."""
    g = u.grid
    dens = np.abs(u.values) ** 2
    total = float(dens.sum())
    if total == 0:
        return 0.0
    edge = (1.0 - TAIL_FRACTION) * g.L
    mask = np.zeros(g.shape, dtype=bool)
    for c in g.coords()[: g.d]:
        mask = mask | (np.abs(c) >= edge)
    return float(dens[np.broadcast_to(mask, g.shape)].sum()) / total


def apply_scaling(u: Field, smap: ScalingMap, check_tail: bool = True) -> Field:
    out = dilate_x(u, smap.theta) * (smap.theta**smap.amplitude_power)
    if check_tail and smap.theta < 1.0:
        tail = tail_fraction(out)
        if tail > TAIL_TOL:
            raise TailEscape(
                f"dilation by {smap.theta:g} pushes {tail:.2e} of the mass to the box edge"
            )
    return out


@dataclass(frozen=True)
class ScalingResidual:
    with_cross: float
    without_cross: float
    energy: float
    scale: float


def verify_scaling_identity(u: Field, c: float, p: ModelParams, kind: str = "T") -> ScalingResidual:
    """Residuals of ``E(u) = c^e E_scaled(map u)`` with and without the mixed term."""
    smap = ScalingMap.for_mass(kind, c, p)
    v = apply_scaling(u, smap)
    e_u = energy(u, p).total
    if kind == "T":
        e, f = exponent_t(p), energy_lambda
    else:
        e, f = exponent_s(p), energy_tau
    on = abs(e_u - c**e * f(v, smap.scale, p, True).total)
    off = abs(e_u - c**e * f(v, smap.scale, p, False).total)
    return ScalingResidual(on, off, e_u, smap.scale)


def pull_back(gs: GroundState, c: float, p: ModelParams) -> GroundState:
    """Map a minimizer of the unit-mass lambda family back to the mass sphere S(c)."""
    smap = ScalingMap.for_mass("T", c, p).inverse()
    u = apply_scaling(gs.u, smap)
    return certify(u, p, Problem("m_c"), True, c)


@dataclass(frozen=True)
class HatScalingCheck:
    ratio: float
    predicted: float
    defect: float
    relative_defect: float
    m1: float
    m2: float


def hat_scaling_check(
    c1: float, c2: float, p: ModelParams, opts: SolveOptions | None = None, grid: Grid | None = None
) -> HatScalingCheck:
    """Compare ``m^_{c2}/m^_{c1}`` from two solves with ``(c2/c1)^e``."""
    if p.beta != 0:
        raise ValueError("the Euclidean scaling law needs beta = 0")
    grid = grid or make_grid(p.d, 0, 16 * np.pi, 512)
    m1 = solve_hat_ground_state(p, c1, "plain", opts=opts, grid=grid).energy.total
    m2 = m1 if c2 == c1 else solve_hat_ground_state(p, c2, "plain", opts=opts, grid=grid).energy.total
    pred = (c2 / c1) ** exponent_t(p)
    ratio = m2 / m1
    return HatScalingCheck(ratio, pred, abs(ratio - pred), abs(ratio - pred) / pred, m1, m2)
