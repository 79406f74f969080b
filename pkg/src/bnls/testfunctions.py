"""Tent-profile competitors ``psi(x, y) = Q(x) prod_j rho_eps(y_j)`` and the upper bounds they give.

All torus integrals are taken on a fine one-dimensional grid and combined
through tensor-product identities, so the mollifier width can be far below
the resolution of any waveguide grid.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import InconclusiveBound
from .functionals import ModelParams, Problem, quadratic_form
from .grid import Field, Grid, diff_norms, l2_sq, lp_norm, make_grid
from .minimizer import GroundState, SolveOptions, solve_hat_ground_state

DEFAULT_A = 0.9 * math.pi
DEFAULT_EPS = 0.02 * math.pi
DEFAULT_TORUS_POINTS = 1 << 16
MODES = ("equal_norms", "doubled")


def closed_form_norms(a: float, b: float, alpha: float) -> tuple[float, float]:
    """``(|rho|_2^2, |rho|_{alpha+2}^{alpha+2})`` of the tent with cutoff ``a`` and slope ``b``."""
    h = math.pi - a
    return 2.0 * b**2 * h**3 / 3.0, 2.0 * b ** (alpha + 2) * h ** (alpha + 3) / (alpha + 3)


def slope_for_mode(a: float, alpha: float, mode: str) -> float:
    """Slope making ``|rho|_{alpha+2}^{alpha+2}`` equal (or twice) ``|rho|_2^2``."""
    factor = {"equal_norms": 1.0, "doubled": 2.0}[mode]
    return (factor * (alpha + 3.0) / (3.0 * (math.pi - a) ** alpha)) ** (1.0 / alpha)


def displayed_slope(a: float, alpha: float, mode: str) -> float:
    """The alternative slope formula with exponent ``-(alpha+1)``; kept for comparison only."""
    factor = {"equal_norms": 1.0, "doubled": 2.0}[mode]
    return (factor * (alpha + 3.0) * (math.pi - a) ** (-(alpha + 1.0)) / 3.0) ** (1.0 / alpha)


def torus_points(N: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(N) / N


def tent(z: np.ndarray, a: float, b: float) -> np.ndarray:
    z = np.mod(z, 2.0 * math.pi)
    zz = np.minimum(z, 2.0 * math.pi - z)
    return np.where(zz > a, b * (zz - a), 0.0)


@dataclass(frozen=True, eq=False)
class TentProfile:
    a: float
    b: float
    alpha: float
    mode: str
    samples: np.ndarray = field(repr=False)
    l2_sq: float
    lp: float
    l2_sq_quadrature: float
    lp_quadrature: float
    b_displayed: float

    @property
    def N(self) -> int:
        return self.samples.size

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("samples")
        out["N"] = self.N
        return out


def build_rho(
    a: float,
    alpha: float,
    mode: str = "equal_norms",
    N: int = DEFAULT_TORUS_POINTS,
    b: float | None = None,
) -> TentProfile:
    """Tent profile on ``[0, 2 pi)``; ``b`` overrides the mode's slope (diagnostics)."""
    if not 0 < a < math.pi:
        raise ValueError(f"a must lie in (0, pi), got {a}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    slope = slope_for_mode(a, alpha, mode) if b is None else float(b)
    z = torus_points(N)
    s = tent(z, a, slope)
    dz = 2.0 * math.pi / N
    l2, lp = closed_form_norms(a, slope, alpha)
    return TentProfile(
        a=a,
        b=slope,
        alpha=alpha,
        mode=mode,
        samples=s,
        l2_sq=l2,
        lp=lp,
        l2_sq_quadrature=float(np.sum(s**2) * dz),
        lp_quadrature=float(np.sum(np.abs(s) ** (alpha + 2)) * dz),
        b_displayed=displayed_slope(a, alpha, mode),
    )


def bump_kernel(N: int, eps: float) -> np.ndarray:
    """``exp(-1/(1 - (z/eps)^2))`` on ``|z| < eps``, periodically wrapped, unit integral."""
    z = torus_points(N)
    z = np.where(z > math.pi, z - 2.0 * math.pi, z)
    t = z / eps
    k = np.zeros(N)
    inside = np.abs(t) < 1.0
    k[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return k / (np.sum(k) * 2.0 * math.pi / N)


@dataclass(frozen=True, eq=False)
class MollifiedProfile:
    rho: TentProfile
    eps: float
    samples: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.samples.size

    def _deriv(self, order: int) -> np.ndarray:
        k = sfft.fftfreq(self.N, d=1.0 / self.N)
        return np.real(sfft.ifft((1j * k) ** order * sfft.fft(self.samples)))

    def norms(self) -> dict:
        """|.|_2^2 of the profile and of its first two derivatives, plus the power norm."""
        dz = 2.0 * math.pi / self.N
        alpha = self.rho.alpha
        return {
            "l2_sq": float(np.sum(self.samples**2) * dz),
            "grad_sq": float(np.sum(self._deriv(1) ** 2) * dz),
            "lap_sq": float(np.sum(self._deriv(2) ** 2) * dz),
            "lp": float(np.sum(np.abs(self.samples) ** (alpha + 2)) * dz),
        }

    def support(self, tol: float = 0.0) -> tuple[float, float]:
        z = torus_points(self.N)
        nz = z[np.abs(self.samples) > tol]
        return float(nz.min()), float(nz.max())

    def rotate(self, steps: int) -> "MollifiedProfile":
        return MollifiedProfile(self.rho, self.eps, np.roll(self.samples, steps))


def mollify(rho: TentProfile, eps: float) -> MollifiedProfile:
    if not 0 < eps < rho.a / 2:
        raise ValueError(f"eps must lie in (0, a/2) = (0, {rho.a / 2:g}), got {eps}")
    k = bump_kernel(rho.N, eps)
    dz = 2.0 * math.pi / rho.N
    smooth = np.real(sfft.ifft(sfft.fft(rho.samples) * sfft.fft(k))) * dz
    # the exact convolution vanishes outside [a - eps, 2 pi - a + eps]; drop FFT roundoff there
    z = torus_points(rho.N)
    smooth[(z < rho.a - eps) | (z > 2.0 * math.pi - rho.a + eps)] = 0.0
    return MollifiedProfile(rho, eps, smooth)


@dataclass(frozen=True)
class TorusFactor:
    """Norms of ``Psi(y) = A^n prod_j rho_eps(y_j)`` with ``A = |rho|_2 / |rho_eps|_2``."""

    n: int
    l2_sq: float
    grad_sq: float
    lap_sq: float
    lp: float

    @classmethod
    def from_profile(cls, prof: MollifiedProfile, n: int) -> "TorusFactor":
        r = prof.norms()
        amp2 = prof.rho.l2_sq / r["l2_sq"]
        a2n = amp2**n
        r2 = r["l2_sq"]
        lap = n * r["lap_sq"] * r2 ** (n - 1)
        if n >= 2:
            lap += n * (n - 1) * r["grad_sq"] ** 2 * r2 ** (n - 2)
        return cls(
            n=n,
            l2_sq=a2n * r2**n,
            grad_sq=a2n * n * r["grad_sq"] * r2 ** (n - 1),
            lap_sq=a2n * lap,
            lp=amp2 ** (n * (prof.rho.alpha + 2) / 2.0) * r["lp"] ** n,
        )


@dataclass(frozen=True)
class ProductNorms:
    lap_x_sq: float
    lap_y_sq: float
    mixed_sq: float
    grad_x_sq: float
    grad_y_sq: float
    power: float
    mass: float


def product_norms(Q: Field, psi_y: TorusFactor, alpha: float) -> ProductNorms:
    dq = diff_norms(Q)
    mq = l2_sq(Q)
    pq = lp_norm(Q, alpha + 2) ** (alpha + 2)
    return ProductNorms(
        lap_x_sq=dq.lap_x_sq * psi_y.l2_sq,
        lap_y_sq=mq * psi_y.lap_sq,
        mixed_sq=dq.grad_x_sq * psi_y.grad_sq,
        grad_x_sq=dq.grad_x_sq * psi_y.l2_sq,
        grad_y_sq=mq * psi_y.grad_sq,
        power=pq * psi_y.lp,
        mass=mq * psi_y.l2_sq,
    )


def build_psi(Q: Field, rho_eps: MollifiedProfile, n: int, grid: Grid | None = None) -> Field:
    """Sample the product competitor on a waveguide grid.

    The torus profile is read off at the grid points (its sample count must
    be a multiple of ``N_y``); ``Q`` must carry mass ``|rho|_2^{-2n}``.
    Amplitudes are normalized with the sampled norms, so the grid mass is 1.
    """
    target = rho_eps.rho.l2_sq ** (-n)
    mq = l2_sq(Q)
    if abs(mq - target) > 1e-8 * target:
        raise ValueError(f"Q has mass {mq:.12g}, expected |rho|^(-2n) = {target:.12g}")
    if Q.grid.n != 0:
        raise ValueError("Q must live on a Euclidean grid")
    grid = grid or make_grid(Q.grid.d, n, Q.grid.L, Q.grid.N_x, 64)
    if rho_eps.N % grid.N_y:
        raise ValueError("torus profile resolution must be a multiple of N_y")
    stride = rho_eps.N // grid.N_y
    prof = rho_eps.samples[::stride]
    amp = math.sqrt(rho_eps.rho.l2_sq / (np.sum(prof**2) * grid.dy))
    vals = math.sqrt(target / mq) * Q.values.reshape(Q.grid.shape + (1,) * n)
    for j in range(n):
        shp = [1] * (grid.d + n)
        shp[grid.d + j] = grid.N_y
        vals = vals * (amp * prof).reshape(shp)
    return Field(grid, np.broadcast_to(vals, grid.shape))


@dataclass(frozen=True)
class UpperBoundReport:
    a: float
    eps: float
    lam: float
    mode: str
    include_cross: bool
    rho: dict
    reference: float
    leading: float
    advantage: float
    I1: float
    I2: float
    I2_with_volume_factor: float
    cross_term: float
    zeta: float
    energy_psi: float
    gap: float
    gap_limit: float
    lambda_bar: float | None
    params: dict

    @property
    def certified(self) -> bool:
        return self.gap < 0

    def to_dict(self) -> dict:
        return asdict(self)


def _lambda_bar(base: float, lin: float, root: float) -> float | None:
    """Largest lambda with ``base + root sqrt(lambda) + lin lambda < 0`` (Q held fixed)."""
    if base >= 0:
        return None
    if lin <= 0 and root <= 0:
        return math.inf
    # quadratic in s = sqrt(lambda)
    if lin == 0:
        s = -base / root
    else:
        s = (-root + math.sqrt(root**2 - 4 * lin * base)) / (2 * lin)
    return s * s


def upper_bound_report(
    a: float = DEFAULT_A,
    eps: float = DEFAULT_EPS,
    lam: float = 1e-3,
    p: ModelParams | None = None,
    mode: str | None = None,
    include_cross: bool = True,
    N_torus: int = DEFAULT_TORUS_POINTS,
    grid: Grid | None = None,
    opts: SolveOptions | None = None,
    strict: bool = True,
) -> UpperBoundReport:
    """Evaluate ``E_lambda(psi)`` against the y-flat value ``(2 pi)^n m^lambda_{(2 pi)^{-n}}``.

    ``E_lambda(psi) = leading + I1 + I2 + cross_term`` where ``leading`` is
    ``|rho|^{2n}`` times the Euclidean minimum at mass ``|rho|^{-2n}``,
    ``I1`` the power-norm mismatch, ``I2`` the torus-derivative cost (linear
    in lambda) and ``cross_term`` the mixed-derivative cost (scaling like
    sqrt(lambda)).
    """
    p = p or ModelParams(1, 1, 2.0, 0.0)
    if p.n < 1:
        raise ValueError("the competitor needs at least one torus axis")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    mode = mode or ("equal_norms" if p.beta == 0 else "doubled")
    n = p.n
    rho = build_rho(a, p.alpha, mode, N_torus)
    prof = mollify(rho, eps)
    psi_y = TorusFactor.from_profile(prof, n)
    vol = (2.0 * math.pi) ** n
    eg = (grid.euclidean() if grid is not None else make_grid(p.d, 0, 16 * math.pi, 512))
    variant, scale = ("lambda", lam) if p.beta != 0 else ("plain", None)
    Qs: GroundState = solve_hat_ground_state(p, rho.l2_sq ** (-n), variant, scale, opts, eg)
    ref = vol * solve_hat_ground_state(p, 1.0 / vol, variant, scale, opts, eg).energy.total

    pn = product_norms(Qs.u, psi_y, p.alpha)
    q = quadratic_form(Problem("m_1_lambda", lam), p, include_cross)
    energy_psi = 0.5 * (
        q.a_xx * pn.lap_x_sq + q.a_yy * pn.lap_y_sq + 2 * q.a_xy * pn.mixed_sq
        + q.b_x * pn.grad_x_sq + q.b_y * pn.grad_y_sq
    ) - pn.power / (p.alpha + 2)

    l2n = rho.l2_sq**n
    leading = l2n * Qs.energy.total
    pq = lp_norm(Qs.u, p.alpha + 2) ** (p.alpha + 2)
    zeta = psi_y.lp / l2n - 1.0
    I1 = -l2n * zeta * pq / (p.alpha + 2)
    mq = l2_sq(Qs.u)
    I2 = 0.5 * lam * mq * (psi_y.lap_sq + p.beta * psi_y.grad_sq)
    cross = q.a_xy * pn.mixed_sq
    gap = energy_psi - ref
    base = leading + I1 - ref
    rep = UpperBoundReport(
        a=a,
        eps=eps,
        lam=lam,
        mode=mode,
        include_cross=include_cross,
        rho=rho.to_dict(),
        reference=ref,
        leading=leading,
        advantage=leading - ref,
        I1=I1,
        I2=I2,
        I2_with_volume_factor=vol * I2,
        cross_term=cross,
        zeta=zeta,
        energy_psi=energy_psi,
        gap=gap,
        gap_limit=base,
        lambda_bar=_lambda_bar(base, I2 / lam, cross / math.sqrt(lam)),
        params=p.to_dict(),
    )
    if strict and gap >= 0:
        raise InconclusiveBound(
            f"competitor gap {gap:.4g} is not negative (advantage {rep.advantage:.3g}, "
            f"I1 {I1:.3g}, I2 {I2:.3g}, cross {cross:.3g})",
            report=rep,
        )
    return rep
