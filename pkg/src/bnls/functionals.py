"""Mass, energy and the rescaled energy families, plus stationarity diagnostics.

Every energy handled here has the shape

    1/2 [a_xx |D_x u|^2 + a_yy |D_y u|^2 + 2 a_xy |grad_x grad_y u|^2
         + b_x |grad_x u|^2 + b_y |grad_y u|^2] - |u|_{alpha+2}^{alpha+2} / (alpha+2)

(``D`` the Laplacian), so a single :class:`QuadraticForm` of five coefficients
describes E, E_lambda, E^tau and the Euclidean variants.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .grid import Field, Grid, _diff_norms_hat, h2_norm, l2_sq

PROBLEM_KINDS = (
    "m_c",
    "m_1_lambda",
    "mu_1_tau",
    "hat_plain",
    "hat_lambda",
    "hat_tau",
    "hat_infinity",
)
_SCALED = {"m_1_lambda", "mu_1_tau", "hat_lambda", "hat_tau"}


@dataclass(frozen=True)
class ModelParams:
    d: int
    n: int
    alpha: float
    beta: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.n > 0 and self.alpha >= self.critical_alpha:
            warnings.warn(
                f"alpha={self.alpha} is not mass-subcritical (needs < {self.critical_alpha:.4g})",
                stacklevel=2,
            )

    @property
    def critical_alpha(self) -> float:
        return 8.0 / (self.d + self.n)

    @property
    def regime(self) -> str:
        """Case split used by the existence theory."""
        if self.beta == 0:
            return "beta_zero"
        if self.beta < 0:
            return "beta_negative"
        if self.alpha < min(8.0 / (self.d + self.n), 4.0 / self.d):
            return "beta_positive_subcritical"
        return "beta_positive_critical"

    def euclidean(self) -> "ModelParams":
        return ModelParams(self.d, 0, self.alpha, self.beta)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Problem:
    """Which constrained infimum is being evaluated or solved.

    ``scale`` carries lambda (``m_1_lambda``, ``hat_lambda``) or tau
    (``mu_1_tau``, ``hat_tau``).
    """

    kind: str = "m_c"
    scale: float | None = None

    def __post_init__(self):
        if self.kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem {self.kind!r}; expected one of {PROBLEM_KINDS}")
        if self.kind in _SCALED:
            if self.scale is None:
                name = "lambda" if "lambda" in self.kind else "tau"
                raise ValueError(f"problem {self.kind} requires {name}")
            if not self.scale > 0:
                raise ValueError(f"scale must be positive, got {self.scale}")
        elif self.scale is not None:
            raise ValueError(f"problem {self.kind} takes no scale")

    @property
    def euclidean(self) -> bool:
        return self.kind.startswith("hat_")

    @property
    def tag(self) -> str:
        return self.kind if self.scale is None else f"{self.kind}({self.scale:g})"

    def hat_counterpart(self) -> "Problem":
        """The Euclidean problem whose lifted minimizer is the y-flat competitor."""
        if self.kind == "m_c":
            return Problem("hat_plain")
        if self.kind == "m_1_lambda":
            return Problem("hat_lambda", self.scale)
        if self.kind == "mu_1_tau":
            return Problem("hat_tau", self.scale)
        return self

    @classmethod
    def parse(cls, text: str) -> "Problem":
        text = text.strip()
        if "(" in text:
            kind, rest = text.split("(", 1)
            return cls(kind.strip(), float(rest.rstrip(")")))
        return cls(text)


@dataclass(frozen=True)
class QuadraticForm:
    a_xx: float
    a_yy: float
    a_xy: float
    b_x: float
    b_y: float

    def symbol(self, grid: Grid) -> np.ndarray:
        xi2, k2 = grid.xi2, grid.k2
        return (
            self.a_xx * xi2**2
            + self.a_yy * k2**2
            + 2.0 * self.a_xy * xi2 * k2
            + self.b_x * xi2
            + self.b_y * k2
        )


def quadratic_form(problem: Problem, p: ModelParams, include_cross: bool = True) -> QuadraticForm:
    b, s, x = p.beta, problem.scale, 1.0 if include_cross else 0.0
    kind = problem.kind
    if kind == "m_c":
        return QuadraticForm(1.0, 1.0, 1.0, b, b)
    if kind == "m_1_lambda":
        r = math.sqrt(s)
        return QuadraticForm(1.0, s, r * x, b * r, b * s)
    if kind == "mu_1_tau":
        return QuadraticForm(1.0 / s, s, x, b, b * s)
    if kind == "hat_plain":
        return QuadraticForm(1.0, 0.0, 0.0, b, 0.0)
    if kind == "hat_lambda":
        return QuadraticForm(1.0, 0.0, 0.0, b * math.sqrt(s), 0.0)
    if kind == "hat_tau":
        return QuadraticForm(1.0 / s, 0.0, 0.0, b, 0.0)
    return QuadraticForm(0.0, 0.0, 0.0, b, 0.0)  # hat_infinity


@dataclass(frozen=True)
class EnergyBreakdown:
    total: float
    quartic_part: float
    quadratic_part: float
    nonlinear_part: float
    cross_term: float

    def to_dict(self) -> dict:
        return asdict(self)


def _check_grid(u: Field, problem: Problem):
    if problem.euclidean and u.grid.n != 0:
        raise ValueError(f"{problem.kind} needs a Euclidean grid (n = 0), got n = {u.grid.n}")


def mass(u: Field) -> float:
    return l2_sq(u)


def _breakdown(q: QuadraticForm, dn, power: float, alpha: float) -> EnergyBreakdown:
    quartic = 0.5 * (q.a_xx * dn.lap_x_sq + q.a_yy * dn.lap_y_sq)
    quadratic = 0.5 * (q.b_x * dn.grad_x_sq + q.b_y * dn.grad_y_sq)
    cross = q.a_xy * dn.mixed_sq
    nonlinear = power / (alpha + 2.0)
    return EnergyBreakdown(quartic + quadratic + cross - nonlinear, quartic, quadratic, nonlinear, cross)


def _power(u: Field, alpha: float) -> float:
    return float(np.sum(np.abs(u.values) ** (alpha + 2.0)) * u.grid.cell_volume)


def evaluate(u: Field, problem: Problem, p: ModelParams, include_cross: bool = True) -> EnergyBreakdown:
    """Energy functional attached to ``problem`` evaluated at ``u``."""
    _check_grid(u, problem)
    q = quadratic_form(problem, p, include_cross)
    return _breakdown(q, _diff_norms_hat(u.grid, u.hat()), _power(u, p.alpha), p.alpha)


def energy(u: Field, p: ModelParams) -> EnergyBreakdown:
    return evaluate(u, Problem("m_c"), p)


def energy_lambda(u: Field, lam: float, p: ModelParams, include_cross: bool = True) -> EnergyBreakdown:
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return evaluate(u, Problem("m_1_lambda", lam), p, include_cross)


def energy_tau(u: Field, tau: float, p: ModelParams, include_cross: bool = True) -> EnergyBreakdown:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return evaluate(u, Problem("mu_1_tau", tau), p, include_cross)


def hat_energy(u: Field, variant: str, p: ModelParams, scale: float | None = None) -> float:
    """Euclidean energies; ``variant`` is plain, lambda, tau or infinity."""
    if u.grid.n != 0:
        raise ValueError("hat_energy needs a Euclidean grid (n = 0)")
    return evaluate(u, Problem(f"hat_{variant}", scale), p).total


def pohozaev_residual(
    u: Field,
    problem: Problem,
    p: ModelParams,
    include_cross: bool = True,
    relative: bool = False,
) -> float:
    """x-dilation derivative d/dt E(t^{d/2} u(t x, y)) at t = 1.

    Vanishes at every constrained minimizer.  With ``relative`` the value is
    divided by ``|u|_{alpha+2}^{alpha+2}``.
    """
    _check_grid(u, problem)
    q = quadratic_form(problem, p, include_cross)
    dn = _diff_norms_hat(u.grid, u.hat())
    pw = _power(u, p.alpha)
    res = (
        2.0 * q.a_xx * dn.lap_x_sq
        + 2.0 * q.a_xy * dn.mixed_sq
        + q.b_x * dn.grad_x_sq
        - p.alpha * p.d / (2.0 * (p.alpha + 2.0)) * pw
    )
    if relative:
        return res / pw if pw > 0 else 0.0
    return float(res)


def _quad_value(q: QuadraticForm, dn) -> float:
    return (
        q.a_xx * dn.lap_x_sq
        + q.a_yy * dn.lap_y_sq
        + 2.0 * q.a_xy * dn.mixed_sq
        + q.b_x * dn.grad_x_sq
        + q.b_y * dn.grad_y_sq
    )


def multiplier_estimate(
    u: Field, p: ModelParams, problem: Problem | None = None, include_cross: bool = True
) -> float:
    """Lagrange multiplier obtained by pairing the stationary equation with u.

    theta = (|u|_{alpha+2}^{alpha+2} - <L u, u>) / M(u), where ``L`` is the
    quadratic operator of ``problem`` (the full waveguide energy by default).
    """
    problem = problem or Problem("m_c")
    m = mass(u)
    if m <= 0:
        raise ValueError("multiplier_estimate needs a field with positive mass")
    q = quadratic_form(problem, p, include_cross)
    dn = _diff_norms_hat(u.grid, u.hat())
    return (_power(u, p.alpha) - _quad_value(q, dn)) / m


def el_residual(
    u: Field,
    p: ModelParams,
    problem: Problem | None = None,
    theta: float | None = None,
    include_cross: bool = True,
) -> float:
    """Relative Euler-Lagrange defect ``|L u + theta u - |u|^alpha u|_2 / |u|_{H^2}``."""
    problem = problem or Problem("m_c")
    g = u.grid
    if theta is None:
        theta = multiplier_estimate(u, p, problem, include_cross)
    sym = quadratic_form(problem, p, include_cross).symbol(g)
    uh = u.hat()
    rh = sym * uh + theta * uh - g.fft(np.abs(u.values) ** p.alpha * u.values)
    num = math.sqrt(g.hat_inner_weight() * float(np.sum(np.abs(rh) ** 2)))
    den = h2_norm(u)
    return num / den if den > 0 else 0.0


def quad_form(u: Field, p: ModelParams) -> float:
    """``|Delta u|^2 + beta |grad u|^2`` over the full product domain."""
    dn = _diff_norms_hat(u.grid, u.hat())
    return dn.lap_xy_sq + p.beta * (dn.grad_x_sq + dn.grad_y_sq)


def coercivity_defect(u: Field, p: ModelParams) -> float:
    """``|Delta u|^2 + beta^2/4 |u|^2 + beta |grad u|^2``; nonnegative for all u."""
    return quad_form(u, p) + 0.25 * p.beta**2 * mass(u)


def build_modulated_probe(R: float, p: ModelParams, grid: Grid | None = None) -> Field:
    """Unit-mass wave packet ``exp(i w.x) chi_R(x)`` with ``|w|^2 = -beta/2``.

    ``chi_R`` is a Gaussian envelope of width ``R``; its quadratic form per
    unit mass tends to ``-beta^2/4`` as ``R`` grows.  Without a grid, a
    torus-free box of half-length ``8 R`` is used, the frequency being placed
    on the first x-axis.
    """
    if p.beta >= 0:
        raise ValueError("the modulated probe needs beta < 0")
    if grid is None:
        from .grid import make_grid

        L = 8.0 * R
        N = 1 << int(math.ceil(math.log2(2 * L / 0.25)))
        grid = make_grid(p.d, p.n, L, N, 8) if p.n else make_grid(p.d, 0, L, N)
    omega = math.sqrt(-p.beta / 2.0)
    coords = grid.coords()
    r2 = sum(c**2 for c in coords[: grid.d])
    vals = np.exp(1j * omega * coords[0] - r2 / (2.0 * R**2))
    vals = np.broadcast_to(vals, grid.shape)
    u = Field(grid, vals)
    return u * (1.0 / math.sqrt(mass(u)))


def gn_exponents(p: ModelParams) -> tuple[float, float]:
    """Exponents on ``|u|_{H^2}`` and ``|u|_2`` in the Gagliardo-Nirenberg bound."""
    e_h2 = p.alpha * (p.d + p.n) / 4.0
    return e_h2, p.alpha + 2.0 - e_h2


class GNTracker:
    """Running maximum of the Gagliardo-Nirenberg ratio (an empirical constant)."""

    def __init__(self):
        self.max_ratio = 0.0
        self.count = 0

    def __call__(self, u: Field, p: ModelParams) -> float:
        m = mass(u)
        if m <= 0:
            raise ValueError("gn_check needs a nonzero field")
        e_h2, e_l2 = gn_exponents(p)
        ratio = _power(u, p.alpha) / (h2_norm(u) ** e_h2 * math.sqrt(m) ** e_l2)
        self.max_ratio = max(self.max_ratio, ratio)
        self.count += 1
        return ratio


_default_gn_tracker = GNTracker()


def gn_check(u: Field, p: ModelParams, tracker: GNTracker | None = None) -> float:
    """Gagliardo-Nirenberg ratio of ``u``; also updates the running maximum."""
    return (tracker or _default_gn_tracker)(u, p)


def gn_running_max() -> float:
    return _default_gn_tracker.max_ratio
