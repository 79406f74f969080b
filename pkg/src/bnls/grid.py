"""Discretized product domain R^d x T^n and Fourier-diagonal operators.

The unbounded axes are truncated to ``[-L, L)`` and periodized; the torus axes
have period exactly ``2*pi``.  All quadratic quantities are evaluated on the
Fourier side through Parseval, which is exact for the discrete transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.fft as sfft

MAX_TOTAL_DIM = 3
TORUS_PERIOD = 2.0 * np.pi


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Equispaced grid on ``[-L, L)^d x [0, 2pi)^n``.

    Axes are ordered x-axes first, then y-axes; values are stored row-major
    with the last axis fastest.  ``n = 0`` gives a pure Euclidean grid used by
    the hatted (R^d-only) functionals.
    """

    d: int
    n: int
    L: float
    N_x: int
    N_y: int

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N_x,) * self.d + (self.N_y,) * self.n

    @property
    def size(self) -> int:
        return self.N_x**self.d * self.N_y**self.n

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N_x

    @property
    def dy(self) -> float:
        return TORUS_PERIOD / self.N_y

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d * self.dy**self.n

    @property
    def x_axes(self) -> tuple[int, ...]:
        return tuple(range(self.d))

    @property
    def y_axes(self) -> tuple[int, ...]:
        return tuple(range(self.d, self.d + self.n))

    @cached_property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N_x)

    @cached_property
    def y(self) -> np.ndarray:
        return self.dy * np.arange(self.N_y)

    @cached_property
    def xi(self) -> np.ndarray:
        """Wavenumbers of an unbounded axis: integer multiples of pi/L."""
        return 2.0 * np.pi * sfft.fftfreq(self.N_x, d=self.dx)

    @cached_property
    def k(self) -> np.ndarray:
        """Torus wavenumbers (integers)."""
        return np.round(sfft.fftfreq(self.N_y, d=1.0 / self.N_y))

    def _broadcast(self, vec: np.ndarray, axis: int) -> np.ndarray:
        shp = [1] * (self.d + self.n)
        shp[axis] = vec.size
        return vec.reshape(shp)

    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable physical coordinates, one array per axis."""
        return tuple(self._broadcast(self.x, a) for a in self.x_axes) + tuple(
            self._broadcast(self.y, a) for a in self.y_axes
        )

    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Broadcastable frequency tables, one array per axis (xi..., k...)."""
        return tuple(self._broadcast(self.xi, a) for a in self.x_axes) + tuple(
            self._broadcast(self.k, a) for a in self.y_axes
        )

    @cached_property
    def xi2(self) -> np.ndarray:
        """|xi|^2 broadcast to the full grid shape."""
        out = np.zeros(self.shape)
        for a in self.x_axes:
            out = out + self._broadcast(self.xi, a) ** 2
        return out

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 broadcast to the full grid shape."""
        out = np.zeros(self.shape)
        for a in self.y_axes:
            out = out + self._broadcast(self.k, a) ** 2
        return out

    @cached_property
    def h2_weight(self) -> np.ndarray:
        """Fourier weight (1 + |xi|^2 + |k|^2)^2 of the H^2 norm."""
        return (1.0 + self.xi2 + self.k2) ** 2

    def fft(self, values: np.ndarray) -> np.ndarray:
        return sfft.fftn(values)

    def ifft(self, values_hat: np.ndarray) -> np.ndarray:
        return sfft.ifftn(values_hat)

    def hat_inner_weight(self) -> float:
        """Factor turning sum(|u_hat|^2) into the integral of |u|^2."""
        return self.cell_volume / self.size

    def euclidean(self) -> "Grid":
        """The R^d factor of this grid (same x-axes, no torus)."""
        return Grid(self.d, 0, self.L, self.N_x, self.N_y)

    def to_dict(self) -> dict:
        return {"d": self.d, "n": self.n, "L": self.L, "N_x": self.N_x, "N_y": self.N_y}


def make_grid(
    d: int = 1,
    n: int = 1,
    L: float = 16 * np.pi,
    N_x: int = 512,
    N_y: int = 64,
    max_dim: int = MAX_TOTAL_DIM,
) -> Grid:
    """Build a validated :class:`Grid`.

    ``n = 0`` is accepted for Euclidean grids; otherwise ``d >= 1``,
    ``n >= 1`` and ``d + n <= max_dim``.
    """
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    if int(n) != n or n < 0:
        raise ValueError(f"n must be a non-negative integer, got {n!r}")
    if d + n > max_dim:
        raise ValueError(f"d + n = {d + n} exceeds the dimension guard {max_dim}")
    if not L > 0:
        raise ValueError(f"L must be positive, got {L!r}")
    if not (_is_pow2(int(N_x)) and N_x >= 8 and int(N_x) == N_x):
        raise ValueError(f"N_x must be a power of two >= 8, got {N_x!r}")
    if n > 0 and not (_is_pow2(int(N_y)) and N_y >= 8 and int(N_y) == N_y):
        raise ValueError(f"N_y must be a power of two >= 8, got {N_y!r}")
    return Grid(int(d), int(n), float(L), int(N_x), int(N_y))


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a function on a :class:`Grid` (read-only)."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128, copy=True)
        if vals.size != self.grid.size:
            raise ValueError(
                f"sample count {vals.size} does not match grid size {self.grid.size}"
            )
        vals = vals.reshape(self.grid.shape)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite samples")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> "Field":
        """Sample ``func(*coords)`` on the grid (coords broadcast per axis)."""
        vals = np.broadcast_to(func(*grid.coords()), grid.shape)
        return cls(grid, vals)

    def hat(self) -> np.ndarray:
        return self.grid.fft(self.values)

    def __mul__(self, s):
        return Field(self.grid, self.values * s)

    __rmul__ = __mul__

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def roll(self, shift: int, axis: int) -> "Field":
        return Field(self.grid, np.roll(self.values, shift, axis=axis))


Symbol = Union[np.ndarray, Callable[..., np.ndarray]]


def apply_symbol(u: Field, symbol: Symbol) -> Field:
    """Apply a Fourier multiplier.

    ``symbol`` is either an array broadcastable to the grid shape (in FFT
    ordering) or a callable ``symbol(*wavenumbers)`` receiving one
    broadcastable frequency table per axis (x-axes first, then y-axes).
    """
    g = u.grid
    mult = symbol(*g.wavenumbers()) if callable(symbol) else np.asarray(symbol)
    return Field(g, g.ifft(mult * u.hat()))


@dataclass(frozen=True)
class DiffNorms:
    lap_x_sq: float
    lap_y_sq: float
    lap_xy_sq: float
    grad_x_sq: float
    grad_y_sq: float
    mixed_sq: float


def _diff_norms_hat(grid: Grid, uh: np.ndarray) -> DiffNorms:
    w = grid.hat_inner_weight()
    p = np.abs(uh) ** 2
    xi2, k2 = grid.xi2, grid.k2
    gx = w * float(np.sum(xi2 * p))
    gy = w * float(np.sum(k2 * p))
    lx = w * float(np.sum(xi2**2 * p))
    ly = w * float(np.sum(k2**2 * p))
    mix = w * float(np.sum(xi2 * k2 * p))
    lxy = w * float(np.sum((xi2 + k2) ** 2 * p))
    return DiffNorms(lx, ly, lxy, gx, gy, mix)


def diff_norms(u: Field) -> DiffNorms:
    """Squared L^2 norms of the Laplacian/gradient pieces, via Parseval."""
    return _diff_norms_hat(u.grid, u.hat())


def lp_norm(u: Field, p: float) -> float:
    """Grid-quadrature L^p norm ``(sum |u|^p * cellvol)^(1/p)``."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return float(np.sum(np.abs(u.values) ** p) * u.grid.cell_volume) ** (1.0 / p)


def l2_sq(u: Field) -> float:
    return float(np.sum(np.abs(u.values) ** 2) * u.grid.cell_volume)


def h2_norm(u: Field) -> float:
    """Fourier H^2 norm ``||(1 - Delta) u||_2``."""
    g = u.grid
    return float(np.sqrt(g.hat_inner_weight() * np.sum(g.h2_weight * np.abs(u.hat()) ** 2)))
