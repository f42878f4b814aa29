"""Truncated periodic box, grid quadrature and spectral differential operators"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np
from scipy.fft import fftn, ifftn

from config.settings import SBP_THREADS
from services.errors import (
    GridMismatchError, InvalidParameterError, NegativePotentialError, NonFiniteFieldError
)

logger = logging.getLogger(__name__)

MIN_POINTS = 8
MAX_POINTS = 256


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [-L, L)^3 with N nodes per axis"""

    half_length: float
    points_per_axis: int

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.points_per_axis

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @property
    def volume(self) -> float:
        return (2.0 * self.half_length) ** 3

    @property
    def shape(self) -> tuple:
        n = self.points_per_axis
        return (n, n, n)

    @cached_property
    def coordinates(self) -> np.ndarray:
        # h * (j - N/2) keeps x_{N-j} = -x_j exact
        n = self.points_per_axis
        return self.spacing * (np.arange(n) - n // 2)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular frequencies k_j = pi j / L in FFT order"""
        n = self.points_per_axis
        return (np.pi / self.half_length) * np.fft.fftfreq(n, d=1.0 / n)

    @cached_property
    def k_squared(self) -> np.ndarray:
        k = self.wavenumbers
        return k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2

    @cached_property
    def radius_squared(self) -> np.ndarray:
        x = self.coordinates
        return x[:, None, None] ** 2 + x[None, :, None] ** 2 + x[None, None, :] ** 2

    def mesh(self):
        return np.meshgrid(self.coordinates, self.coordinates, self.coordinates, indexing='ij')


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real function sampled on the nodes of a Grid"""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteFieldError("field contains NaN or Inf values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable) -> "ScalarField":
        """Sample func(x, y, z) on the grid nodes"""
        return cls(grid, func(*grid.mesh()))

    def _check_same_grid(self, other: "ScalarField"):
        if self.grid != other.grid:
            raise GridMismatchError(f"fields live on different grids: {self.grid} vs {other.grid}")

    def _operand(self, other):
        if isinstance(other, ScalarField):
            self._check_same_grid(other)
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._operand(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._operand(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return ScalarField(self.grid, self.values / scalar)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def map(self, func: Callable) -> "ScalarField":
        """Apply a nodewise function"""
        return ScalarField(self.grid, func(self.values))

    def shifted(self, shift) -> "ScalarField":
        """Translate by a lattice vector on the discrete torus"""
        return ScalarField(self.grid, np.roll(self.values, shift, axis=(0, 1, 2)))

    def reflected(self) -> "ScalarField":
        """Point reflection x -> -x on the discrete torus"""
        values = self.values
        for axis in range(3):
            values = np.roll(np.flip(values, axis=axis), 1, axis=axis)
        return ScalarField(self.grid, values)

    @property
    def min(self) -> float:
        return float(self.values.min())

    @property
    def max(self) -> float:
        return float(self.values.max())


def make_grid(L: float, N: int) -> Grid:
    """Build a grid after validating the box half-length and node count"""
    if not np.isfinite(L) or L <= 0:
        raise InvalidParameterError(f"half-length L must be positive, got {L}")
    if int(N) != N or N % 2 != 0:
        raise InvalidParameterError(f"points per axis N must be even, got {N}")
    if not MIN_POINTS <= N <= MAX_POINTS:
        raise InvalidParameterError(f"points per axis N must lie in [{MIN_POINTS}, {MAX_POINTS}], got {N}")
    grid = Grid(float(L), int(N))
    logger.debug(f"Grid created: L={grid.half_length}, N={grid.points_per_axis}, h={grid.spacing}")
    return grid


def forward(f: ScalarField) -> np.ndarray:
    return fftn(f.values, workers=SBP_THREADS)


def inverse(grid: Grid, coefficients: np.ndarray) -> ScalarField:
    return ScalarField(grid, ifftn(coefficients, workers=SBP_THREADS).real)


def band_limited_noise(grid: Grid, rng: np.random.Generator, cutoff: float = None) -> np.ndarray:
    """White noise with every mode above |k| = cutoff removed; default cutoff is N pi / (2L)"""
    if cutoff is None:
        cutoff = grid.points_per_axis * np.pi / (2.0 * grid.half_length)
    coefficients = fftn(rng.standard_normal(grid.shape), workers=SBP_THREADS)
    coefficients[grid.k_squared > cutoff ** 2] = 0.0
    return ifftn(coefficients, workers=SBP_THREADS).real


def integrate(f: ScalarField) -> float:
    """Rectangle rule: sum of nodal values times h^3"""
    return float(np.sum(f.values) * f.grid.cell_volume)


def inner(f: ScalarField, g: ScalarField) -> float:
    """L2 pairing of two fields on the same grid"""
    f._check_same_grid(g)
    return float(np.sum(f.values * g.values) * f.grid.cell_volume)


def lp_norm(f: ScalarField, p: float) -> float:
    """Discrete L^p norm, p in [1, inf]"""
    if p == np.inf:
        return float(np.max(np.abs(f.values)))
    if not np.isfinite(p) or p < 1:
        raise InvalidParameterError(f"exponent must lie in [1, inf], got {p}")
    return float((np.sum(np.abs(f.values) ** p) * f.grid.cell_volume) ** (1.0 / p))


def potential_values(grid: Grid, V) -> np.ndarray:
    """Nodal values of a potential given as a model Potential or a ScalarField"""
    if isinstance(V, ScalarField):
        if V.grid != grid:
            raise GridMismatchError("potential field lives on a different grid")
        values = V.values
    else:
        values = V.evaluate(grid)
    if np.any(values < 0):
        raise NegativePotentialError(f"potential is negative at {int(np.sum(values < 0))} node(s)")
    return values


def gradient_energy(u: ScalarField) -> float:
    """Spectral Dirichlet energy: integral of |grad u|^2 via Parseval"""
    coefficients = forward(u)
    n_total = u.values.size
    return float(np.sum(u.grid.k_squared * np.abs(coefficients) ** 2) * u.grid.cell_volume / n_total)


def h1v_norm_sq(u: ScalarField, V: Union["ScalarField", object]) -> float:
    """Squared H^1_V norm: integral of |grad u|^2 + V u^2"""
    v_values = potential_values(u.grid, V)
    return gradient_energy(u) + float(np.sum(v_values * u.values ** 2) * u.grid.cell_volume)


def spectral_laplacian(u: ScalarField) -> ScalarField:
    """Negative Laplacian -Delta u, i.e. the inverse transform of |k|^2 u_hat"""
    return inverse(u.grid, u.grid.k_squared * forward(u))
