"""Bopp-Podolsky potential via free-space convolution with the closed-form kernel"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from scipy import integrate as quadrature
from scipy.fft import irfftn, rfftn

from config.settings import SBP_THREADS
from services.errors import InvalidParameterError
from services.grid import Grid, ScalarField, integrate

logger = logging.getLogger(__name__)

# Below this r/a the kernel slope is evaluated from its Taylor series
_SERIES_CUTOFF = 1e-3
_QUAD_OPTIONS = {"epsabs": 0.0, "epsrel": 1e-12, "limit": 400}


def _check_length(name: str, value: float):
    if not np.isfinite(value) or value <= 0:
        raise InvalidParameterError(f"{name} must be positive, got {value}")


def kernel_K(r, a: float):
    """(1 - exp(-r/a)) / r with the removable value 1/a at r = 0"""
    _check_length("Bopp-Podolsky parameter a", a)
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise InvalidParameterError("radius must be finite and nonnegative")
    safe = np.where(r > 0, r, 1.0)
    values = np.where(r > 0, -np.expm1(-safe / a) / safe, 1.0 / a)
    return float(values) if values.ndim == 0 else values


def coulomb_kernel(r):
    """Coulomb kernel 1/r"""
    return 1.0 / np.asarray(r, dtype=np.float64)


def kernel_slope(r, a: float):
    """Radial derivative K'(r)"""
    r = np.asarray(r, dtype=np.float64)
    x = r / a
    # a^2 K'(r) = (x e^{-x} - (1 - e^{-x})) / x^2
    direct = (x * np.exp(-x) + np.expm1(-x)) / np.where(x > 0, x, 1.0) ** 2
    series = -0.5 + x / 3.0 - x ** 2 / 8.0 + x ** 3 / 30.0
    return np.where(x < _SERIES_CUTOFF, series, direct) / a ** 2


def kernel_laplacian(r, a: float):
    """Delta K for r > 0; the delta masses of 1/r and e^{-r/a}/r cancel"""
    r = np.asarray(r, dtype=np.float64)
    return -np.exp(-r / a) / (a ** 2 * r)


@dataclass(frozen=True, eq=False)
class BPKernel:
    """Kernel sampled on the zero-padded 2N grid, with its real transform"""

    a: float
    grid: Grid
    samples: np.ndarray
    transform: np.ndarray

    @property
    def padded_shape(self) -> tuple:
        return tuple(2 * n for n in self.grid.shape)


@dataclass(frozen=True)
class CoulombKernel:
    epsilon: float

    def __post_init__(self):
        _check_length("truncation radius", self.epsilon)

    def __call__(self, r):
        return coulomb_kernel(np.maximum(np.asarray(r, dtype=np.float64), self.epsilon))


@lru_cache(maxsize=16)
def build_kernel(grid: Grid, a: float) -> BPKernel:
    """Sample K at node-offset distances for offsets -(N-1)..(N-1), wrapped onto 2N"""
    _check_length("Bopp-Podolsky parameter a", a)
    n = grid.points_per_axis
    offsets = np.arange(2 * n)
    offsets = np.where(offsets < n, offsets, offsets - 2 * n) * grid.spacing
    r = np.sqrt(offsets[:, None, None] ** 2 + offsets[None, :, None] ** 2 + offsets[None, None, :] ** 2)
    samples = kernel_K(r, a)
    samples.flags.writeable = False
    transform = rfftn(samples, workers=SBP_THREADS)
    logger.debug(f"Built Bopp-Podolsky kernel for a={a} on padded grid {samples.shape}")
    return BPKernel(a=a, grid=grid, samples=samples, transform=transform)


def convolve(kernel: BPKernel, density: np.ndarray) -> np.ndarray:
    """Free-space sum_y K(|x-y|) density(y) h^3 over the box nodes"""
    n = kernel.grid.points_per_axis
    padded = rfftn(density, s=kernel.padded_shape, workers=SBP_THREADS)
    full = irfftn(padded * kernel.transform, s=kernel.padded_shape, workers=SBP_THREADS)
    return full[:n, :n, :n] * kernel.grid.cell_volume


def solve_phi(u: ScalarField, a: float) -> ScalarField:
    """phi_u = K * u^2, solving -Delta phi + a^2 Delta^2 phi = 4 pi u^2"""
    kernel = build_kernel(u.grid, float(a))
    return ScalarField(u.grid, convolve(kernel, u.values ** 2))


def coupling(u: ScalarField, phi: ScalarField) -> float:
    """Integral of phi u^2"""
    return integrate(phi * (u * u))


def bilinear_coupling(u: ScalarField, v: ScalarField, a: float) -> float:
    """B(u, v) = integral of (K * u^2) v^2"""
    u._check_same_grid(v)
    return coupling(v, solve_phi(u, a))


def _radial_integral(integrand, lower: float, upper: float) -> float:
    # s = ln r resolves the r^-2 behaviour uniformly across decades
    value, _ = quadrature.quad(
        lambda s: integrand(np.exp(s)) * np.exp(s), np.log(lower), np.log(upper), **_QUAD_OPTIONS)
    return float(value)


def _maxwell_density(r):
    # (1/2) |grad G|^2 * 4 pi r^2 with |grad G| = r^-2
    return 2.0 * np.pi / r ** 2


def _bp_density(r, a: float):
    return 2.0 * np.pi * r ** 2 * (kernel_slope(r, a) ** 2 + a ** 2 * kernel_laplacian(r, a) ** 2)


def kernel_energies(a: float, eps: float, r_max: float) -> Tuple[float, float]:
    """Truncated Maxwell energy of 1/r and Bopp-Podolsky energy of K over eps < r < r_max"""
    _check_length("Bopp-Podolsky parameter a", a)
    _check_length("inner radius", eps)
    if not np.isfinite(r_max) or r_max <= eps:
        raise InvalidParameterError(f"outer radius must exceed the inner radius, got {r_max} <= {eps}")
    maxwell = _radial_integral(_maxwell_density, eps, r_max)
    bp = _radial_integral(lambda r: _bp_density(r, a), eps, r_max)
    return maxwell, bp


@dataclass
class KernelEnergyRow:
    epsilon: float
    maxwell_truncated: float
    bp_truncated: float
    bp_increment: float

    def to_row(self) -> list:
        return [self.epsilon, self.maxwell_truncated, self.bp_truncated, self.bp_increment]


def kernel_energy_schedule(a: float, eps0: float, r_max: float, levels: int,
                           factor: float = 2.0) -> List[KernelEnergyRow]:
    """Truncated energies for eps0, eps0/factor, ...; increments integrated over each shell"""
    if levels < 1:
        raise InvalidParameterError(f"levels must be at least 1, got {levels}")
    if not factor > 1:
        raise InvalidParameterError(f"factor must exceed 1, got {factor}")
    rows = []
    eps = eps0
    for level in range(levels):
        maxwell, bp = kernel_energies(a, eps, r_max)
        increment = 0.0 if level == 0 else _radial_integral(lambda r: _bp_density(r, a), eps, eps * factor)
        rows.append(KernelEnergyRow(eps, maxwell, bp, increment))
        logger.debug(f"Kernel energies at eps={eps:.3e}: maxwell={maxwell:.6e}, bp={bp:.6e}")
        eps /= factor
    return rows
