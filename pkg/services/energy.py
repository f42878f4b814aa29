"""Energy functional J, its gradient field and the Nehari residual"""
import logging
from dataclasses import dataclass

from services.bp_field import coupling, solve_phi
from services.grid import ScalarField, h1v_norm_sq, integrate, potential_values, spectral_laplacian
from services.model import ModelParams

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnergyBreakdown:
    """J(u) = kinetic_potential + nonlocal - nonlinear"""

    kinetic_potential: float
    nonlocal_energy: float
    nonlinear: float

    @property
    def total(self) -> float:
        return self.kinetic_potential + self.nonlocal_energy - self.nonlinear

    def to_dict(self) -> dict:
        return {
            "kinetic_potential": self.kinetic_potential,
            "nonlocal": self.nonlocal_energy,
            "nonlinear": self.nonlinear,
            "total": self.total,
        }


def _check_model(m):
    if not isinstance(m, ModelParams):
        raise TypeError(f"expected ModelParams, got {type(m).__name__}")


def evaluate_J(u: ScalarField, m: ModelParams) -> EnergyBreakdown:
    _check_model(m)
    phi = solve_phi(u, m.a)
    return EnergyBreakdown(
        kinetic_potential=0.5 * h1v_norm_sq(u, m.potential),
        nonlocal_energy=0.25 * m.q ** 2 * coupling(u, phi),
        nonlinear=integrate(u.map(m.nonlinearity.F)),
    )


def evaluate_grad(u: ScalarField, m: ModelParams) -> ScalarField:
    """Strong-form gradient -Delta u + V u + q^2 phi_u u - f(u)"""
    _check_model(m)
    phi = solve_phi(u, m.a)
    v_values = potential_values(u.grid, m.potential)
    local = v_values * u.values + m.q ** 2 * phi.values * u.values - m.nonlinearity.f(u.values)
    return spectral_laplacian(u) + local


def nehari_residual(u: ScalarField, m: ModelParams) -> float:
    """<J'(u), u> = ||u||^2 + q^2 int phi_u u^2 - int f(u) u"""
    _check_model(m)
    phi = solve_phi(u, m.a)
    return (h1v_norm_sq(u, m.potential)
            + m.q ** 2 * coupling(u, phi)
            - integrate(u * u.map(m.nonlinearity.f)))
