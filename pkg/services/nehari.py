"""Nehari projection along fibers and the two-parameter nodal projection"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from services.bp_field import coupling, solve_phi
from services.energy import EnergyBreakdown
from services.errors import BracketError, DegenerateSignPartError, InvalidParameterError, ZeroFieldError
from services.grid import ScalarField, h1v_norm_sq, inner, spectral_laplacian
from services.model import ModelParams, Nonlinearity

logger = logging.getLogger(__name__)

PROJECTION_TOL = 1e-10
BRACKET_FACTOR = 2.0
MAX_BRACKET_STEPS = 60
BISECTION_WIDTH = 1e-3
MAX_NEWTON_STEPS = 60
ZERO_FIELD_GUARD = 1e-12
SIGN_PART_THRESHOLD = 1e-10
EDGE_SAMPLES = 9
UNIMODAL_GAP = 1e-6

_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class Fiber:
    """Quartic decomposition of h_u(t) = J(tu): only the nonlinear integral depends on the field per t"""

    norm_sq: float
    coupling: float
    q: float
    nonlinearity: Nonlinearity
    nodes: np.ndarray
    cell_volume: float

    @classmethod
    def from_field(cls, u: ScalarField, m: ModelParams) -> "Fiber":
        norm_sq = h1v_norm_sq(u, m.potential)
        if np.sqrt(norm_sq) <= ZERO_FIELD_GUARD:
            raise ZeroFieldError("cannot project a zero field onto the Nehari manifold")
        phi = solve_phi(u, m.a)
        nodes = u.values[u.values != 0]
        return cls(norm_sq, coupling(u, phi), m.q, m.nonlinearity, nodes, u.grid.cell_volume)

    def _tu(self, t: float) -> np.ndarray:
        return t * self.nodes

    def nonlinear(self, t: float) -> float:
        """Integral of F(tu)"""
        return float(np.sum(self.nonlinearity.F(self._tu(t))) * self.cell_volume)

    def nonlinear_pairing(self, t: float) -> float:
        """Integral of f(tu) u"""
        return float(np.sum(self.nonlinearity.f(self._tu(t)) * self.nodes) * self.cell_volume)

    def h(self, t: float) -> float:
        return 0.5 * t ** 2 * self.norm_sq + 0.25 * self.q ** 2 * t ** 4 * self.coupling - self.nonlinear(t)

    def dh(self, t: float) -> float:
        return t * self.norm_sq + self.q ** 2 * t ** 3 * self.coupling - self.nonlinear_pairing(t)

    def d2h(self, t: float) -> float:
        second = np.sum(self.nonlinearity.fprime(self._tu(t)) * self.nodes ** 2) * self.cell_volume
        return self.norm_sq + 3.0 * self.q ** 2 * t ** 2 * self.coupling - float(second)

    def scale(self, t: float) -> float:
        absolute = np.sum(np.abs(self.nonlinearity.f(self._tu(t)) * self.nodes)) * self.cell_volume
        return t * self.norm_sq + float(absolute)

    def breakdown(self, t: float) -> EnergyBreakdown:
        return EnergyBreakdown(
            kinetic_potential=0.5 * t ** 2 * self.norm_sq,
            nonlocal_energy=0.25 * self.q ** 2 * t ** 4 * self.coupling,
            nonlinear=self.nonlinear(t),
        )


@dataclass
class FiberingDiagnostics:
    t_star: float
    bracket: Tuple[float, float]
    iterations: int
    residual: float
    sign_samples: List[Tuple[float, int]] = field(default_factory=list)

    @property
    def unimodal(self) -> bool:
        """h' > 0 before t_star and h' < 0 after it on the sampled points"""
        return all((sign > 0) if t < self.t_star else (sign < 0)
                   for t, sign in self.sign_samples if t != self.t_star)

    def to_dict(self) -> dict:
        return {
            "t_u": self.t_star,
            "bracket": list(self.bracket),
            "iterations": self.iterations,
            "residual": self.residual,
        }


def fibering(u: ScalarField, t: float, m: ModelParams) -> Tuple[float, float]:
    """(h_u(t), h_u'(t))"""
    if not t > 0:
        raise InvalidParameterError(f"fiber parameter must be positive, got {t}")
    fiber = Fiber.from_field(u, m)
    return fiber.h(t), fiber.dh(t)


def _bracket_root(dh, start: float = 1.0) -> Tuple[float, float, int]:
    """Expand from start until dh changes sign; h' > 0 below the root"""
    steps = 0
    if dh(start) > 0:
        lo, hi = start, start * BRACKET_FACTOR
        while dh(hi) > 0:
            steps += 1
            if steps > MAX_BRACKET_STEPS:
                raise BracketError(
                    f"h' stayed positive after {MAX_BRACKET_STEPS} doublings; the nonlinearity may violate (f3)")
            lo, hi = hi, hi * BRACKET_FACTOR
    else:
        lo, hi = start / BRACKET_FACTOR, start
        while dh(lo) <= 0:
            steps += 1
            if steps > MAX_BRACKET_STEPS:
                raise BracketError(
                    f"h' stayed nonpositive after {MAX_BRACKET_STEPS} halvings; the nonlinearity may violate (f1)")
            lo, hi = lo / BRACKET_FACTOR, lo
    if steps > MAX_BRACKET_STEPS // 2:
        logger.warning(f"Fiber bracket needed {steps} expansions: [{lo:.3e}, {hi:.3e}]")
    return lo, hi, steps


def solve_fiber(fiber: Fiber, tol: float = PROJECTION_TOL) -> FiberingDiagnostics:
    """Root of h' by bracketing, bisection to relative width 1e-3 and safeguarded Newton"""
    lo, hi, iterations = _bracket_root(fiber.dh)
    bracket = (lo, hi)
    while hi - lo > BISECTION_WIDTH * lo:
        iterations += 1
        mid = 0.5 * (lo + hi)
        if fiber.dh(mid) > 0:
            lo = mid
        else:
            hi = mid

    t = 0.5 * (lo + hi)
    residual = fiber.dh(t)
    for _ in range(MAX_NEWTON_STEPS + 1):
        if abs(residual) <= tol * fiber.scale(t) or hi - lo <= 4 * _EPS * t:
            break
        iterations += 1
        if residual > 0:
            lo = t
        else:
            hi = t
        slope = fiber.d2h(t)
        candidate = t - residual / slope if slope != 0 else np.nan
        if not lo < candidate < hi:
            candidate = 0.5 * (lo + hi)
        t = candidate
        residual = fiber.dh(t)
    else:
        raise BracketError(f"Newton polish did not reach tolerance {tol} (residual {residual:.3e})")
    return FiberingDiagnostics(t, bracket, iterations, abs(residual) / fiber.scale(t))


def sample_fiber_signs(fiber: Fiber, t_star: float, samples: int, span: float = 1e3) -> List[Tuple[float, int]]:
    grid = np.geomspace(t_star / span, t_star * span, samples)
    # points within round-off of the root carry no sign information
    grid = grid[np.abs(grid - t_star) > UNIMODAL_GAP * t_star]
    return [(float(t), int(np.sign(fiber.dh(t)))) for t in grid]


def project_ground(u: ScalarField, m: ModelParams, tol: float = PROJECTION_TOL,
                   samples: int = 0) -> Tuple[float, ScalarField, FiberingDiagnostics]:
    """Unique t_u > 0 with t_u u on the Nehari manifold"""
    fiber = Fiber.from_field(u, m)
    diag = solve_fiber(fiber, tol)
    if samples:
        diag.sign_samples = sample_fiber_signs(fiber, diag.t_star, samples)
    logger.debug(f"Ground projection: t_u={diag.t_star:.12g} after {diag.iterations} iterations")
    return diag.t_star, diag.t_star * u, diag


def sign_split(w: ScalarField) -> Tuple[ScalarField, ScalarField]:
    """(max(w, 0), min(w, 0)) nodewise"""
    return w.map(lambda v: np.maximum(v, 0.0)), w.map(lambda v: np.minimum(v, 0.0))


@dataclass(frozen=True, eq=False)
class NodalCoefficients:
    """Quadratic and quartic form values of the sign parts feeding the reduced 2D system"""

    Aplus: float
    Aminus: float
    Apm: float
    Bpp: float
    Bmm: float
    Bpm: float
    Bmp: float
    q: float
    nonlinearity: Nonlinearity
    plus_nodes: np.ndarray
    minus_nodes: np.ndarray
    cell_volume: float

    @property
    def Bcross(self) -> float:
        return 0.5 * (self.Bpm + self.Bmp)

    def _pairing(self, nodes: np.ndarray, tau) -> np.ndarray:
        # integral of f(tau w) tau w for scalar or array tau
        scaled = np.multiply.outer(np.atleast_1d(tau), nodes)
        return np.sum(self.nonlinearity.f(scaled) * scaled, axis=-1) * self.cell_volume

    def _primitive(self, nodes: np.ndarray, tau) -> np.ndarray:
        scaled = np.multiply.outer(np.atleast_1d(tau), nodes)
        return np.sum(self.nonlinearity.F(scaled), axis=-1) * self.cell_volume

    def _pairing_slope(self, nodes: np.ndarray, tau: float) -> float:
        scaled = tau * nodes
        values = self.nonlinearity.fprime(scaled) * scaled * nodes + self.nonlinearity.f(scaled) * nodes
        return float(np.sum(values) * self.cell_volume)

    def nonlinear_plus(self, t):
        return _squeeze(self._pairing(self.plus_nodes, t), t)

    def nonlinear_minus(self, s):
        return _squeeze(self._pairing(self.minus_nodes, s), s)

    def scales(self, t: float, s: float) -> Tuple[float, float]:
        plus = np.sum(np.abs(self.nonlinearity.f(t * self.plus_nodes) * t * self.plus_nodes)) * self.cell_volume
        minus = np.sum(np.abs(self.nonlinearity.f(s * self.minus_nodes) * s * self.minus_nodes)) * self.cell_volume
        return t ** 2 * self.Aplus + float(plus), s ** 2 * self.Aminus + float(minus)

    def to_dict(self) -> dict:
        return {
            "Aplus": self.Aplus, "Aminus": self.Aminus, "Apm": self.Apm,
            "Bpp": self.Bpp, "Bmm": self.Bmm, "Bpm": self.Bpm, "Bmp": self.Bmp,
        }


def _squeeze(values: np.ndarray, like):
    return float(values[0]) if np.ndim(like) == 0 else values


def nodal_coefficients(wplus: ScalarField, wminus: ScalarField, m: ModelParams) -> NodalCoefficients:
    phi_plus = solve_phi(wplus, m.a)
    phi_minus = solve_phi(wminus, m.a)
    # Nodewise disjoint supports: V-cross term vanishes, the spectral kinetic cross term does not
    cross = inner(spectral_laplacian(wplus), wminus)
    return NodalCoefficients(
        Aplus=h1v_norm_sq(wplus, m.potential),
        Aminus=h1v_norm_sq(wminus, m.potential),
        Apm=cross,
        Bpp=coupling(wplus, phi_plus),
        Bmm=coupling(wminus, phi_minus),
        Bpm=coupling(wminus, phi_plus),
        Bmp=coupling(wplus, phi_minus),
        q=m.q,
        nonlinearity=m.nonlinearity,
        plus_nodes=wplus.values[wplus.values != 0],
        minus_nodes=wminus.values[wminus.values != 0],
        cell_volume=wplus.grid.cell_volume,
    )


def xi(coeffs: NodalCoefficients, t, s):
    """(<J'(tw+ + sw-), tw+>, <J'(tw+ + sw-), sw->)"""
    c = coeffs
    q2 = c.q ** 2
    xi1 = t ** 2 * c.Aplus + t * s * c.Apm + q2 * (t ** 4 * c.Bpp + t ** 2 * s ** 2 * c.Bcross) - c.nonlinear_plus(t)
    xi2 = s ** 2 * c.Aminus + t * s * c.Apm + q2 * (s ** 4 * c.Bmm + t ** 2 * s ** 2 * c.Bcross) - c.nonlinear_minus(s)
    return xi1, xi2


def nodal_breakdown(coeffs: NodalCoefficients, t: float, s: float) -> EnergyBreakdown:
    c = coeffs
    return EnergyBreakdown(
        kinetic_potential=0.5 * (t ** 2 * c.Aplus + 2.0 * t * s * c.Apm + s ** 2 * c.Aminus),
        nonlocal_energy=0.25 * c.q ** 2 * (t ** 4 * c.Bpp + 2.0 * t ** 2 * s ** 2 * c.Bcross + s ** 4 * c.Bmm),
        nonlinear=float(c._primitive(c.plus_nodes, t)[0] + c._primitive(c.minus_nodes, s)[0]),
    )


def nodal_energy(coeffs: NodalCoefficients, t: float, s: float) -> float:
    """mu_w(t, s) = J(tw+ + sw-) from the coefficients"""
    return nodal_breakdown(coeffs, t, s).total


def _jacobian(c: NodalCoefficients, t: float, s: float) -> np.ndarray:
    q2 = c.q ** 2
    return np.array([
        [2 * t * c.Aplus + s * c.Apm + q2 * (4 * t ** 3 * c.Bpp + 2 * t * s ** 2 * c.Bcross)
         - c._pairing_slope(c.plus_nodes, t),
         t * c.Apm + 2 * q2 * t ** 2 * s * c.Bcross],
        [s * c.Apm + 2 * q2 * t * s ** 2 * c.Bcross,
         2 * s * c.Aminus + t * c.Apm + q2 * (4 * s ** 3 * c.Bmm + 2 * t ** 2 * s * c.Bcross)
         - c._pairing_slope(c.minus_nodes, s)],
    ])


def _scaled_residual(c: NodalCoefficients, t: float, s: float) -> float:
    xi1, xi2 = xi(c, t, s)
    scale1, scale2 = c.scales(t, s)
    return max(abs(xi1) / scale1, abs(xi2) / scale2)


def _edges_ok(c: NodalCoefficients, lo: float, hi: float) -> Tuple[bool, bool]:
    """Miranda sign conditions: xi positive on the lower edges, negative on the upper edges"""
    edge = np.linspace(lo, hi, EDGE_SAMPLES)
    lower = all(xi(c, lo, v)[0] > 0 and xi(c, v, lo)[1] > 0 for v in edge)
    upper = all(xi(c, hi, v)[0] < 0 and xi(c, v, hi)[1] < 0 for v in edge)
    return lower, upper


def miranda_box(c: NodalCoefficients) -> Tuple[float, float]:
    lo = hi = 1.0
    for _ in range(2 * MAX_BRACKET_STEPS):
        lower, upper = _edges_ok(c, lo, hi)
        if lower and upper:
            return lo, hi
        if not lower:
            lo /= BRACKET_FACTOR
        if not upper:
            hi *= BRACKET_FACTOR
    raise BracketError("no Miranda box found for the nodal projection")


def _coordinate_sweep(c: NodalCoefficients, t: float, s: float, lo: float, hi: float) -> Tuple[float, float]:
    t = brentq(lambda v: xi(c, v, s)[0], lo, hi, xtol=1e-15, rtol=4 * _EPS)
    s = brentq(lambda v: xi(c, t, v)[1], lo, hi, xtol=1e-15, rtol=4 * _EPS)
    return t, s


def solve_nodal_system(c: NodalCoefficients, tol: float = PROJECTION_TOL) -> Tuple[float, float, int]:
    """Damped Newton on xi(t, s) = 0 inside the Miranda box, with coordinate bisection fallback"""
    lo, hi = miranda_box(c)
    t = s = min(max(1.0, lo), hi)
    for iteration in range(1, 4 * MAX_NEWTON_STEPS + 1):
        merit = _scaled_residual(c, t, s)
        if merit <= tol:
            return t, s, iteration - 1
        step = None
        try:
            step = np.linalg.solve(_jacobian(c, t, s), np.array(xi(c, t, s)))
        except np.linalg.LinAlgError:
            logger.debug("Singular nodal Jacobian, falling back to coordinate bisection")
        accepted = False
        damping = 1.0
        while step is not None and damping > 1e-6:
            tn, sn = t - damping * step[0], s - damping * step[1]
            if lo <= tn <= hi and lo <= sn <= hi and _scaled_residual(c, tn, sn) < merit:
                t, s = tn, sn
                accepted = True
                break
            damping *= 0.5
        if not accepted:
            t, s = _coordinate_sweep(c, t, s, lo, hi)
    raise BracketError(f"nodal projection did not reach tolerance {tol}")


def project_nodal(w: ScalarField, m: ModelParams, tol: float = PROJECTION_TOL
                  ) -> Tuple[float, float, ScalarField, NodalCoefficients]:
    """Unique (t, s) with t w+ + s w- in the nodal set"""
    wplus, wminus = sign_split(w)
    for name, part in (("positive", wplus), ("negative", wminus)):
        norm = np.sqrt(h1v_norm_sq(part, m.potential))
        if norm < SIGN_PART_THRESHOLD:
            raise DegenerateSignPartError(f"{name} part has norm {norm:.3e} below {SIGN_PART_THRESHOLD}")
    coeffs = nodal_coefficients(wplus, wminus, m)
    t, s, iterations = solve_nodal_system(coeffs, tol)
    logger.debug(f"Nodal projection: t={t:.12g}, s={s:.12g} after {iterations} iterations")
    return t, s, t * wplus + s * wminus, coeffs
