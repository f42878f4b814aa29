"""Invariant suite over seeded random fields and the 2 c0 < c1 level comparison"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, List, Optional

import numpy as np

from config.settings import SBP_THREADS
from services.bp_field import (
    bilinear_coupling, build_kernel, coupling, kernel_K, kernel_energies, kernel_energy_schedule, solve_phi
)
from services.energy import evaluate_grad, evaluate_J
from services.errors import (
    ConfigurationMismatchError, InvalidParameterError, SolverError
)
from services.grid import (
    Grid, ScalarField, band_limited_noise, forward, h1v_norm_sq, inner, integrate, inverse, lp_norm,
    potential_values
)
from services.minimize import SolveOptions, SolveReport, initial_field, solve_ground, solve_nodal
from services.model import ModelParams, check_hypotheses
from services.nehari import (
    Fiber, nodal_energy, project_ground, project_nodal, sample_fiber_signs, sign_split, solve_fiber, xi
)

logger = logging.getLogger(__name__)

HYPOTHESIS_SAMPLES = np.geomspace(1e-4, 1e4, 81)
SCALING_FACTORS = (0.5, 2.0, 3.0)
MAX_REJECTIONS = 10
# A trial field whose L2 norm falls below this fraction of sqrt(box volume) is regenerated
REJECTION_THRESHOLD = 1e-8

FieldFactory = Callable[[Grid, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class Invariant:
    invariant_id: str
    module: str
    description: str
    tolerance: Optional[float]
    scope: str = "trial"
    # monitored quantities are reduced over trials with max or min
    reduce: str = "max"

    @property
    def monitored(self) -> bool:
        return self.tolerance is None


INVARIANTS: List[Invariant] = []
_CHECKS: Dict[str, Callable] = {}


def invariant(invariant_id: str, module: str, description: str, tolerance: Optional[float],
              scope: str = "trial", reduce: str = "max"):
    """Register a check; trial checks take a _Trial, global checks a _SuiteContext, solve checks _Solves"""
    def register(func):
        INVARIANTS.append(Invariant(invariant_id, module, description, tolerance, scope, reduce))
        _CHECKS[invariant_id] = func
        return func
    return register


@dataclass
class InvariantResult:
    invariant: Invariant
    trials: int
    max_violation: Optional[float]
    passed: Optional[bool]
    error: Optional[str] = None

    def to_dict(self) -> dict:
        data = {
            "invariant_id": self.invariant.invariant_id,
            "module": self.invariant.module,
            "description": self.invariant.description,
            "trials": self.trials,
            "max_violation": self.max_violation,
            "tolerance": self.invariant.tolerance,
            "monitored": self.invariant.monitored,
            "pass": self.passed,
        }
        if self.error:
            data["error"] = self.error
        return data


@dataclass
class SuiteReport:
    model: ModelParams
    grid: Grid
    seed: int
    trials: int
    rejections: int
    results: List[InvariantResult] = field(default_factory=list)
    levels: Optional["LevelComparison"] = None

    @property
    def passed(self) -> bool:
        verdicts = [r.passed for r in self.results if r.passed is not None]
        level_ok = self.levels is None or self.levels.passed
        return all(verdicts) and level_ok

    def result(self, invariant_id: str) -> InvariantResult:
        return next(r for r in self.results if r.invariant.invariant_id == invariant_id)

    @property
    def failures(self) -> List[str]:
        return [r.invariant.invariant_id for r in self.results if r.passed is False]

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "grid": {"L": self.grid.half_length, "N": self.grid.points_per_axis},
            "seed": self.seed,
            "trials": self.trials,
            "rejections": self.rejections,
            "passed": self.passed,
            "invariants": [r.to_dict() for r in self.results],
            "coverage": [inv.invariant_id for inv in INVARIANTS],
            "levels": self.levels.to_dict() if self.levels else None,
        }


@dataclass(frozen=True)
class LevelComparison:
    ground_level: float
    nodal_level: float

    @property
    def margin(self) -> float:
        """(c1 - 2 c0) / c0"""
        return (self.nodal_level - 2.0 * self.ground_level) / self.ground_level

    @property
    def passed(self) -> bool:
        return self.ground_level > 0 and self.nodal_level > 2.0 * self.ground_level

    def to_dict(self) -> dict:
        return {"c0": self.ground_level, "c1": self.nodal_level, "margin": self.margin, "pass": self.passed}


def compare_levels(ground: SolveReport, nodal: SolveReport) -> LevelComparison:
    """Check c1 > 2 c0 for two converged solves of the same model on the same grid"""
    if ground.grid != nodal.grid:
        raise ConfigurationMismatchError(f"reports use different grids: {ground.grid} vs {nodal.grid}")
    if ground.model != nodal.model:
        raise ConfigurationMismatchError("reports use different model parameters")
    if not (ground.converged and nodal.converged):
        raise InvalidParameterError("both reports must come from converged solves")
    comparison = LevelComparison(ground.level, nodal.level)
    logger.info(f"Level comparison: c0={comparison.ground_level:.10g}, c1={comparison.nodal_level:.10g}, "
                f"margin={comparison.margin:.4g}, pass={comparison.passed}")
    return comparison


def energy_splitting(w: ScalarField, m: ModelParams) -> float:
    """J(t w+) + J(s w-) with t, s the separate Nehari projections of the sign parts"""
    total = 0.0
    for part in sign_split(w):
        fiber = Fiber.from_field(part, m)
        total += fiber.breakdown(solve_fiber(fiber).t_star).total
    return total


def random_field(grid: Grid, rng: np.random.Generator) -> np.ndarray:
    """Band-limited noise under a Gaussian envelope of width L/4, peak amplitude drawn from [0.5, 2]"""
    envelope = np.exp(-grid.radius_squared / (2.0 * (grid.half_length / 4.0) ** 2))
    values = band_limited_noise(grid, rng) * envelope
    peak = np.max(np.abs(values))
    if peak == 0:
        return values
    return values * rng.uniform(0.5, 2.0) / peak


def _draw(grid: Grid, rng: np.random.Generator, factory: FieldFactory):
    threshold = REJECTION_THRESHOLD * np.sqrt(grid.volume)
    for rejections in range(MAX_REJECTIONS + 1):
        candidate = ScalarField(grid, factory(grid, rng))
        if lp_norm(candidate, 2) > threshold:
            return candidate, rejections
    raise InvalidParameterError(f"field factory produced near-zero fields {MAX_REJECTIONS + 1} times")


class _Trial:
    """Random fields of one trial with lazily computed fields shared between checks"""

    def __init__(self, index: int, u: ScalarField, v: ScalarField, m: ModelParams):
        self.index = index
        self.u = u
        self.v = v
        self.m = m

    @cached_property
    def phi(self) -> ScalarField:
        return solve_phi(self.u, self.m.a)

    @cached_property
    def fiber(self) -> Fiber:
        return Fiber.from_field(self.u, self.m)

    @cached_property
    def diag(self):
        return solve_fiber(self.fiber)

    @cached_property
    def nodal(self):
        return project_nodal(self.u, self.m)


@dataclass
class _SuiteContext:
    m: ModelParams
    grid: Grid

    @cached_property
    def hypotheses(self):
        return check_hypotheses(self.m.nonlinearity, HYPOTHESIS_SAMPLES)


@dataclass
class _Solves:
    m: ModelParams
    ground: SolveReport
    nodal: SolveReport
    grad_tol: float


def _relative(diff: float, scale: float) -> float:
    return float(abs(diff) / scale) if scale > 0 else float(abs(diff))


# grid

@invariant("grid.transform_round_trip", "grid", "inverse(forward(u)) reproduces u to 1e-12 relative", 1e-12)
def _transform_round_trip(trial: _Trial) -> float:
    back = inverse(trial.u.grid, forward(trial.u))
    return _relative(np.max(np.abs(back.values - trial.u.values)), np.max(np.abs(trial.u.values)))


@invariant("grid.integrate_linear_monotone", "grid",
           "integrate is linear, and f <= g pointwise gives integrate(f) <= integrate(g)", 1e-12)
def _integrate_linear_monotone(trial: _Trial) -> float:
    u, v = trial.u, trial.v
    combined = integrate(2.0 * u - 3.0 * v)
    separate = 2.0 * integrate(u) - 3.0 * integrate(v)
    scale = integrate(u.map(np.abs)) * 2.0 + integrate(v.map(np.abs)) * 3.0
    upper = u + v.map(np.abs)
    order_gap = max(0.0, integrate(u) - integrate(upper))
    return _relative(combined - separate, scale) + _relative(order_gap, scale)


@invariant("grid.h1v_lower_bound", "grid", "||u||^2 >= min(V) ||u||_2^2", 1e-12)
def _h1v_lower_bound(trial: _Trial) -> float:
    u, m = trial.u, trial.m
    norm_sq = h1v_norm_sq(u, m.potential)
    floor = lp_norm(u, 2) ** 2 * float(np.min(potential_values(u.grid, m.potential)))
    return _relative(max(0.0, floor - norm_sq), norm_sq)


# bp_field

@invariant("bp_field.kernel_origin_value", "bp_field", "K(0) equals 1/a exactly", 0.0, scope="global")
def _kernel_origin(ctx: _SuiteContext) -> float:
    a = ctx.m.a
    return abs(kernel_K(0.0, a) - 1.0 / a) * a


@invariant("bp_field.kernel_range_monotone", "bp_field",
           "sampled kernel values lie in (0, 1/a] and K strictly decreases in r", 0.0, scope="global")
def _kernel_range(ctx: _SuiteContext) -> float:
    a = ctx.m.a
    samples = build_kernel(ctx.grid, a).samples
    radial = kernel_K(np.geomspace(1e-6, 1e3, 2000) * a, a)
    violation = max(0.0, float(np.max(samples)) - 1.0 / a) * a
    violation += float(np.sum(samples <= 0))
    violation += float(np.sum(np.diff(radial) >= 0))
    return violation


@invariant("bp_field.phi_nonnegative", "bp_field", "phi_u >= -1e-14 max(phi_u)", 1e-14)
def _phi_nonnegative(trial: _Trial) -> float:
    phi = trial.phi
    return _relative(max(0.0, -phi.min), phi.max)


@invariant("bp_field.phi_scaling", "bp_field", "phi_{tu} = t^2 phi_u for t in {0.5, 2, 3}", 1e-12)
def _phi_scaling(trial: _Trial) -> float:
    base = trial.phi.values
    worst = 0.0
    for t in SCALING_FACTORS:
        scaled = solve_phi(t * trial.u, trial.m.a).values
        worst = max(worst, _relative(np.max(np.abs(scaled - t ** 2 * base)), t ** 2 * np.max(np.abs(base))))
    return worst


@invariant("bp_field.coupling_quartic_scaling", "bp_field",
           "coupling(tu) / coupling(u) = t^4 for t in {0.5, 2, 3}", 1e-12)
def _coupling_scaling(trial: _Trial) -> float:
    base = coupling(trial.u, trial.phi)
    worst = 0.0
    for t in SCALING_FACTORS:
        tu = t * trial.u
        ratio = coupling(tu, solve_phi(tu, trial.m.a)) / base
        worst = max(worst, _relative(ratio - t ** 4, t ** 4))
    return worst


@invariant("bp_field.coupling_upper_bound", "bp_field", "integral of phi_u u^2 <= (1/a) ||u||_2^4", 1e-8)
def _coupling_bound(trial: _Trial) -> float:
    bound = lp_norm(trial.u, 2) ** 4 / trial.m.a
    return _relative(max(0.0, coupling(trial.u, trial.phi) - bound), bound)


@invariant("bp_field.bilinear_symmetry", "bp_field", "B(u, v) = B(v, u)", 1e-10)
def _bilinear_symmetry(trial: _Trial) -> float:
    forward_order = bilinear_coupling(trial.u, trial.v, trial.m.a)
    reverse_order = bilinear_coupling(trial.v, trial.u, trial.m.a)
    return _relative(forward_order - reverse_order, max(abs(forward_order), abs(reverse_order)))


@invariant("bp_field.translation_equivariance", "bp_field",
           "phi of a lattice-shifted field is the shifted phi for fields supported away from the box edge", 1e-12)
def _translation_equivariance(trial: _Trial) -> float:
    grid = trial.u.grid
    inner_box = np.all(np.abs(np.stack(grid.mesh())) <= grid.half_length / 2.0, axis=0)
    u = trial.u.map(lambda values: np.where(inner_box, values, 0.0))
    step = max(1, grid.points_per_axis // 16)
    phi = solve_phi(u, trial.m.a).values
    shifted = solve_phi(u.shifted((step, step, step)), trial.m.a).values
    diff = shifted[step:, step:, step:] - phi[:-step, :-step, :-step]
    return _relative(np.max(np.abs(diff)), np.max(np.abs(phi)))


@invariant("bp_field.disjoint_additivity", "bp_field", "phi_{w+ + w-} = phi_{w+} + phi_{w-}", 1e-12)
def _disjoint_additivity(trial: _Trial) -> float:
    wplus, wminus = sign_split(trial.u)
    parts = solve_phi(wplus, trial.m.a) + solve_phi(wminus, trial.m.a)
    return _relative(np.max(np.abs(parts.values - trial.phi.values)), trial.phi.max)


@invariant("bp_field.phi_l6_ratio", "bp_field", "monitored max of ||phi_u||_6 / ||u||^2", None)
def _phi_l6_ratio(trial: _Trial) -> float:
    return lp_norm(trial.phi, 6) / h1v_norm_sq(trial.u, trial.m.potential)


@invariant("bp_field.maxwell_divergence", "bp_field",
           "truncated Maxwell energy equals 2 pi (1/eps - 1/r_max) for eps in 1e-1..1e-4", 1e-6, scope="global")
def _maxwell_divergence(ctx: _SuiteContext) -> float:
    r_max = 100.0
    worst = 0.0
    for eps in (1e-1, 1e-2, 1e-3, 1e-4):
        maxwell, _ = kernel_energies(ctx.m.a, eps, r_max)
        exact = 2.0 * np.pi * (1.0 / eps - 1.0 / r_max)
        worst = max(worst, _relative(maxwell - exact, exact))
    return worst


@invariant("bp_field.bp_energy_finite", "bp_field",
           "Bopp-Podolsky energy increments shrink along an eps-halving schedule", 0.0, scope="global")
def _bp_energy_finite(ctx: _SuiteContext) -> float:
    rows = kernel_energy_schedule(ctx.m.a, 0.1, 100.0, levels=6)
    increments = [row.bp_increment for row in rows[1:]]
    return float(sum(1 for a, b in zip(increments, increments[1:]) if b >= a))


# model

def _hypothesis_check(name: str):
    def check(ctx: _SuiteContext) -> float:
        verdict = ctx.hypotheses.hypotheses.get(name) or ctx.hypotheses.consequences[name]
        return 0.0 if verdict.passed else 1.0
    return check


for _name, _description in (
        ("f1", "f(t)/t decreases to 0 as t -> 0"),
        ("f2", "f(t)/t^5 decreases toward 0 at the largest samples"),
        ("f3", "F(t)/t^4 grows without bound"),
        ("f4", "0 < 3 f(t) t <= f'(t) t^2"),
        ("f_over_cube_nondecreasing", "f(t)/t^3 is nondecreasing"),
        ("nehari_gap_nondecreasing", "f(t) t - 4 F(t) is nondecreasing"),
        ("f_nonnegative_on_positive_axis", "f(t) >= 0 for t >= 0"),
        ("primitive_nonnegative", "F >= 0 everywhere")):
    invariant(f"model.{_name}", "model", _description, 0.0, scope="global")(_hypothesis_check(_name))


@invariant("model.ambrosetti_rabinowitz", "model",
           "monitored min of f t / F at the top decade; above 4 when the classical superlinearity holds",
           None, scope="global", reduce="min")
def _ambrosetti_rabinowitz(ctx: _SuiteContext) -> float:
    return ctx.hypotheses.ambrosetti_rabinowitz.margin


@invariant("model.power_identity", "model", "f(t) t = p F(t) for the power model", 1e-13, scope="global")
def _power_identity(ctx: _SuiteContext) -> float:
    nonlinearity = ctx.m.nonlinearity
    if nonlinearity.kind != "power":
        return 0.0
    t = HYPOTHESIS_SAMPLES
    lhs = nonlinearity.f(t) * t
    rhs = nonlinearity.p * nonlinearity.F(t)
    return float(np.max(np.abs(lhs - rhs) / rhs))


@invariant("model.sign_part_restriction", "model", "f(u+) agrees with f(u) on the nodes where u > 0", 0.0)
def _sign_part_restriction(trial: _Trial) -> float:
    f = trial.m.nonlinearity.f
    wplus, _ = sign_split(trial.u)
    positive = trial.u.values > 0
    return float(np.max(np.abs(f(wplus.values)[positive] - f(trial.u.values)[positive]), initial=0.0))


# energy

@invariant("energy.breakdown_consistency", "energy",
           "total = kinetic_potential + nonlocal - nonlinear with nonlocal, nonlinear >= 0", 1e-13)
def _breakdown_consistency(trial: _Trial) -> float:
    e = evaluate_J(trial.u, trial.m)
    scale = e.kinetic_potential + e.nonlocal_energy + e.nonlinear
    sum_error = _relative(e.total - (e.kinetic_potential + e.nonlocal_energy - e.nonlinear), scale)
    return sum_error + _relative(max(0.0, -e.nonlocal_energy) + max(0.0, -e.nonlinear), scale)


@invariant("energy.positive_near_origin", "energy", "J(tu) > 0 for t in (0, t_u / 100]", 0.0)
def _positive_near_origin(trial: _Trial) -> float:
    fiber = trial.fiber
    t_u = trial.diag.t_star
    values = [fiber.h(t) for t in np.geomspace(t_u * 1e-4, t_u / 100.0, 8)]
    return float(sum(1 for value in values if value <= 0))


@invariant("energy.coercive_along_rays", "energy",
           "J(tu) turns negative on the doubling sequence beyond t_u and keeps decreasing up to 64 t_u", 0.0)
def _coercive_along_rays(trial: _Trial) -> float:
    fiber = trial.fiber
    t_u = trial.diag.t_star
    values = [fiber.h(t_u * 2.0 ** k) for k in range(1, 7)]
    if min(values) >= 0:
        return 1.0
    first = next(i for i, value in enumerate(values) if value < 0)
    tail = values[first:]
    return float(sum(1 for a, b in zip(tail, tail[1:]) if b >= a))


@invariant("energy.gradient_consistency", "energy",
           "integral of J'(u) v matches the central difference of J along v to 1e-6", 1e-6)
def _gradient_consistency(trial: _Trial) -> float:
    u, v, m = trial.u, trial.v, trial.m
    eps = np.cbrt(np.finfo(float).eps) * max(1.0, u.max - u.min) / max(v.max - v.min, 1e-300)
    fd = (evaluate_J(u + eps * v, m).total - evaluate_J(u - eps * v, m).total) / (2.0 * eps)
    g = evaluate_grad(u, m)
    analytic = inner(g, v)
    scale = max(abs(analytic), 1e-3 * lp_norm(g, 2) * lp_norm(v, 2))
    return _relative(fd - analytic, scale)


@invariant("energy.mountain_pass_sphere", "energy",
           "monitored smallest H1_V radius rho with J > 0 on rho u/||u|| for every direction",
           None, reduce="min")
def _mountain_pass_sphere(trial: _Trial) -> float:
    fiber = trial.fiber
    unit = 1.0 / np.sqrt(fiber.norm_sq)
    rho = 1.0
    for _ in range(60):
        if all(fiber.h(r * unit) > 0 for r in (rho, rho / 2.0, rho / 4.0)):
            return rho
        rho /= 2.0
    return 0.0


# nehari

@invariant("nehari.fiber_unimodal", "nehari",
           "h_u' has exactly one sign change on [1e-3 t_u, 1e3 t_u], positive before and negative after", 0.0)
def _fiber_unimodal(trial: _Trial) -> float:
    diag = replace(trial.diag, sign_samples=sample_fiber_signs(trial.fiber, trial.diag.t_star, 401))
    signs = [sign for _, sign in diag.sign_samples if sign != 0]
    changes = sum(1 for a, b in zip(signs, signs[1:]) if a != b)
    return float(abs(changes - 1) + (0 if diag.unimodal else 1))


@invariant("nehari.projection_fixed_point", "nehari", "re-projecting t_u u returns t = 1 within 1e-8", 1e-8)
def _projection_fixed_point(trial: _Trial) -> float:
    t, _, _ = project_ground(trial.diag.t_star * trial.u, trial.m)
    return abs(t - 1.0)


@invariant("nehari.projection_maximizes_fiber", "nehari", "h_u(t) <= h_u(t_u) on sampled t > 0", 1e-12)
def _projection_maximizes(trial: _Trial) -> float:
    fiber = trial.fiber
    peak = fiber.h(trial.diag.t_star)
    values = [fiber.h(t) for t in trial.diag.t_star * np.geomspace(1e-2, 1e2, 41)]
    return _relative(max(0.0, max(values) - peak), abs(peak))


@invariant("nehari.norm_floor", "nehari", "monitored min of ||t_u u|| over the projected fields", None,
           reduce="min")
def _norm_floor(trial: _Trial) -> float:
    return trial.diag.t_star * np.sqrt(trial.fiber.norm_sq)


@invariant("nehari.sign_split_exact", "nehari", "w+ + w- = w bit-exactly and w+ w- = 0 nodewise", 0.0)
def _sign_split_exact(trial: _Trial) -> float:
    wplus, wminus = sign_split(trial.u)
    rebuilt = np.max(np.abs((wplus + wminus).values - trial.u.values))
    return float(rebuilt + np.max(np.abs(wplus.values * wminus.values)))


@invariant("nehari.nodal_fixed_point", "nehari", "re-projecting a nodal-set field returns (1, 1) within 1e-8", 1e-8)
def _nodal_fixed_point(trial: _Trial) -> float:
    _, _, w, _ = trial.nodal
    t, s, _, _ = project_nodal(w, trial.m)
    return max(abs(t - 1.0), abs(s - 1.0))


@invariant("nehari.nodal_maximum", "nehari",
           "J(t' w+ + s' w-) <= J(t w+ + s w-) around the nodal projection", 1e-12)
def _nodal_maximum(trial: _Trial) -> float:
    t, s, _, coeffs = trial.nodal
    peak = nodal_energy(coeffs, t, s)
    factors = (0.5, 0.8, 0.95, 1.0, 1.05, 1.25, 2.0)
    values = [nodal_energy(coeffs, t * a, s * b) for a in factors for b in factors]
    return _relative(max(0.0, max(values) - peak), abs(peak))


@invariant("nehari.xi_monotone", "nehari",
           "xi_1(t, s) is nondecreasing in s and xi_2(t, s) in t on sampled grids", 1e-12)
def _xi_monotone(trial: _Trial) -> float:
    t, s, _, coeffs = trial.nodal
    ladder = np.geomspace(0.25, 4.0, 17)
    worst = 0.0
    for a in (0.5, 1.0, 2.0):
        xi1, _ = xi(coeffs, a * t, s * ladder)
        scale1, _ = coeffs.scales(a * t, s)
        worst = max(worst, _relative(max(0.0, float(np.max(-np.diff(xi1)))), scale1))
        _, xi2 = xi(coeffs, t * ladder, a * s)
        _, scale2 = coeffs.scales(t, a * s)
        worst = max(worst, _relative(max(0.0, float(np.max(-np.diff(xi2)))), scale2))
    return worst


@invariant("nehari.nodal_norm_floor", "nehari", "monitored min of ||t w+||, ||s w-|| on the nodal set", None,
           reduce="min")
def _nodal_norm_floor(trial: _Trial) -> float:
    t, s, _, coeffs = trial.nodal
    return min(t * np.sqrt(coeffs.Aplus), s * np.sqrt(coeffs.Aminus))


@invariant("nehari.nodal_coercive_ray", "nehari",
           "J(lambda (t w+ + s w-)) turns negative and keeps decreasing for lambda up to 64", 0.0)
def _nodal_coercive_ray(trial: _Trial) -> float:
    t, s, _, coeffs = trial.nodal
    values = [nodal_energy(coeffs, t * 2.0 ** k, s * 2.0 ** k) for k in range(1, 7)]
    if min(values) >= 0:
        return 1.0
    first = next(i for i, value in enumerate(values) if value < 0)
    tail = values[first:]
    return float(sum(1 for a, b in zip(tail, tail[1:]) if b >= a))


@invariant("nehari.nodal_symmetry", "nehari",
           "an antisymmetric dipole projects with t = s to 1e-9", 1e-9, scope="global")
def _nodal_symmetry(ctx: _SuiteContext) -> float:
    dipole = initial_field(ctx.grid, SolveOptions(initializer="dipole", perturbation=0.0), "nodal")
    t, s, _, _ = project_nodal(dipole, ctx.m)
    return _relative(t - s, max(t, s))


# minimize

@invariant("minimize.monotone_descent", "minimize",
           "accepted-step energies never increase in either solve", 0.0, scope="solve")
def _monotone_descent(solves: _Solves) -> float:
    worst = 0.0
    for report in (solves.ground, solves.nodal):
        energies = np.array([row.energy.total for row in report.trace])
        if energies.size > 1:
            worst = max(worst, _relative(max(0.0, float(np.max(np.diff(energies)))), abs(energies[0])))
    return worst


@invariant("minimize.ground_fixed_sign", "minimize",
           "min(u) max(u) >= -1e-10 ||u||_inf^2 for the ground state", 1e-10, scope="solve")
def _ground_fixed_sign(solves: _Solves) -> float:
    u = solves.ground.field
    peak = max(abs(u.min), abs(u.max))
    return _relative(max(0.0, -u.min * u.max), peak ** 2)


@invariant("minimize.level_positivity", "minimize", "c0 > 0 and c1 >= c0", 0.0, scope="solve")
def _level_positivity(solves: _Solves) -> float:
    c0, c1 = solves.ground.level, solves.nodal.level
    return float((c0 <= 0) + max(0.0, c0 - c1) / max(abs(c0), 1e-300))


@invariant("minimize.energy_splitting", "minimize",
           "J(t w+) + J(s w-) < J(w) for the separately projected sign parts of the nodal solution", 0.0,
           scope="solve")
def _energy_splitting(solves: _Solves) -> float:
    split = energy_splitting(solves.nodal.field, solves.m)
    level = solves.nodal.level
    return 1.0 if split >= level else 0.0


@invariant("minimize.residual_contract", "minimize",
           "both solves stop with relative gradient residual <= grad_tol", 0.0, scope="solve")
def _residual_contract(solves: _Solves) -> float:
    return float(sum(max(0.0, r.residual - solves.grad_tol) for r in (solves.ground, solves.nodal)))


def _run_trial(index: int, seed: int, m: ModelParams, grid: Grid, factory: FieldFactory,
               checks: List[Invariant]) -> dict:
    rng = np.random.default_rng([seed, index])
    u, rejected_u = _draw(grid, rng, factory)
    v, rejected_v = _draw(grid, rng, factory)
    trial = _Trial(index, u, v, m)
    outcome = {"rejections": rejected_u + rejected_v, "values": {}, "errors": {}}
    for inv in checks:
        try:
            outcome["values"][inv.invariant_id] = float(_CHECKS[inv.invariant_id](trial))
        except SolverError as e:
            outcome["errors"][inv.invariant_id] = str(e)
    return outcome


def _aggregate(inv: Invariant, values: List[float], errors: List[str], trials: int) -> InvariantResult:
    if errors:
        return InvariantResult(inv, trials, None, False, errors[0])
    if not values:
        return InvariantResult(inv, 0, None, None)
    if inv.monitored:
        value = min(values) if inv.reduce == "min" else max(values)
        return InvariantResult(inv, trials, value, bool(np.isfinite(value) and value > 0))
    worst = max(values)
    return InvariantResult(inv, trials, worst, bool(worst <= inv.tolerance))


def _run_solves(m: ModelParams, grid: Grid, opts: SolveOptions) -> _Solves:
    # each solve falls back to its own default start
    auto = replace(opts, initializer=None)
    ground = solve_ground(m, grid, auto)
    nodal = solve_nodal(m, grid, auto)
    return _Solves(m, ground, nodal, opts.grad_tol)


def run_invariant_suite(m: ModelParams, g: Grid, trials: int, seed: int, include_solves: bool = True,
                        solve_options: Optional[SolveOptions] = None,
                        field_factory: Optional[FieldFactory] = None) -> SuiteReport:
    """Evaluate every registered invariant; failures become report entries"""
    if int(trials) != trials or trials < 1:
        raise InvalidParameterError(f"trials must be a positive integer, got {trials}")
    factory = field_factory or random_field
    by_scope = {scope: [inv for inv in INVARIANTS if inv.scope == scope] for scope in ("trial", "global", "solve")}
    logger.info(f"Running invariant suite: {len(INVARIANTS)} invariants, {trials} trials, seed={seed}")

    with ThreadPoolExecutor(max_workers=SBP_THREADS) as pool:
        outcomes = list(pool.map(
            lambda i: _run_trial(i, seed, m, g, factory, by_scope["trial"]), range(trials)))

    report = SuiteReport(model=m, grid=g, seed=seed, trials=trials,
                         rejections=sum(o["rejections"] for o in outcomes))
    if report.rejections:
        logger.warning(f"Regenerated {report.rejections} near-zero random field(s)")

    results = {}
    for inv in by_scope["trial"]:
        values = [o["values"][inv.invariant_id] for o in outcomes if inv.invariant_id in o["values"]]
        errors = [o["errors"][inv.invariant_id] for o in outcomes if inv.invariant_id in o["errors"]]
        results[inv.invariant_id] = _aggregate(inv, values, errors, trials)

    ctx = _SuiteContext(m, g)
    for inv in by_scope["global"]:
        try:
            results[inv.invariant_id] = _aggregate(inv, [float(_CHECKS[inv.invariant_id](ctx))], [], 1)
        except SolverError as e:
            results[inv.invariant_id] = _aggregate(inv, [], [str(e)], 1)

    solves = None
    solve_error = None
    if include_solves:
        try:
            solves = _run_solves(m, g, solve_options or SolveOptions(seed=seed))
        except SolverError as e:
            solve_error = str(e)
            logger.error(f"Solver run inside the suite failed: {e}")
    for inv in by_scope["solve"]:
        if solve_error:
            results[inv.invariant_id] = _aggregate(inv, [], [solve_error], 1)
        elif solves is None:
            results[inv.invariant_id] = _aggregate(inv, [], [], 0)
        else:
            results[inv.invariant_id] = _aggregate(inv, [float(_CHECKS[inv.invariant_id](solves))], [], 1)
    if solves is not None:
        report.levels = compare_levels(solves.ground, solves.nodal)

    report.results = [results[inv.invariant_id] for inv in INVARIANTS]
    if report.failures:
        logger.warning(f"Invariant failures: {report.failures}")
    logger.info(f"Invariant suite finished: pass={report.passed}")
    return report
