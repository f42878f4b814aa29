"""Projected gradient descent on the Nehari manifold and on the nodal set"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from services.energy import EnergyBreakdown, evaluate_grad
from services.errors import (
    BracketError, DegenerateSignPartError, GridMismatchError, InvalidParameterError,
    NonConvergenceError, SignCollapseError, ZeroFieldError
)
from services.field_io import load_field
from services.grid import Grid, ScalarField, band_limited_noise, forward, h1v_norm_sq, inner, inverse, lp_norm
from services.model import ModelParams
from services.nehari import (
    PROJECTION_TOL, Fiber, nodal_breakdown, project_nodal, sign_split, solve_fiber
)

logger = logging.getLogger(__name__)

INITIALIZERS = ("gaussian", "dipole", "file")
DEFAULT_INITIALIZER = {"ground": "gaussian", "nodal": "dipole"}

_EPS = np.finfo(float).eps
# Energy differences below this many ulps of |J| are treated as round-off
_ROUNDOFF_ULPS = 64.0


@dataclass(frozen=True)
class SolveOptions:
    """Descent, line-search and initializer settings for one solve"""

    max_iters: int = 5000
    grad_tol: float = 1e-6
    initial_step: float = 1.0
    max_step: float = 8.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 40
    seed: int = 0
    initializer: Optional[str] = None
    init_path: Optional[str] = None
    perturbation: float = 0.1
    precondition: bool = True
    projection_tol: float = PROJECTION_TOL

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InvalidParameterError(f"max_iters must be a positive integer, got {self.max_iters}")
        for name in ("grad_tol", "initial_step", "projection_tol"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise InvalidParameterError(f"{name} must be positive, got {value}")
        if not self.max_step >= self.initial_step:
            raise InvalidParameterError(
                f"max_step must be at least initial_step, got {self.max_step} < {self.initial_step}")
        if not 0.0 < self.shrink < 1.0:
            raise InvalidParameterError(f"shrink factor must lie in (0, 1), got {self.shrink}")
        if not 0.0 < self.armijo < 1.0:
            raise InvalidParameterError(f"sufficient-decrease constant must lie in (0, 1), got {self.armijo}")
        if int(self.max_backtracks) != self.max_backtracks or self.max_backtracks < 1:
            raise InvalidParameterError(f"max_backtracks must be a positive integer, got {self.max_backtracks}")
        if self.initializer is not None and self.initializer not in INITIALIZERS:
            raise InvalidParameterError(f"unknown initializer {self.initializer!r}")
        if self.initializer == "file" and not self.init_path:
            raise InvalidParameterError("the file initializer needs init_path")
        if not np.isfinite(self.perturbation) or self.perturbation < 0:
            raise InvalidParameterError(f"perturbation must be nonnegative, got {self.perturbation}")

    def resolved_initializer(self, kind: str) -> str:
        return self.initializer or DEFAULT_INITIALIZER[kind]


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    energy: EnergyBreakdown
    residual: float
    t: float
    s: Optional[float] = None

    def to_row(self) -> list:
        e = self.energy
        return [self.iteration, e.total, e.kinetic_potential, e.nonlocal_energy, e.nonlinear,
                self.residual, self.t, "" if self.s is None else self.s]


@dataclass
class SolveReport:
    """Outcome of a ground or nodal solve; field and trace stay out of the JSON document"""

    kind: str
    status: str
    energy: EnergyBreakdown
    residual: float
    iterations: int
    projection: dict
    grid: Grid
    model: ModelParams
    field: ScalarField
    seed: int = 0
    norm_floor: float = 0.0
    component_norms: Optional[dict] = None
    component_residuals: Optional[dict] = None
    trace: List[TraceRow] = field(default_factory=list)

    @property
    def level(self) -> float:
        return self.energy.total

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def sign_summary(self) -> dict:
        return {"min": self.field.min, "max": self.field.max}

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "status": self.status,
            "converged": self.converged,
            "level": self.level,
            "residual": self.residual,
            "iterations": self.iterations,
            "seed": self.seed,
            "energy": self.energy.to_dict(),
            "projection": self.projection,
            "sign_summary": self.sign_summary,
            "norm_floor": self.norm_floor,
            "component_norms": self.component_norms,
            "component_residuals": self.component_residuals,
            "grid": {"L": self.grid.half_length, "N": self.grid.points_per_axis},
            "model": self.model.to_dict(),
        }


@dataclass
class _Projected:
    field: ScalarField
    energy: EnergyBreakdown
    projection: dict
    t: float
    s: Optional[float]
    norm: float


def residual_norm(u: ScalarField, m: ModelParams) -> float:
    """||J'(u)||_2 / max(1, ||u||_2)"""
    return lp_norm(evaluate_grad(u, m), 2) / max(1.0, lp_norm(u, 2))


def _clip(v: ScalarField) -> ScalarField:
    return ScalarField(v.grid, np.maximum(v.values, 0.0))


def _free_gradient(g: ScalarField, u: ScalarField) -> ScalarField:
    """Gradient with the components held at the u >= 0 bound removed"""
    held = (u.values <= 0.0) & (g.values > 0.0)
    return ScalarField(g.grid, np.where(held, 0.0, g.values))


def cone_residual_norm(u: ScalarField, m: ModelParams) -> float:
    """Projected residual on the cone u >= 0; equals residual_norm where u > 0 everywhere"""
    g = evaluate_grad(u, m)
    return lp_norm(_free_gradient(g, u), 2) / max(1.0, lp_norm(u, 2))


def _gaussian(grid: Grid, center: float = 0.0) -> ScalarField:
    sigma = grid.half_length / 6.0
    return ScalarField.from_function(
        grid, lambda x, y, z: np.exp(-((x - center) ** 2 + y ** 2 + z ** 2) / (2.0 * sigma ** 2)))


def initial_field(grid: Grid, opts: SolveOptions, kind: str = "ground") -> ScalarField:
    """Starting field for a solve, times a seeded even band-limited factor exp(perturbation * noise)"""
    name = opts.resolved_initializer(kind)
    if name == "gaussian":
        base = _gaussian(grid)
    elif name == "dipole":
        offset = grid.half_length / 4.0
        dipole = _gaussian(grid, offset) - _gaussian(grid, -offset)
        base = 0.5 * (dipole - dipole.reflected())
    else:
        base = load_field(opts.init_path)
        if base.grid != grid:
            raise GridMismatchError(f"initial field {opts.init_path} lives on {base.grid}, expected {grid}")
    if opts.perturbation == 0:
        return base
    noise = band_limited_noise(grid, np.random.default_rng(opts.seed))
    noise = ScalarField(grid, noise)
    noise = 0.5 * (noise + noise.reflected())
    scale = max(abs(noise.min), abs(noise.max))
    if scale == 0:
        return base
    return base * np.exp(opts.perturbation * noise.values / scale)


def _precondition(g: ScalarField, m: ModelParams, enabled: bool) -> ScalarField:
    """Apply (-Delta + v0)^-1 spectrally"""
    if not enabled:
        return g
    return inverse(g.grid, forward(g) / (g.grid.k_squared + m.potential.v0))


def _project_ground(v: ScalarField, m: ModelParams, tol: float) -> _Projected:
    fiber = Fiber.from_field(v, m)
    diag = solve_fiber(fiber, tol)
    t = diag.t_star
    return _Projected(t * v, fiber.breakdown(t), diag.to_dict(), t, None, t * np.sqrt(fiber.norm_sq))


def _project_nodal(v: ScalarField, m: ModelParams, tol: float) -> _Projected:
    t, s, w, coeffs = project_nodal(v, m, tol)
    projection = {"t": t, "s": s, "coefficients": coeffs.to_dict()}
    norm = min(t * np.sqrt(coeffs.Aplus), s * np.sqrt(coeffs.Aminus))
    return _Projected(w, nodal_breakdown(coeffs, t, s), projection, t, s, norm)


def _accepts(old: float, new: float, predicted: float) -> bool:
    """Armijo test, relaxed to plain non-increase once the prediction drops below round-off"""
    if new <= old - predicted:
        return True
    return bool(new <= old and predicted <= _ROUNDOFF_ULPS * _EPS * abs(old))


@dataclass(frozen=True)
class _Geometry:
    """How one solve kind moves: the projection, and the cone handling for ground solves"""

    kind: str
    project: Callable[[ScalarField, ModelParams, float], _Projected]
    on_cone: bool = False

    def feasible(self, v: ScalarField) -> ScalarField:
        return _clip(v) if self.on_cone else v

    def search_gradient(self, g: ScalarField, u: ScalarField) -> ScalarField:
        return _free_gradient(g, u) if self.on_cone else g

    def residual(self, g: ScalarField, u: ScalarField) -> float:
        return lp_norm(self.search_gradient(g, u), 2) / max(1.0, lp_norm(u, 2))


def _line_search(current: _Projected, g: ScalarField, direction: ScalarField, step: float, m: ModelParams,
                 opts: SolveOptions, geometry: _Geometry) -> Tuple[Optional[_Projected], float, int]:
    """Backtrack along -direction; steps are capped so one move never exceeds step * ||u||"""
    u = current.field
    d_norm = lp_norm(direction, 2)
    scale = min(1.0, lp_norm(u, 2) / d_norm) if d_norm > 0 else 1.0
    collapsed = 0
    for _ in range(opts.max_backtracks):
        trial = geometry.feasible(u - (step * scale) * direction)
        try:
            candidate = geometry.project(trial, m, opts.projection_tol)
        except DegenerateSignPartError:
            collapsed += 1
            step *= opts.shrink
            continue
        except (BracketError, ZeroFieldError) as e:
            logger.debug(f"Projection failed at step {step:.3e}: {e}")
            step *= opts.shrink
            continue
        predicted = opts.armijo * max(inner(g, u - trial), 0.0)
        if _accepts(current.energy.total, candidate.energy.total, predicted):
            return candidate, step, collapsed
        step *= opts.shrink
    return None, step, collapsed


def _descend(start: _Projected, m: ModelParams, opts: SolveOptions, geometry: _Geometry,
             build_report: Callable[[_Projected, str, float, int, list, float], SolveReport]) -> SolveReport:
    kind = geometry.kind
    current = start
    step = opts.initial_step
    norm_floor = current.norm
    g = evaluate_grad(current.field, m)
    residual = geometry.residual(g, current.field)
    trace = [TraceRow(0, current.energy, residual, current.t, current.s)]
    logger.info(f"Starting {kind} solve: J={current.energy.total:.10g}, residual={residual:.3e}")

    for iteration in range(1, opts.max_iters + 1):
        if residual <= opts.grad_tol:
            report = build_report(current, "converged", residual, iteration - 1, trace, norm_floor)
            logger.info(f"{kind.capitalize()} solve converged after {iteration - 1} iterations: "
                        f"level={report.level:.12g}, residual={residual:.3e}")
            return report

        search = geometry.search_gradient(g, current.field)
        direction = _precondition(search, m, opts.precondition)
        accepted, step, collapsed = _line_search(current, g, direction, step, m, opts, geometry)
        if accepted is None and geometry.on_cone and opts.precondition:
            # the smoothed direction can point out of the cone; the plain projected gradient cannot
            logger.debug(f"Retrying iteration {iteration} along the projected gradient")
            accepted, step, _ = _line_search(current, g, search, opts.initial_step, m, opts, geometry)

        if accepted is None:
            if collapsed == opts.max_backtracks:
                report = build_report(current, "sign_collapse", residual, iteration - 1, trace, norm_floor)
                logger.error(f"Nodal iterate lost a sign part at iteration {iteration}")
                raise SignCollapseError(
                    "a sign part vanished during descent; restart with a wider dipole initializer", report)
            report = build_report(current, "stalled", residual, iteration - 1, trace, norm_floor)
            logger.warning(f"Line search stalled after {opts.max_backtracks} backtracks at iteration {iteration}")
            logger.error(f"{kind.capitalize()} solve stalled with residual {residual:.3e}")
            raise NonConvergenceError(
                f"{kind} solve stalled at residual {residual:.3e} above tolerance {opts.grad_tol}", report)

        current = accepted
        norm_floor = min(norm_floor, current.norm)
        g = evaluate_grad(current.field, m)
        residual = geometry.residual(g, current.field)
        trace.append(TraceRow(iteration, current.energy, residual, current.t, current.s))
        logger.debug(f"Iteration {iteration}: J={current.energy.total:.14g}, residual={residual:.3e}, step={step:.3e}")
        step = min(step / opts.shrink, opts.max_step)

    status = "converged" if residual <= opts.grad_tol else "max_iters"
    report = build_report(current, status, residual, opts.max_iters, trace, norm_floor)
    if not report.converged:
        logger.error(f"{kind.capitalize()} solve hit max_iters={opts.max_iters} with residual {residual:.3e}")
        raise NonConvergenceError(
            f"{kind} solve reached {opts.max_iters} iterations with residual {residual:.3e}", report)
    return report


def solve_ground(m: ModelParams, g: Grid, opts: SolveOptions) -> SolveReport:
    """Minimize J over the Nehari manifold, restricted to nonnegative fields"""
    u0 = initial_field(g, opts, "ground")
    if abs(u0.min) > abs(u0.max):
        u0 = -u0
    start = _project_ground(_clip(u0), m, opts.projection_tol)

    def build_report(state, status, residual, iterations, trace, norm_floor):
        return SolveReport(
            kind="ground", status=status, energy=state.energy, residual=residual, iterations=iterations,
            projection=state.projection, grid=g, model=m, field=state.field, seed=opts.seed,
            norm_floor=float(norm_floor), trace=trace)

    return _descend(start, m, opts, _Geometry("ground", _project_ground, on_cone=True), build_report)


def nodal_components(w: ScalarField, m: ModelParams) -> Tuple[dict, dict]:
    """(||w+||, ||w-||) and (<J'(w), w+>, <J'(w), w->)"""
    wplus, wminus = sign_split(w)
    g = evaluate_grad(w, m)
    norms = {"plus": float(np.sqrt(h1v_norm_sq(wplus, m.potential))),
             "minus": float(np.sqrt(h1v_norm_sq(wminus, m.potential)))}
    residuals = {"plus": inner(g, wplus), "minus": inner(g, wminus)}
    return norms, residuals


def solve_nodal(m: ModelParams, g: Grid, opts: SolveOptions) -> SolveReport:
    """Minimize J over the nodal set of sign-changing Nehari fields"""
    start_field = initial_field(g, opts, "nodal")
    try:
        start = _project_nodal(start_field, m, opts.projection_tol)
    except DegenerateSignPartError as e:
        logger.error(f"Initial field for the nodal solve is not sign-changing: {e}")
        raise SignCollapseError(
            f"initial field has no usable sign change ({e}); use the dipole initializer or widen the dipole")

    def build_report(state, status, residual, iterations, trace, norm_floor):
        norms, residuals = nodal_components(state.field, m)
        return SolveReport(
            kind="nodal", status=status, energy=state.energy, residual=residual, iterations=iterations,
            projection=state.projection, grid=g, model=m, field=state.field, seed=opts.seed,
            norm_floor=float(norm_floor), component_norms=norms, component_residuals=residuals, trace=trace)

    return _descend(start, m, opts, _Geometry("nodal", _project_nodal), build_report)
