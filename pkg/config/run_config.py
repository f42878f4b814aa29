"""Run configuration: YAML document parsing, defaults merging and validation"""
import copy
import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
import yaml

from config.settings import load_defaults
from services.errors import ConfigParseError, ConfigValidationError
from services.grid import MAX_POINTS, MIN_POINTS, Grid, make_grid
from services.minimize import INITIALIZERS, SolveOptions
from services.model import NONLINEARITY_KINDS, ModelParams, Nonlinearity, Potential

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelSection:
    a: float
    q: float
    nonlinearity: str
    p: Optional[float]
    v0: float
    omega: float

    def params(self) -> ModelParams:
        return ModelParams(
            a=self.a,
            q=self.q,
            nonlinearity=Nonlinearity(self.nonlinearity, self.p),
            potential=Potential("harmonic", self.v0, self.omega),
        )


@dataclass(frozen=True)
class VerifySection:
    trials: int
    include_solves: bool


@dataclass(frozen=True)
class KernelInfoSection:
    epsilon_start: float
    levels: int
    factor: float
    r_max: float


@dataclass(frozen=True)
class RunConfig:
    grid: Grid
    model: ModelSection
    solve: SolveOptions
    output_directory: Optional[str]
    verify: VerifySection
    kernel_info: KernelInfoSection
    allow_local: bool
    raw: dict

    @property
    def params(self) -> ModelParams:
        return self.model.params()

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and np.isfinite(value)


def _is_integer(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _require(condition: bool, key: str, constraint: str):
    if not condition:
        raise ConfigValidationError(key, constraint)


def _positive(raw: dict, section: str, key: str) -> float:
    value = raw[section][key]
    _require(_is_number(value) and value > 0, f"{section}.{key}", f"{key} must be a positive number")
    return float(value)


def _positive_int(raw: dict, section: str, key: str) -> int:
    value = raw[section][key]
    _require(_is_integer(value) and value >= 1, f"{section}.{key}", f"{key} must be a positive integer")
    return int(value)


def _boolean(raw: dict, section: str, key: str) -> bool:
    value = raw[section][key]
    _require(isinstance(value, bool), f"{section}.{key}", f"{key} must be true or false")
    return value


def _check_keys(data: Any, schema: dict, prefix: str = ""):
    """Reject keys with no default counterpart"""
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if key not in schema:
            raise ConfigValidationError(dotted, "unknown key")
        if isinstance(schema[key], dict):
            _require(isinstance(value, dict), dotted, "must be a mapping")
            _check_keys(value, schema[key], f"{dotted}.")


def _merge(defaults: dict, overrides: dict) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _build_grid(raw: dict) -> Grid:
    half_length = _positive(raw, "grid", "L")
    n = raw["grid"]["N"]
    _require(_is_integer(n) and n % 2 == 0 and MIN_POINTS <= n <= MAX_POINTS, "grid.N",
             f"N must be an even integer in [{MIN_POINTS}, {MAX_POINTS}]")
    return make_grid(half_length, n)


def _build_model(raw: dict, allow_local: bool) -> ModelSection:
    model = raw["model"]
    a = _positive(raw, "model", "a")
    q = model["q"]
    _require(_is_number(q), "model.q", "q must be a finite number")
    _require(q != 0 or allow_local, "model.q", "q must be nonzero (q ≠ 0); pass --allow-local for the local limit")
    kind = model["nonlinearity"]
    _require(kind in NONLINEARITY_KINDS, "model.nonlinearity",
             f"nonlinearity must be one of {list(NONLINEARITY_KINDS)}")
    p = model["p"]
    if kind == "power":
        _require(_is_number(p) and 4.0 < p < 6.0, "model.p", "p must lie in (4,6)")
        p = float(p)
    else:
        p = None
    potential = model["potential"]
    v0, omega = potential["v0"], potential["omega"]
    _require(_is_number(v0) and v0 > 0, "model.potential.v0", "v0 must be positive")
    _require(_is_number(omega) and omega >= 0, "model.potential.omega", "omega must be nonnegative")
    return ModelSection(a, float(q), kind, p, float(v0), float(omega))


def _build_solve(raw: dict) -> SolveOptions:
    solve = raw["solve"]
    values = {
        "max_iters": _positive_int(raw, "solve", "max_iters"),
        "grad_tol": _positive(raw, "solve", "grad_tol"),
        "initial_step": _positive(raw, "solve", "initial_step"),
        "max_step": _positive(raw, "solve", "max_step"),
        "armijo": _positive(raw, "solve", "armijo"),
        "max_backtracks": _positive_int(raw, "solve", "max_backtracks"),
        "projection_tol": _positive(raw, "solve", "projection_tol"),
        "precondition": _boolean(raw, "solve", "precondition"),
    }
    _require(values["max_step"] >= values["initial_step"], "solve.max_step", "max_step must be at least initial_step")
    _require(values["armijo"] < 1, "solve.armijo", "armijo must lie in (0,1)")
    shrink = solve["shrink"]
    _require(_is_number(shrink) and 0 < shrink < 1, "solve.shrink", "shrink must lie in (0,1)")
    seed = solve["seed"]
    _require(_is_integer(seed) and seed >= 0, "solve.seed", "seed must be a nonnegative integer")
    initializer = solve["initializer"]
    _require(initializer is None or initializer in INITIALIZERS, "solve.initializer",
             f"initializer must be null or one of {list(INITIALIZERS)}")
    init_path = solve["init_path"]
    _require(init_path is None or isinstance(init_path, str), "solve.init_path", "init_path must be a path string")
    _require(initializer != "file" or bool(init_path), "solve.init_path", "the file initializer needs init_path")
    perturbation = solve["perturbation"]
    _require(_is_number(perturbation) and perturbation >= 0, "solve.perturbation", "perturbation must be nonnegative")
    return SolveOptions(shrink=float(shrink), seed=seed, initializer=initializer, init_path=init_path,
                        perturbation=float(perturbation), **values)


def _build_kernel_info(raw: dict) -> KernelInfoSection:
    epsilon_start = _positive(raw, "kernel_info", "epsilon_start")
    r_max = _positive(raw, "kernel_info", "r_max")
    _require(r_max > epsilon_start, "kernel_info.r_max", "r_max must exceed epsilon_start")
    factor = raw["kernel_info"]["factor"]
    _require(_is_number(factor) and factor > 1, "kernel_info.factor", "factor must exceed 1")
    return KernelInfoSection(epsilon_start, _positive_int(raw, "kernel_info", "levels"), float(factor), r_max)


def build_config(raw: dict, allow_local: bool = False) -> RunConfig:
    """Validate a merged configuration mapping"""
    directory = raw["output"]["directory"]
    _require(directory is None or isinstance(directory, str), "output.directory", "directory must be a path string")
    return RunConfig(
        grid=_build_grid(raw),
        model=_build_model(raw, allow_local),
        solve=_build_solve(raw),
        output_directory=directory,
        verify=VerifySection(_positive_int(raw, "verify", "trials"), _boolean(raw, "verify", "include_solves")),
        kernel_info=_build_kernel_info(raw),
        allow_local=allow_local,
        raw=raw,
    )


def parse_config(text: str, allow_local: bool = False) -> RunConfig:
    """Parse a YAML run configuration and fill every missing key from the defaults"""
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigParseError(getattr(e, "problem", None) or str(e), line)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigParseError("configuration document must be a mapping of sections", 1)
    defaults = load_defaults()
    _check_keys(data, defaults)
    raw = _merge(defaults, data)
    config = build_config(raw, allow_local)
    logger.debug(f"Parsed configuration: {raw}")
    return config


def apply_overrides(config: RunConfig, seed: Optional[int] = None, grid_n: Optional[int] = None,
                    max_iters: Optional[int] = None, out: Optional[str] = None) -> RunConfig:
    """Re-validate the configuration with command-line overrides applied"""
    raw = copy.deepcopy(config.raw)
    if seed is not None:
        raw["solve"]["seed"] = seed
    if grid_n is not None:
        raw["grid"]["N"] = grid_n
    if max_iters is not None:
        raw["solve"]["max_iters"] = max_iters
    if out is not None:
        raw["output"]["directory"] = out
    return build_config(raw, config.allow_local)
