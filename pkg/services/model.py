"""Model nonlinearities and confining potentials, with hypothesis self-checks"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from services.errors import InvalidParameterError, UndefinedAtZeroError
from services.grid import Grid, ScalarField

logger = logging.getLogger(__name__)

NONLINEARITY_KINDS = ("power", "logpower")

# Below this |t| the logarithmic primitive is summed as a series
_LOG_SERIES_CUTOFF = 0.1
_LOG_SERIES_TERMS = 18


@dataclass(frozen=True)
class Nonlinearity:
    """Autonomous odd nonlinearity f with primitive F and derivative f'"""

    kind: str = "power"
    p: Optional[float] = 5.0

    def __post_init__(self):
        if self.kind not in NONLINEARITY_KINDS:
            raise InvalidParameterError(f"unknown nonlinearity kind {self.kind!r}")
        if self.kind == "power":
            if self.p is None or not np.isfinite(self.p) or self.p <= 2:
                raise InvalidParameterError(f"power exponent must exceed 2, got {self.p}")
        else:
            object.__setattr__(self, "p", None)

    @property
    def admissible(self) -> bool:
        """True when (f1)-(f4) hold for the model by construction"""
        return self.kind == "logpower" or 4.0 < self.p < 6.0

    def f(self, t):
        t = np.asarray(t, dtype=np.float64)
        a = np.abs(t)
        if self.kind == "power":
            return a ** (self.p - 2.0) * t
        return t * a * a * np.log1p(a)

    def F(self, t):
        t = np.asarray(t, dtype=np.float64)
        a = np.abs(t)
        if self.kind == "power":
            return a ** self.p / self.p
        return _log_primitive(a)

    def fprime(self, t):
        t = np.asarray(t, dtype=np.float64)
        a = np.abs(t)
        if self.kind == "power":
            return (self.p - 1.0) * a ** (self.p - 2.0)
        return 3.0 * t ** 2 * np.log1p(a) + a ** 3 / (1.0 + a)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "p": self.p}


def _log_primitive(a: np.ndarray) -> np.ndarray:
    """Integral of s^3 ln(1+s) over [0, a] for a >= 0"""
    a = np.asarray(a, dtype=np.float64)
    # Integration by parts; cancels badly near 0, where the series takes over
    closed = ((a ** 4 - 1.0) / 4.0) * np.log1p(a) - a ** 4 / 16.0 + a ** 3 / 12.0 - a ** 2 / 8.0 + a / 4.0
    small = np.minimum(a, _LOG_SERIES_CUTOFF)
    series = np.zeros_like(small)
    for n in range(1, _LOG_SERIES_TERMS + 1):
        series += (-1.0) ** (n + 1) * small ** (n + 4) / (n * (n + 4))
    return np.where(a < _LOG_SERIES_CUTOFF, series, closed)


@dataclass(frozen=True)
class Potential:
    """Harmonic confinement V(x) = v0 + omega |x|^2"""

    kind: str = "harmonic"
    v0: float = 1.0
    omega: float = 0.25

    def __post_init__(self):
        if self.kind != "harmonic":
            raise InvalidParameterError(f"unknown potential kind {self.kind!r}")
        if not self.v0 > 0:
            raise InvalidParameterError(f"potential base v0 must be positive, got {self.v0}")
        if not self.omega >= 0:
            raise InvalidParameterError(f"potential stiffness omega must be nonnegative, got {self.omega}")

    @property
    def coercive(self) -> bool:
        return self.omega > 0

    def evaluate(self, grid: Grid) -> np.ndarray:
        return self.v0 + self.omega * grid.radius_squared

    def to_dict(self) -> dict:
        return {"kind": self.kind, "v0": self.v0, "omega": self.omega}


@dataclass(frozen=True)
class ModelParams:
    """Bopp-Podolsky parameter a, coupling q, nonlinearity and potential"""

    a: float = 1.0
    q: float = 1.0
    nonlinearity: Nonlinearity = field(default_factory=Nonlinearity)
    potential: Potential = field(default_factory=Potential)

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidParameterError(f"Bopp-Podolsky parameter a must be positive, got {self.a}")
        if not np.isfinite(self.q):
            raise InvalidParameterError(f"coupling q must be finite, got {self.q}")

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "q": self.q,
            "nonlinearity": self.nonlinearity.to_dict(),
            "potential": self.potential.to_dict(),
        }


def f_eval(m: Nonlinearity, t):
    return m.f(t)


def F_eval(m: Nonlinearity, t):
    return m.F(t)


def fprime_eval(m: Nonlinearity, t):
    """Classical derivative f'(t); the models are C^1 away from 0 only"""
    if np.any(np.asarray(t) == 0):
        raise UndefinedAtZeroError("f' is not evaluated at t = 0")
    return m.fprime(t)


def apply_f(m: Nonlinearity, u: ScalarField) -> ScalarField:
    return u.map(m.f)


def apply_F(m: Nonlinearity, u: ScalarField) -> ScalarField:
    return u.map(m.F)


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    detail: str = ""
    margin: Optional[float] = None

    def to_dict(self) -> dict:
        return {"name": self.name, "pass": self.passed, "detail": self.detail, "margin": self.margin}


@dataclass
class HypothesisReport:
    """Verdicts for (f1)-(f4), their consequences and the AR check"""

    model: Nonlinearity
    hypotheses: Dict[str, HypothesisCheck] = field(default_factory=dict)
    consequences: Dict[str, HypothesisCheck] = field(default_factory=dict)
    ambrosetti_rabinowitz: Optional[HypothesisCheck] = None

    @property
    def failed_hypotheses(self) -> set:
        return {name for name, check in self.hypotheses.items() if not check.passed}

    @property
    def failed_consequences(self) -> set:
        return {name for name, check in self.consequences.items() if not check.passed}

    @property
    def all_passed(self) -> bool:
        return not self.failed_hypotheses and not self.failed_consequences

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "hypotheses": {k: v.to_dict() for k, v in self.hypotheses.items()},
            "consequences": {k: v.to_dict() for k, v in self.consequences.items()},
            "ambrosetti_rabinowitz": self.ambrosetti_rabinowitz.to_dict() if self.ambrosetti_rabinowitz else None,
        }


_MONOTONE_RTOL = 1e-12


def _log_slope(t: np.ndarray, y: np.ndarray) -> float:
    return float((np.log(y[-1]) - np.log(y[0])) / (np.log(t[-1]) - np.log(t[0])))


def _nondecreasing(y: np.ndarray) -> tuple:
    """(passed, worst relative drop) for a sampled sequence"""
    drops = -np.diff(y) / np.maximum(np.abs(y[1:]), np.finfo(float).tiny)
    worst = float(np.max(drops)) if drops.size else 0.0
    return worst <= _MONOTONE_RTOL, worst


def _validate_samples(samples: Sequence[float]) -> np.ndarray:
    t = np.asarray(samples, dtype=np.float64)
    if t.ndim != 1 or t.size < 4:
        raise InvalidParameterError("samples must be a list of at least 4 values")
    if not np.all(np.isfinite(t)) or np.any(t <= 0):
        raise InvalidParameterError("samples must be finite and positive")
    if np.any(np.diff(t) <= 0):
        raise InvalidParameterError("samples must be strictly increasing")
    if np.log10(t[-1] / t[0]) < 4.0:
        raise InvalidParameterError("samples must span at least 4 decades")
    return t


def check_hypotheses(m: Nonlinearity, samples: Sequence[float]) -> HypothesisReport:
    """Check (f1)-(f4) and the monotonicity/sign facts they imply on positive samples"""
    t = _validate_samples(samples)
    f, F, fp = m.f(t), m.F(t), m.fprime(t)
    report = HypothesisReport(model=m)

    low = t <= t[0] * 10.0
    high = t >= t[-1] / 10.0

    # (f1): f(t)/t decreases to 0 as t -> 0
    ratio = f[low] / t[low]
    slope = _log_slope(t[low], ratio)
    monotone, _ = _nondecreasing(ratio)
    report.hypotheses["f1"] = HypothesisCheck(
        "f1", bool(monotone and slope > 0), f"log-slope of f/t near 0 is {slope:.4g}", slope)

    # (f2): f(t)/t^5 decreases toward 0 at the largest samples
    ratio = f[high] / t[high] ** 5
    slope = _log_slope(t[high], ratio)
    monotone, _ = _nondecreasing(ratio[::-1])
    report.hypotheses["f2"] = HypothesisCheck(
        "f2", bool(monotone and slope < 0), f"log-slope of f/t^5 at the top decade is {slope:.4g}", -slope)

    # (f3): F(t)/t^4 grows without bound
    ratio = F[high] / t[high] ** 4
    slope = _log_slope(t[high], ratio)
    monotone, _ = _nondecreasing(ratio)
    report.hypotheses["f3"] = HypothesisCheck(
        "f3", bool(monotone and slope > 0), f"log-slope of F/t^4 at the top decade is {slope:.4g}", slope)

    # (f4): 0 < 3 f t <= f' t^2
    lhs, rhs = 3.0 * f * t, fp * t ** 2
    gap = (rhs - lhs) / np.maximum(np.abs(rhs), np.finfo(float).tiny)
    worst_gap = float(np.min(gap))
    report.hypotheses["f4"] = HypothesisCheck(
        "f4", bool(np.all(lhs > 0) and worst_gap >= -_MONOTONE_RTOL),
        f"min relative margin of f' t^2 - 3 f t is {worst_gap:.4g}", worst_gap)

    passed, worst = _nondecreasing(f / t ** 3)
    report.consequences["f_over_cube_nondecreasing"] = HypothesisCheck(
        "f_over_cube_nondecreasing", passed, f"worst relative drop {worst:.3g}", -worst)
    passed, worst = _nondecreasing(f * t - 4.0 * F)
    report.consequences["nehari_gap_nondecreasing"] = HypothesisCheck(
        "nehari_gap_nondecreasing", passed, f"worst relative drop {worst:.3g}", -worst)
    report.consequences["f_nonnegative_on_positive_axis"] = HypothesisCheck(
        "f_nonnegative_on_positive_axis", bool(np.all(f >= 0)), "", float(np.min(f)))
    both = np.concatenate([m.F(-t), F])
    report.consequences["primitive_nonnegative"] = HypothesisCheck(
        "primitive_nonnegative", bool(np.all(both >= 0)), "", float(np.min(both)))

    # AR check: theta F <= f t for some theta > 4 needs f t / F bounded away from 4
    theta = f[high] * t[high] / F[high]
    trend = float(theta[-1] - theta[0])
    holds = bool(np.min(theta) > 4.0 and trend >= -_MONOTONE_RTOL * abs(theta[0]))
    report.ambrosetti_rabinowitz = HypothesisCheck(
        "ambrosetti_rabinowitz", holds,
        f"f t / F at the top decade falls from {theta[0]:.4g} to {theta[-1]:.4g}", float(np.min(theta)))

    failed = report.failed_hypotheses
    if failed:
        logger.info(f"Hypotheses failed for {m.to_dict()}: {sorted(failed)}")
    return report
