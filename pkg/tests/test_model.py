"""
Tests for the nonlinearities, potentials and hypothesis checks
"""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as quadrature

from services.errors import InvalidParameterError, UndefinedAtZeroError
from services.grid import ScalarField, make_grid
from services.model import (
    F_eval, ModelParams, Nonlinearity, Potential, _log_primitive, apply_F, apply_f, check_hypotheses, f_eval,
    fprime_eval
)

SAMPLES = np.geomspace(1e-4, 1e4, 81)

POWER = Nonlinearity("power", 5.0)
LOGPOWER = Nonlinearity("logpower")

magnitudes = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False, allow_infinity=False)


class TestNonlinearity:
    """Test model construction and closed forms"""

    def test_logpower_drops_exponent(self):
        """Test the logpower model carries no exponent"""
        assert Nonlinearity("logpower", 5.0).p is None

    @pytest.mark.parametrize("kind,p", [("cubic", 5.0), ("power", 2.0), ("power", None), ("power", np.nan)])
    def test_invalid(self, kind, p):
        """Test unknown kinds and exponents p <= 2 are rejected"""
        with pytest.raises(InvalidParameterError):
            Nonlinearity(kind, p)

    def test_admissible(self):
        """Test only 4 < p < 6 and logpower are admissible"""
        assert POWER.admissible and LOGPOWER.admissible
        assert not Nonlinearity("power", 3.5).admissible
        assert not Nonlinearity("power", 6.0).admissible

    def test_power_values(self):
        """Test f(2) = 2^(p-1) and F(2) = 2^p / p"""
        assert float(POWER.f(2.0)) == pytest.approx(16.0)
        assert float(POWER.F(-2.0)) == pytest.approx(32.0 / 5.0)
        assert float(POWER.fprime(2.0)) == pytest.approx(4.0 * 8.0)

    @pytest.mark.parametrize("a", [1e-3, 0.05, 0.0999, 0.1, 0.5, 3.0, 40.0])
    def test_log_primitive_matches_quadrature(self, a):
        """Test the series and closed-form branches against adaptive quadrature"""
        expected, _ = quadrature.quad(lambda s: s ** 3 * np.log1p(s), 0.0, a, epsabs=0.0, epsrel=1e-13)
        assert float(_log_primitive(a)) == pytest.approx(expected, rel=1e-10)

    def test_scalar_evaluators(self):
        """Test f_eval and F_eval for both models, including the odd and even symmetry"""
        assert float(f_eval(POWER, -1.5)) == pytest.approx(-(1.5 ** 4))
        assert float(F_eval(POWER, -1.5)) == pytest.approx(1.5 ** 5 / 5.0)
        assert float(f_eval(LOGPOWER, 1.0)) == pytest.approx(np.log(2.0))
        assert float(f_eval(LOGPOWER, 0.0)) == 0.0
        assert float(F_eval(LOGPOWER, 0.0)) == 0.0

    def test_logpower_exactly_odd_on_arrays(self):
        """Test f(-t) = -f(t) bit for bit on a wide spread of magnitudes"""
        values = np.random.default_rng(5).standard_normal(4096) * np.geomspace(1e-6, 1e6, 4096)
        assert np.array_equal(LOGPOWER.f(-values), -LOGPOWER.f(values))
        assert np.array_equal(LOGPOWER.F(-values), LOGPOWER.F(values))

    def test_fprime_undefined_at_zero(self):
        """Test f'(0) is refused"""
        with pytest.raises(UndefinedAtZeroError):
            fprime_eval(POWER, np.array([1.0, 0.0]))
        assert fprime_eval(LOGPOWER, 1.0) == pytest.approx(3.0 * np.log(2.0) + 0.5)

    def test_nodewise_application(self):
        """Test f and F are applied nodewise to fields"""
        grid = make_grid(2.0, 8)
        u = ScalarField.constant(grid, -2.0)
        assert np.allclose(apply_f(POWER, u).values, -16.0)
        assert np.allclose(apply_F(POWER, u).values, 32.0 / 5.0)


class TestNonlinearityProperties:
    """Property tests over random arguments"""

    @settings(max_examples=200, deadline=None)
    @given(t=magnitudes, model=st.sampled_from([POWER, LOGPOWER, Nonlinearity("power", 4.5)]))
    def test_odd_and_even(self, t, model):
        """Test f is odd, F is even and nonnegative"""
        assert float(model.f(-t)) == -float(model.f(t))
        assert float(model.F(-t)) == float(model.F(t))
        assert float(model.F(t)) >= 0

    @settings(max_examples=100, deadline=None)
    @given(t=st.floats(min_value=0.2, max_value=50.0), model=st.sampled_from([POWER, LOGPOWER]))
    def test_primitive_derivative(self, t, model):
        """Test F' = f by central differences"""
        step = 1e-5 * t
        numeric = (float(model.F(t + step)) - float(model.F(t - step))) / (2 * step)
        assert numeric == pytest.approx(float(model.f(t)), rel=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(t=st.floats(min_value=0.01, max_value=50.0), model=st.sampled_from([POWER, LOGPOWER]))
    def test_derivative(self, t, model):
        """Test f' by central differences"""
        step = 1e-5 * t
        numeric = (float(model.f(t + step)) - float(model.f(t - step))) / (2 * step)
        assert numeric == pytest.approx(float(model.fprime(t)), rel=1e-6)

    @settings(max_examples=100, deadline=None)
    @given(t=magnitudes, model=st.sampled_from([POWER, LOGPOWER]))
    def test_cubic_growth_condition(self, t, model):
        """Test 0 < 3 f(t) t <= f'(t) t^2"""
        lhs = 3.0 * float(model.f(t)) * t
        assert 0 < lhs <= float(model.fprime(t)) * t ** 2 * (1 + 1e-12)


class TestPotentialAndParams:
    """Test potential and parameter validation"""

    def test_harmonic_values(self):
        """Test V = v0 + omega |x|^2 on the grid"""
        grid = make_grid(2.0, 8)
        values = Potential(v0=2.0, omega=0.5).evaluate(grid)
        assert values.min() == 2.0
        assert values[0, 0, 0] == pytest.approx(2.0 + 0.5 * 12.0)

    @pytest.mark.parametrize("kwargs", [{"kind": "coulomb"}, {"v0": 0.0}, {"omega": -0.1}])
    def test_invalid_potential(self, kwargs):
        """Test invalid potentials are rejected"""
        with pytest.raises(InvalidParameterError):
            Potential(**kwargs)

    @pytest.mark.parametrize("kwargs", [{"a": 0.0}, {"a": -1.0}, {"q": np.inf}])
    def test_invalid_params(self, kwargs):
        """Test a <= 0 and non-finite q are rejected"""
        with pytest.raises(InvalidParameterError):
            ModelParams(**kwargs)

    def test_to_dict(self):
        """Test the serialized model"""
        assert ModelParams(q=0.5).to_dict() == {
            "a": 1.0,
            "q": 0.5,
            "nonlinearity": {"kind": "power", "p": 5.0},
            "potential": {"kind": "harmonic", "v0": 1.0, "omega": 0.25},
        }


class TestCheckHypotheses:
    """Test the hypothesis and consequence verdicts"""

    @pytest.mark.parametrize("model", [POWER, Nonlinearity("power", 4.5), Nonlinearity("power", 5.9), LOGPOWER])
    def test_admissible_models_pass(self, model):
        """Test (f1)-(f4) and their consequences hold for the admissible models"""
        report = check_hypotheses(model, SAMPLES)
        assert report.all_passed, report.to_dict()

    def test_power_below_four_fails_growth_conditions(self):
        """Test p = 3.5 fails (f3) and (f4) only"""
        report = check_hypotheses(Nonlinearity("power", 3.5), SAMPLES)
        assert report.failed_hypotheses == {"f3", "f4"}
        assert report.hypotheses["f1"].passed
        assert report.hypotheses["f2"].passed
        assert not report.consequences["f_over_cube_nondecreasing"].passed
        assert not report.consequences["nehari_gap_nondecreasing"].passed

    def test_power_above_six_fails_subcritical_growth(self):
        """Test p = 6.5 fails (f2)"""
        report = check_hypotheses(Nonlinearity("power", 6.5), SAMPLES)
        assert "f2" in report.failed_hypotheses

    def test_ambrosetti_rabinowitz_check(self):
        """Test the check holds for powers and fails for the logarithmic model"""
        assert check_hypotheses(POWER, SAMPLES).ambrosetti_rabinowitz.passed
        verdict = check_hypotheses(LOGPOWER, SAMPLES).ambrosetti_rabinowitz
        assert not verdict.passed
        assert verdict.margin > 4.0

    @pytest.mark.parametrize("samples", [
        [1.0, 2.0, 3.0],
        [1e-3, 1e-2, 1e-1, 1.0],
        [-1.0, 1.0, 1e2, 1e4],
        [1e-4, 1e-2, 1e-3, 1e4],
    ])
    def test_invalid_samples(self, samples):
        """Test short, narrow, negative and unsorted sample sets are rejected"""
        with pytest.raises(InvalidParameterError):
            check_hypotheses(POWER, samples)

    def test_report_serialization(self):
        """Test the report lists every verdict"""
        data = check_hypotheses(POWER, SAMPLES).to_dict()
        assert set(data["hypotheses"]) == {"f1", "f2", "f3", "f4"}
        assert set(data["consequences"]) == {
            "f_over_cube_nondecreasing", "nehari_gap_nondecreasing",
            "f_nonnegative_on_positive_axis", "primitive_nonnegative",
        }
        assert data["ambrosetti_rabinowitz"]["pass"] is True
