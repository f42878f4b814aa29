"""
Tests for the Nehari projection and the nodal projection
"""
import numpy as np
import pytest

from services.energy import evaluate_J, nehari_residual
from services.errors import BracketError, DegenerateSignPartError, InvalidParameterError, ZeroFieldError
from services.grid import ScalarField, h1v_norm_sq, lp_norm, make_grid
from services.model import ModelParams, Nonlinearity
from services.nehari import (
    PROJECTION_TOL, Fiber, fibering, miranda_box, nodal_breakdown, nodal_coefficients, nodal_energy,
    project_ground, project_nodal, sign_split, solve_fiber, solve_nodal_system, xi
)


def gaussian(grid, center=(0.0, 0.0, 0.0), sigma=0.8, amplitude=1.0):
    cx, cy, cz = center
    return ScalarField.from_function(grid, lambda x, y, z: amplitude * np.exp(
        -((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2) / (2 * sigma ** 2)))


def dipole(grid, offset=1.0, sigma=0.7):
    """Antisymmetric two-lobe field, w(-x) = -w(x) on the discrete torus"""
    lobe = gaussian(grid, center=(offset, 0.0, 0.0), sigma=sigma)
    return 0.5 * (lobe - lobe.reflected())


class TestFibering:
    """Test the fiber map h_u(t) = J(tu)"""

    def setup_method(self):
        """Setup grid, model and field for each test"""
        self.grid = make_grid(4.0, 16)
        self.model = ModelParams(a=1.0, q=1.0)
        self.u = gaussian(self.grid, sigma=0.9, amplitude=0.7)

    @pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
    def test_matches_energy(self, t):
        """Test h(t) = J(tu) and t h'(t) = <J'(tu), tu>"""
        h, dh = fibering(self.u, t, self.model)
        assert h == pytest.approx(evaluate_J(t * self.u, self.model).total, rel=1e-12)
        assert t * dh == pytest.approx(nehari_residual(t * self.u, self.model), rel=1e-10)

    def test_nonpositive_parameter(self):
        """Test t <= 0 is rejected"""
        with pytest.raises(InvalidParameterError):
            fibering(self.u, 0.0, self.model)

    def test_zero_field(self):
        """Test the zero field has no projection"""
        with pytest.raises(ZeroFieldError):
            project_ground(ScalarField.zeros(self.grid), self.model)

    def test_breakdown_matches_energy(self):
        """Test the quartic decomposition reproduces every energy term"""
        fiber = Fiber.from_field(self.u, self.model)
        expected = evaluate_J(1.7 * self.u, self.model)
        actual = fiber.breakdown(1.7)
        assert actual.kinetic_potential == pytest.approx(expected.kinetic_potential, rel=1e-12)
        assert actual.nonlocal_energy == pytest.approx(expected.nonlocal_energy, rel=1e-12)
        assert actual.nonlinear == pytest.approx(expected.nonlinear, rel=1e-12)


class TestProjectGround:
    """Test the unique fiber maximum"""

    def setup_method(self):
        """Setup grid and field for each test"""
        self.grid = make_grid(4.0, 16)
        self.u = gaussian(self.grid, center=(0.3, 0.0, -0.2), sigma=0.9, amplitude=0.5)

    def test_local_limit_closed_form(self):
        """Test t_u = (||u||^2 / ||u||_p^p)^(1/(p-2)) for q = 0"""
        model = ModelParams(q=0.0, nonlinearity=Nonlinearity("power", 5.0))
        expected = (h1v_norm_sq(self.u, model.potential) / lp_norm(self.u, 5.0) ** 5) ** (1.0 / 3.0)
        t, projected, diag = project_ground(self.u, model)
        assert t == pytest.approx(expected, rel=1e-9)
        assert diag.residual <= PROJECTION_TOL
        assert np.allclose(projected.values, t * self.u.values)

    @pytest.mark.parametrize("model", [
        ModelParams(a=1.0, q=1.0),
        ModelParams(a=1.0, q=0.25, nonlinearity=Nonlinearity("logpower")),
        ModelParams(a=2.0, q=1.0, nonlinearity=Nonlinearity("power", 4.2)),
    ])
    def test_residual_and_fixed_point(self, model):
        """Test <J'(t_u u), t_u u> vanishes and the projection is idempotent"""
        t, projected, diag = project_ground(self.u, model)
        fiber = Fiber.from_field(self.u, model)
        assert abs(fiber.dh(t)) <= PROJECTION_TOL * fiber.scale(t)
        t_again, _, _ = project_ground(projected, model)
        assert t_again == pytest.approx(1.0, rel=1e-8)

    def test_projection_maximizes_fiber(self):
        """Test h(t_u) >= h(t) on a log-spaced sweep"""
        model = ModelParams(a=1.0, q=1.0)
        t, _, _ = project_ground(self.u, model)
        fiber = Fiber.from_field(self.u, model)
        peak = fiber.h(t)
        assert all(fiber.h(s) <= peak * (1 + 1e-12) for s in np.geomspace(t / 100, t * 100, 101))
        assert peak > 0

    def test_sign_samples_unimodal(self):
        """Test h' > 0 before t_u and h' < 0 after it"""
        _, _, diag = project_ground(self.u, ModelParams(a=1.0, q=1.0), samples=24)
        assert len(diag.sign_samples) == 24
        assert diag.unimodal
        assert set(diag.to_dict()) == {"t_u", "bracket", "iterations", "residual"}

    def test_scaling_invariance(self):
        """Test t_{cu} = t_u / c"""
        model = ModelParams(a=1.0, q=1.0)
        t, _, _ = project_ground(self.u, model)
        t_scaled, _, _ = project_ground(4.0 * self.u, model)
        assert t_scaled == pytest.approx(t / 4.0, rel=1e-8)

    def test_power_below_four_has_no_maximum(self):
        """Test p = 3.5 with q != 0 leaves h' positive on every bracket"""
        model = ModelParams(a=1.0, q=1.0, nonlinearity=Nonlinearity("power", 3.5))
        with pytest.raises(BracketError):
            solve_fiber(Fiber.from_field(self.u, model))


class TestSignSplit:
    """Test the nodewise sign decomposition"""

    def test_parts(self):
        """Test w = w+ + w-, disjoint supports and signs"""
        grid = make_grid(4.0, 8)
        w = ScalarField(grid, np.random.default_rng(1).standard_normal(grid.shape))
        plus, minus = sign_split(w)
        assert np.array_equal((plus + minus).values, w.values)
        assert plus.min >= 0 and minus.max <= 0
        assert not np.any((plus.values != 0) & (minus.values != 0))


class TestProjectNodal:
    """Test the two-parameter projection onto the nodal set"""

    def setup_method(self):
        """Setup grid, model and dipole for each test"""
        self.grid = make_grid(4.0, 16)
        self.model = ModelParams(a=1.0, q=1.0)
        self.w = 0.6 * dipole(self.grid)

    def test_reduced_system_solved(self):
        """Test both components of xi vanish at the projection"""
        t, s, _, coeffs = project_nodal(self.w, self.model)
        xi1, xi2 = xi(coeffs, t, s)
        scale1, scale2 = coeffs.scales(t, s)
        assert abs(xi1) <= PROJECTION_TOL * scale1
        assert abs(xi2) <= PROJECTION_TOL * scale2

    def test_coefficient_energy_matches_functional(self):
        """Test mu(t, s) from the coefficients equals J(t w+ + s w-)"""
        plus, minus = sign_split(self.w)
        coeffs = nodal_coefficients(plus, minus, self.model)
        for t, s in [(0.5, 1.3), (1.0, 1.0), (2.0, 0.7)]:
            expected = evaluate_J(t * plus + s * minus, self.model)
            actual = nodal_breakdown(coeffs, t, s)
            assert actual.kinetic_potential == pytest.approx(expected.kinetic_potential, rel=1e-10)
            assert actual.nonlocal_energy == pytest.approx(expected.nonlocal_energy, rel=1e-10)
            assert actual.nonlinear == pytest.approx(expected.nonlinear, rel=1e-10)
            assert nodal_energy(coeffs, t, s) == pytest.approx(expected.total, rel=1e-10, abs=1e-12)

    def test_symmetric_dipole_gives_equal_scalings(self):
        """Test t = s when w(-x) = -w(x)"""
        t, s, _, _ = project_nodal(self.w, self.model)
        assert t == pytest.approx(s, rel=1e-9)

    def test_fixed_point(self):
        """Test projecting a projected field returns (1, 1)"""
        _, _, projected, _ = project_nodal(self.w, self.model)
        t, s, _, _ = project_nodal(projected, self.model)
        assert t == pytest.approx(1.0, rel=1e-8)
        assert s == pytest.approx(1.0, rel=1e-8)

    def test_projection_is_local_maximum(self):
        """Test mu(t, s) <= mu(t*, s*) on a window around the projection"""
        t, s, _, coeffs = project_nodal(self.w, self.model)
        peak = nodal_energy(coeffs, t, s)
        for a in np.linspace(0.7, 1.3, 13):
            for b in np.linspace(0.7, 1.3, 13):
                assert nodal_energy(coeffs, a * t, b * s) <= peak + 1e-12 * abs(peak)

    def test_miranda_box_edge_signs(self):
        """Test xi is positive on the lower edges and negative on the upper edges"""
        plus, minus = sign_split(self.w)
        coeffs = nodal_coefficients(plus, minus, self.model)
        lo, hi = miranda_box(coeffs)
        assert lo < hi
        assert xi(coeffs, lo, 0.5 * (lo + hi))[0] > 0
        assert xi(coeffs, hi, 0.5 * (lo + hi))[0] < 0
        t, s, _ = solve_nodal_system(coeffs)
        assert lo <= t <= hi and lo <= s <= hi

    def test_single_signed_field_rejected(self):
        """Test a field with an empty negative part is degenerate"""
        with pytest.raises(DegenerateSignPartError):
            project_nodal(gaussian(self.grid), self.model)

    def test_sign_scan_brackets_the_root(self):
        """Test a 200 x 200 sign scan of xi over the Miranda box puts the root in a crossing cell"""
        w = (gaussian(self.grid, center=(1.0, 0.0, 0.0), sigma=0.7, amplitude=0.9)
             - gaussian(self.grid, center=(-1.2, 0.3, 0.0), sigma=0.8, amplitude=0.4))
        t, s, _, coeffs = project_nodal(w, self.model)
        lo, hi = miranda_box(coeffs)
        nodes = np.linspace(lo, hi, 200)
        xi1, xi2 = xi(coeffs, nodes[:, None], nodes[None, :])

        def crosses(values):
            corners = np.stack([values[:-1, :-1], values[1:, :-1], values[:-1, 1:], values[1:, 1:]])
            return (corners.min(axis=0) <= 0) & (corners.max(axis=0) >= 0)

        rows, cols = np.nonzero(crosses(xi1) & crosses(xi2))
        width = nodes[1] - nodes[0]
        assert rows.size > 0
        assert np.all(np.abs(0.5 * (nodes[rows] + nodes[rows + 1]) - t) <= 3 * width)
        assert np.all(np.abs(0.5 * (nodes[cols] + nodes[cols + 1]) - s) <= 3 * width)
        assert t != pytest.approx(s, rel=1e-3)
