"""
Test per la nonlinearità troncata e la costante di contrazione
"""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.exceptions import ConvergenceError, ValidationError
from src.nonlinear import (NonlinearitySpec, audit_lipschitz, certify_lipschitz, chi,
                           choose_truncation_radius, lipschitz_estimate, minimum_grid_size,
                           power_f, sc_constant, theorem_sigma_ceiling, truncated_f)
from src.spectral import SpectralVector, build_sine_model, coeffs_to_unit_sine, unit_sine_to_coeffs


class TestNonlinearitySpec:

    def test_defaults(self):
        """Test valori predefiniti"""
        spec = NonlinearitySpec()
        assert spec.p == 2.0
        assert spec.R is None
        assert spec.l_F is None

    def test_invalid(self):
        """Test parametri non validi"""
        with pytest.raises(ValidationError):
            NonlinearitySpec(p=1.0)
        with pytest.raises(ValidationError):
            NonlinearitySpec(p=2.5)
        with pytest.raises(ValidationError):
            NonlinearitySpec(R=-1.0)
        with pytest.raises(ValidationError):
            NonlinearitySpec(safety_factor=0.5)

    def test_signed_power_allows_real_p(self):
        """Test p reale con |u|^{p-1} u"""
        assert NonlinearitySpec(p=2.5, signed_power=True).p == 2.5

    def test_with_radius_resets_lipschitz(self):
        """Test cambio di R invalida l_F"""
        spec = NonlinearitySpec(R=1.0, l_F=3.0).with_radius(0.5)
        assert spec.R == 0.5
        assert spec.l_F is None

    def test_require_radius(self):
        """Test R mancante"""
        with pytest.raises(ValidationError):
            NonlinearitySpec().require_radius()


class TestCutoff:

    def test_plateau_and_support(self):
        """Test chi = 1 su [0, 1], chi = 0 oltre 2"""
        assert chi(0.0) == 1.0
        assert chi(1.0) == 1.0
        assert chi(2.0) == 0.0
        assert chi(5.0) == 0.0

    def test_midpoint_symmetry(self):
        """Test chi(1.5) = 1/2"""
        assert chi(1.5) == pytest.approx(0.5)

    @given(st.floats(min_value=0, max_value=3), st.floats(min_value=0, max_value=3))
    def test_monotone(self, s, t):
        """Test chi non crescente con valori in [0, 1]"""
        low, high = min(s, t), max(s, t)
        assert 0.0 <= chi(high) <= chi(low) + 1e-12
        assert chi(low) <= 1.0

    def test_array_input(self):
        """Test valutazione vettoriale"""
        values = chi(np.array([0.5, 1.5, 2.5]))
        assert isinstance(values, np.ndarray)
        np.testing.assert_allclose(values, [1.0, 0.5, 0.0])


class TestPower:

    def setup_method(self):
        """Setup per ogni test"""
        self.model = build_sine_model(8, 3.0, grid_size=1024)
        self.spec = NonlinearitySpec(p=2)

    def test_square_of_first_mode(self):
        """Test sin^2 x = sum b_k sin kx con b_1 = 8/(3 pi), b_3 = -8/(15 pi), b_2 = 0"""
        v = unit_sine_to_coeffs(np.eye(8)[0], self.model)
        amplitudes = coeffs_to_unit_sine(power_f(v, self.spec, self.model))
        assert amplitudes[0] == pytest.approx(8.0 / (3.0 * math.pi), abs=1e-8)
        assert amplitudes[1] == pytest.approx(0.0, abs=1e-12)
        assert amplitudes[2] == pytest.approx(-8.0 / (15.0 * math.pi), abs=1e-8)
        assert amplitudes[4] == pytest.approx(-8.0 / (105.0 * math.pi), abs=1e-8)

    def test_homogeneity(self):
        """Test F(c v) = c^p F(v)"""
        v = SpectralVector(np.linspace(0.1, 0.8, 8))
        lhs = power_f(v * 3.0, self.spec, self.model)
        rhs = power_f(v, self.spec, self.model) * 9.0
        np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, rtol=1e-10, atol=1e-12)

    def test_signed_power_is_odd(self):
        """Test |u|^{p-1} u dispari"""
        spec = NonlinearitySpec(p=2.5, signed_power=True)
        v = SpectralVector(np.linspace(0.1, 0.8, 8))
        np.testing.assert_allclose(power_f(-v, spec, self.model).coeffs,
                                   -power_f(v, spec, self.model).coeffs, atol=1e-14)

    def test_grid_too_coarse(self):
        """Test griglia insufficiente per il dealiasing"""
        model = build_sine_model(8, 3.0, grid_size=16)
        assert minimum_grid_size(2, 8) == 12
        power_f(SpectralVector.basis(1, model), self.spec, model)
        with pytest.raises(ValidationError):
            power_f(SpectralVector.basis(1, model), NonlinearitySpec(p=5), model)


class TestTruncation:

    def setup_method(self):
        """Setup per ogni test"""
        self.model = build_sine_model(8, 3.0)
        self.spec = NonlinearitySpec(p=2, R=0.1)

    def test_inside_plateau(self):
        """Test F^(R) = F per |v|_alpha <= R"""
        v = SpectralVector.basis(1, self.model, 0.05)
        np.testing.assert_array_equal(truncated_f(v, self.spec, self.model).coeffs,
                                      power_f(v, self.spec, self.model).coeffs)

    def test_outside_support(self):
        """Test F^(R) = 0 per |v|_alpha >= 2R"""
        v = SpectralVector.basis(1, self.model, 0.25)
        assert np.all(truncated_f(v, self.spec, self.model).coeffs == 0.0)

    def test_requires_radius(self):
        """Test troncamento senza R"""
        with pytest.raises(ValidationError):
            truncated_f(SpectralVector.zeros(self.model), NonlinearitySpec(), self.model)


class TestLipschitz:

    def setup_method(self):
        """Setup per ogni test"""
        self.model = build_sine_model(8, 3.0)

    def test_minimum_pairs(self):
        """Test almeno 1000 coppie"""
        with pytest.raises(ValidationError):
            lipschitz_estimate(NonlinearitySpec(R=0.1), self.model, n_pairs=100)

    def test_scales_linearly_for_square(self):
        """Test l_F proporzionale a R per p = 2"""
        small = lipschitz_estimate(NonlinearitySpec(R=0.1), self.model, seed=3)
        large = lipschitz_estimate(NonlinearitySpec(R=0.2), self.model, seed=3)
        assert small > 0.0
        assert large / small == pytest.approx(2.0, rel=1e-9)

    def test_reproducible(self):
        """Test stesso seme, stessa stima"""
        spec = NonlinearitySpec(R=0.1)
        assert lipschitz_estimate(spec, self.model, seed=5) == lipschitz_estimate(spec, self.model, seed=5)

    def test_certified_audit_clean(self):
        """Test nessuna violazione sulle coppie di audit dopo la certificazione"""
        spec = certify_lipschitz(NonlinearitySpec(R=0.1), self.model)
        assert spec.l_F is not None
        assert audit_lipschitz(spec, self.model, n_pairs=10000, seed=1) == 0

    def test_audit_requires_lipschitz(self):
        """Test audit senza l_F"""
        with pytest.raises(ValidationError):
            audit_lipschitz(NonlinearitySpec(R=0.1), self.model)


class TestContraction:

    def setup_method(self):
        """Setup per ogni test"""
        self.model = build_sine_model(8, 3.0)

    def test_sc_constant(self):
        """Test SC con alpha = 0 e beta = -1/2"""
        assert sc_constant(1.0, 1.0, 0.0, -0.5, -2.0, 1.0) == pytest.approx(4.0 / 3.0)

    def test_sc_with_alpha(self):
        """Test termine Gamma(1 - alpha)"""
        value = sc_constant(1.0, 1.0, 0.5, -0.5, -2.0, 1.0)
        assert value == pytest.approx(1.0 / 1.5 + math.sqrt(math.pi) / math.sqrt(1.5))

    def test_sc_beta_window(self):
        """Test beta fuori da (lambda_u, lambda_s)"""
        with pytest.raises(ValidationError):
            sc_constant(1.0, 1.0, 0.0, -2.0, -2.0, 1.0)

    def test_choose_truncation_radius(self):
        """Test bisezione su R con SC in [target/2, target]"""
        spec, sc = choose_truncation_radius(0.5, NonlinearitySpec(p=2), self.model, -0.5)
        assert 0.25 <= sc <= 0.5
        assert spec.R is not None and spec.l_F is not None
        assert sc == pytest.approx(sc_constant(1.0, spec.l_F, 0.0, -0.5, -2.0, 1.0))

    def test_invalid_target(self):
        """Test target_sc fuori da (0, 1)"""
        with pytest.raises(ValidationError):
            choose_truncation_radius(1.5, NonlinearitySpec(p=2), self.model, -0.5)

    def test_unreachable_target(self):
        """Test target non raggiungibile nell'intervallo di R"""
        with pytest.raises(ConvergenceError):
            choose_truncation_radius(1e-15, NonlinearitySpec(p=2), self.model, -0.5)

    def test_sigma_ceiling(self):
        """Test soglia min{(lambda_s - (p-1) lambda_u)/p, -lambda_u}"""
        assert theorem_sigma_ceiling(-2.0, 1.0, 2.0) == pytest.approx(1.5)
        assert theorem_sigma_ceiling(-0.5, 1.0, 2.0) == pytest.approx(0.5)
