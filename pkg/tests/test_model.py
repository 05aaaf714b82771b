import math

import numpy as np
import pytest

from resolvent_lab import (ModelParams, Modulator, PhaseState, Potential,
                           db_inequality_margin, detailed_balance_residual,
                           escape_rate, escape_rate_quadrature, hamiltonian,
                           jump_kernel, levy_density, modulator_eval,
                           regime_classify)

COS1 = Potential.cosine(1.0)
ZERO = Potential.zero()


class TestPotential:
    def test_cosine_shape(self):
        assert COS1.sup_v == 1.0
        assert COS1.inf_v == 0.0
        assert COS1.value(0.0) == pytest.approx(0.0)
        assert COS1.value(0.5) == pytest.approx(1.0)
        # periodicity
        x = np.linspace(0, 1, 17)
        assert np.allclose(COS1.value(x), COS1.value(x + 3.0))

    def test_derivative_consistency(self):
        assert COS1.derivative_consistency() < 1e-6
        assert ZERO.derivative_consistency() == 0.0

    def test_tabulated_roundtrip(self):
        x = np.arange(512) / 512.0
        pot = Potential.tabulated(x, COS1.value(x), COS1.slope(x))
        assert abs(pot.value(0.3) - COS1.value(0.3)) < 1e-4
        assert pot.sup_v == pytest.approx(1.0, abs=1e-4)

    def test_tabulated_rejects_inconsistent_slope(self):
        x = np.arange(512) / 512.0
        with pytest.raises(ValueError, match="inconsistent"):
            Potential.tabulated(x, COS1.value(x), 2.5 * COS1.slope(x))


class TestHamiltonian:
    def test_zero_potential_cases(self):
        assert hamiltonian(PhaseState(0.25, 0.0), ZERO) == 0.0
        assert hamiltonian(PhaseState(0.0, 2.0), ZERO) == 2.0

    def test_cosine_case(self):
        # 1/2 + (1/2)(1 - cos pi) = 1.5
        assert hamiltonian(PhaseState(0.5, 1.0), COS1) == pytest.approx(1.5)

    def test_x_reduced_mod_one(self):
        assert PhaseState(1.25, 0.0).x == pytest.approx(0.25)
        assert PhaseState(-0.25, 0.0).x == pytest.approx(0.75)


class TestJumpKernel:
    def test_diagonal_vanishes(self):
        for lam in (0.0, 0.3, 1.0):
            assert jump_kernel(lam, 3.0, 3.0) == 0.0

    def test_levy_limit_value(self):
        assert jump_kernel(0.0, 0.0, 2.0) == pytest.approx(2.0 * math.exp(-0.5))

    def test_levy_reduction(self):
        rng = np.random.default_rng(7)
        p = rng.normal(0, 4, 200)
        q = rng.normal(0, 4, 200)
        assert np.allclose(jump_kernel(0.0, p, q), levy_density(q - p), rtol=0, atol=1e-14)

    def test_nonnegative(self):
        rng = np.random.default_rng(8)
        vals = jump_kernel(rng.uniform(0, 1, 500), rng.normal(0, 6, 500), rng.normal(0, 6, 500))
        assert (vals >= 0).all()


class TestLevyDensity:
    def test_values(self):
        assert levy_density(0.0) == 0.0
        assert levy_density(2.0) == pytest.approx(2.0 * math.exp(-0.5))

    def test_total_mass_is_eight(self):
        from scipy import integrate
        val, _ = integrate.quad(levy_density, -60, 60, limit=200)
        assert val == pytest.approx(8.0, rel=1e-10)


class TestEscapeRate:
    def test_lambda_zero_is_eight(self):
        p = np.linspace(-40, 40, 11)
        assert np.allclose(escape_rate(0.0, p), 8.0, rtol=1e-14)

    def test_quadrature_examples(self):
        assert escape_rate_quadrature(0.0, 5.0, 1e-10) == pytest.approx(8.0, abs=1e-9)
        assert escape_rate_quadrature(0.5, 0.0, 1e-10) == pytest.approx(8.0 / 1.5, abs=1e-9)
        assert escape_rate_quadrature(1.0, 0.0, 1e-10) == pytest.approx(4.0, abs=1e-9)

    def test_closed_form_vs_quadrature(self):
        # the validation the closed form must pass before anything may use it
        for lam in (0.0, 0.1, 0.25, 0.5, 1.0):
            pmax = 8.0 / lam if lam > 0 else 8.0
            for p in np.linspace(0.0, pmax, 12):
                oracle = escape_rate_quadrature(lam, float(p), 1e-12)
                assert abs(escape_rate(lam, p) - oracle) <= 1e-8 * oracle

    def test_envelope_prop_ratio(self):
        # E(p) / max(1, lam |p|) bounded with spread < 10 across the sweep
        ratios = []
        for lam in (0.1, 0.25, 0.5, 1.0):
            p = np.linspace(0.0, 8.0 / lam, 60)
            ratios.append(escape_rate(lam, p) / np.maximum(1.0, lam * np.abs(p)))
        ratios = np.concatenate(ratios)
        assert ratios.min() > 0
        assert ratios.max() / ratios.min() < 10.0


class TestModulator:
    def test_energy_indicator_inclusive(self):
        params = ModelParams(lam=0.5, potential=COS1)  # l = 3
        h = Modulator.energy_indicator()
        assert modulator_eval(h, PhaseState(0.5, 0.0), params) == 1.0  # H = 1
        assert modulator_eval(h, PhaseState(0.0, 3.0), params) == 0.0  # H = 4.5
        # boundary is inclusive: H exactly at the level still counts
        zparams = ModelParams(lam=0.5, potential=ZERO)
        h2 = Modulator.energy_indicator(level=2.0)
        assert modulator_eval(h2, PhaseState(0.0, 2.0), zparams) == 1.0  # H = 2 = level

    def test_scaled_indicator(self):
        params = ModelParams(lam=0.5, potential=ZERO)
        h2 = Modulator.energy_indicator(scale=2.0)
        assert modulator_eval(h2, PhaseState(0.0, 0.0), params) == 2.0


class TestRegimes:
    def test_examples(self):
        assert regime_classify(0.1, 100.0) == "contractive"
        assert regime_classify(0.1, 10.0) == "drift"
        assert regime_classify(0.1, 1.0) == "random_walk"

    def test_rejects_lambda_zero(self):
        with pytest.raises(ValueError):
            regime_classify(0.0, 1.0)


class TestDetailedBalance:
    def test_identity_sweep(self):
        rng = np.random.default_rng(123)
        lam = rng.uniform(0, 1, 10_000)
        p = rng.normal(0, 5, 10_000)
        q = rng.normal(0, 5, 10_000)
        res = detailed_balance_residual(lam, p, q)
        assert np.abs(res).max() <= 1e-12

    def test_specific_points(self):
        assert detailed_balance_residual(0.0, 1.0, 2.0) == 0.0
        assert abs(detailed_balance_residual(0.5, 1.0, 2.0)) <= 1e-14
        assert abs(detailed_balance_residual(0.9, -3.0, 7.0)) <= 1e-14

    def test_inequality_margin_sweep(self):
        rng = np.random.default_rng(321)
        lam = rng.uniform(1e-12, 1, 100_000)
        p = rng.normal(0, 5, 100_000)
        q = rng.normal(0, 5, 100_000)
        assert db_inequality_margin(lam, p, q).min() >= -1e-12

    def test_margin_zero_on_diagonal_positive_off(self):
        assert db_inequality_margin(0.4, 2.0, 2.0) == 0.0
        assert db_inequality_margin(0.5, 2.0, 0.0) > 0.0
