import math

import numpy as np
import pytest
from scipy import integrate

from resolvent_lab import (CurveState, ModelParams, Payoff, PhaseState,
                           Potential, SeparatrixError, curve_measure_density,
                           curve_quadrature, curve_state, escape_rate,
                           fw_escape_rate, fw_jump_kernel, fw_kernel_integral,
                           fw_skeleton_kernel, hamiltonian, hat_map,
                           jump_kernel, kappa_density, orbit_period,
                           quasi_momentum)

COS1 = ModelParams(lam=0.25, potential=Potential.cosine(1.0))
ZERO = ModelParams(lam=0.25, potential=Potential.zero())


class TestCurveState:
    def test_zero_potential(self):
        g = curve_state(PhaseState(0.3, -2.0), ZERO)
        assert g == CurveState(rho=2.0, eps=-1)

    def test_cosine_untrapped(self):
        g = curve_state(PhaseState(0.0, 2.0), COS1)  # H = 2 > sup V
        assert g.eps == 1
        assert g.rho == pytest.approx(2.0)

    def test_separatrix_rejected(self):
        with pytest.raises(SeparatrixError):
            curve_state(PhaseState(0.5, 0.0), COS1)  # H = V(1/2) = sup V

    def test_trapped_well_label(self):
        g = curve_state(PhaseState(0.05, 0.1), COS1)  # H well below sup V
        assert g.eps == 0
        assert g.rho == pytest.approx(math.sqrt(2 * hamiltonian(PhaseState(0.05, 0.1), COS1.potential)))

    def test_two_well_labels(self):
        x = np.arange(2048) / 2048.0
        v = 0.5 * (1 - np.cos(4 * np.pi * x))  # wells at x = 0 and x = 1/2
        dv = 2 * np.pi * np.sin(4 * np.pi * x)
        pot = Potential.tabulated(x, v, dv)
        params = ModelParams(lam=0.25, potential=pot)
        g0 = curve_state(PhaseState(0.01, 0.0), params)
        g1 = curve_state(PhaseState(0.51, 0.0), params)
        assert g0.eps == 0
        assert g1.eps == 1

    def test_quasi_momentum(self):
        zp = ModelParams(lam=0.25, potential=Potential.zero())  # l = 1
        assert quasi_momentum(CurveState(2.0, -1), zp) == -2.0
        assert quasi_momentum(CurveState(0.5, 1), zp) == 0.0


class TestKappaDensity:
    def test_uniform_for_zero_potential(self):
        g = CurveState(2.0, 1)
        for x in (0.0, 0.31, 0.77):
            assert kappa_density(g, x, ZERO) == pytest.approx(1.0)

    def test_smaller_at_potential_minimum(self):
        # the particle moves fastest over the minimum, so occupation is lowest
        g = CurveState(2.0, 1)
        assert kappa_density(g, 0.0, COS1) < 1.0
        assert kappa_density(g, 0.5, COS1) > kappa_density(g, 0.0, COS1)

    def test_normalised(self):
        rng = np.random.default_rng(5)
        for rho in rng.uniform(1.6, 8.0, 20):
            g = CurveState(float(rho), 1)
            val, _ = integrate.quad(lambda x: kappa_density(g, x, COS1), 0, 1, limit=100)
            assert val == pytest.approx(1.0, abs=1e-8)

    def test_trapped_rejected(self):
        with pytest.raises(ValueError, match="trapped"):
            kappa_density(CurveState(1.0, 0), 0.0, COS1)


class TestHatMap:
    def test_constant_payoff(self):
        assert hat_map(Payoff.constant(1.0), CurveState(2.0, 1), COS1) == pytest.approx(1.0)
        assert hat_map(Payoff.constant(1.0), CurveState(0.9, 0), COS1) == pytest.approx(1.0)

    def test_zero_potential_band(self):
        val = hat_map(Payoff.indicator_band(1.0, 3.0), CurveState(2.0, 1), ZERO)
        assert val == pytest.approx(1.0)

    def test_cosine_band_fraction_vs_oracle(self):
        # fraction of the rho = 2 orbit with p >= 2, arc-length weighted
        g = CurveState(2.0, 1)
        val = hat_map(Payoff.indicator_band(2.0, 100.0), g, COS1)
        pot = COS1.potential

        def arc_density(x):
            sp2 = 4.0 - 2.0 * float(pot.value(x))
            dv = float(pot.slope(x))
            return math.sqrt(sp2 + dv * dv) / math.sqrt(sp2)

        num, _ = integrate.quad(lambda x: arc_density(x) if 4.0 - 2.0 * float(pot.value(x)) >= 4.0 else 0.0, 0, 1, limit=200)
        den, _ = integrate.quad(arc_density, 0, 1, limit=200)
        assert val == pytest.approx(num / den, abs=1e-6)

    def test_orbit_measures_normalised(self):
        q = curve_quadrature(CurveState(2.5, -1), COS1)
        assert q.eta_w.sum() == pytest.approx(1.0, abs=1e-10)
        assert q.kappa_w.sum() == pytest.approx(1.0, abs=1e-10)
        assert (q.eta_w >= 0).all() and (q.kappa_w >= 0).all()

    def test_trapped_orbit_includes_both_signs(self):
        # a trapped orbit spends half its arc on each momentum sign
        g = CurveState(1.0, 0)  # H = 0.5 < sup V
        val = hat_map(Payoff.indicator_band(0.0, 10.0), g, COS1)
        assert val == pytest.approx(0.5, abs=1e-9)


class TestOrbitPeriod:
    def test_zero_potential(self):
        assert orbit_period(CurveState(2.0, 1), ZERO) == pytest.approx(0.5)

    def test_cosine_quadrature(self):
        per = orbit_period(CurveState(2.0, 1), COS1)
        val, _ = integrate.quad(
            lambda x: 1.0 / math.sqrt(4.0 - 2.0 * float(COS1.potential.value(x))), 0, 1, limit=200)
        assert per == pytest.approx(val, rel=1e-9)

    def test_measure_density_zero_potential(self):
        # push-forward of Lebesgue measure is d rho per branch when V = 0
        assert curve_measure_density(CurveState(3.0, 1), ZERO) == pytest.approx(1.0)


class TestFwKernels:
    def test_zero_potential_reduction(self):
        g, g2 = CurveState(2.0, 1), CurveState(2.7, 1)
        assert fw_jump_kernel(0.25, g, g2, ZERO) == pytest.approx(
            float(jump_kernel(0.25, 2.0, 2.7)), rel=1e-12)
        g3 = CurveState(2.7, -1)
        assert fw_jump_kernel(0.25, g, g3, ZERO) == pytest.approx(
            float(jump_kernel(0.25, 2.0, -2.7)), rel=1e-12)

    def test_escape_rate_lambda_zero_is_eight(self):
        params = ModelParams(lam=0.0, potential=Potential.cosine(1.0))
        for rho in (1.6, 2.0, 4.0, 9.0):
            assert fw_escape_rate(0.0, CurveState(rho, 1), params) == pytest.approx(8.0, abs=1e-10)

    def test_total_kernel_mass_is_escape_rate(self):
        ones = lambda r, e: np.ones_like(r)
        for lam, rho in ((0.0, 2.0), (0.25, 3.0), (0.5, 5.0)):
            g = CurveState(rho, 1)
            total = fw_kernel_integral(lam, g, ones, COS1)
            assert total == pytest.approx(fw_escape_rate(lam, g, COS1), rel=1e-10)

    def test_lambda_zero_total_mass_eight(self):
        ones = lambda r, e: np.ones_like(r)
        for rho in (1.8, 3.0, 6.0):
            total = fw_kernel_integral(0.0, CurveState(rho, 1), ones, COS1)
            assert total == pytest.approx(8.0, abs=1e-4)

    def test_zero_potential_escape_reduction(self):
        g = CurveState(3.0, -1)
        assert fw_escape_rate(0.25, g, ZERO) == pytest.approx(float(escape_rate(0.25, 3.0)), rel=1e-12)

    def test_pointwise_kernel_vs_dense_oracle(self):
        # independent dense evaluation of the same shell integral
        lam, rho, rho2 = 0.25, 4.0, 4.5
        pot = COS1.potential
        xs = (np.arange(40000) + 0.5) / 40000
        v = pot.value(xs)
        pabs = np.sqrt(rho ** 2 - 2 * v)
        kw = 1.0 / pabs
        kw /= kw.sum()
        pp = np.sqrt(rho2 ** 2 - 2 * v)
        oracle = float(np.sum(kw * jump_kernel(lam, pabs, pp) * rho2 / pp))
        val = fw_jump_kernel(lam, CurveState(rho, 1), CurveState(rho2, 1), COS1)
        assert val == pytest.approx(oracle, abs=1e-4)
        assert val > 0

    def test_two_branch_regime_refused(self):
        with pytest.raises(ValueError, match="two-branch"):
            fw_jump_kernel(0.25, CurveState(3.0, 1), CurveState(1.0, 1), COS1)

    def test_skeleton_normalisation(self):
        ones = lambda r, e: np.ones_like(r)
        rng = np.random.default_rng(11)
        for rho in rng.uniform(1.7, 9.0, 10):
            g = CurveState(float(rho), 1)
            total = fw_kernel_integral(0.25, g, ones, COS1) / fw_escape_rate(0.25, g, COS1)
            assert total == pytest.approx(1.0, abs=1e-4)

    def test_skeleton_zero_potential_levy_fold(self):
        g = CurveState(3.0, 1)
        val = fw_skeleton_kernel(0.0, g, CurveState(3.5, 1), ZERO)
        from resolvent_lab import levy_density
        assert val == pytest.approx(float(levy_density(0.5)) / 8.0, rel=1e-10)
        val_neg = fw_skeleton_kernel(0.0, g, CurveState(3.5, -1), ZERO)
        assert val_neg == pytest.approx(float(levy_density(-6.5)) / 8.0, rel=1e-10)


class TestDisintegration:
    def test_lebesgue_recovered_from_shell_averages(self):
        # int f ds == int f-hat(gamma) d gamma with the time-weighted hat map
        # and d gamma the push-forward of Lebesgue measure (density rho T(gamma)
        # per branch, realised by energy-shell quadrature in rho)
        f = Payoff.indicator_band(1.0, 3.0)
        direct = 2.0  # band area: unit torus times momentum length

        def shell_integrand(rho, eps):
            g = CurveState(float(rho), eps)
            return curve_measure_density(g, COS1) * hat_map(f, g, COS1, weight="time")

        total = 0.0
        # revolving branches: the band only meets shells with rho in (sqrt 2, sqrt 11)
        for eps in (1, -1):
            val, _ = integrate.quad(lambda r: shell_integrand(r, eps),
                                    math.sqrt(2.0) + 1e-7, math.sqrt(11.0) + 0.5,
                                    limit=300)
            total += val
        # the single trapped well: orbits with rho < sqrt 2 reach |p| up to rho
        val, _ = integrate.quad(lambda r: shell_integrand(r, 0),
                                1.0 - 1e-7, math.sqrt(2.0) - 1e-7, limit=300)
        total += val
        assert total == pytest.approx(direct, abs=1e-4)


class TestSkeletonDbInequality:
    def test_kernel_level_inequality_holds(self):
        # J-hat_lam(g, g') <= (1+lam) e^{(lam/4)(rho^2 - rho'^2)} J-hat_0(g, g'):
        # exact because p^2 - p'^2 = rho^2 - rho'^2 pointwise on shells
        lam = 0.25
        rng = np.random.default_rng(3)
        for _ in range(20):
            rho = float(rng.uniform(1.7, 4.0))
            rho2 = float(rng.uniform(1.7, 4.0))
            g, g2 = CurveState(rho, 1), CurveState(rho2, 1 if rng.uniform() < 0.5 else -1)
            lhs = fw_jump_kernel(lam, g, g2, COS1)
            rhs = (1 + lam) * math.exp(lam / 4 * (rho ** 2 - rho2 ** 2)) * fw_jump_kernel(0.0, g, g2, COS1)
            assert lhs <= rhs + 1e-8

    @pytest.mark.xfail(strict=True, reason="skeleton-level detailed-balance comparison fails "
                       "near the low end of the grid: the escape-rate lower bound it would "
                       "need does not hold at small lam*rho (documented defect)")
    def test_skeleton_level_inequality_as_stated(self):
        lam = 0.25
        l = COS1.l
        rhos = np.linspace(math.sqrt(2 * l), 1.0 / lam, 6)
        worst = 0.0
        for rho in rhos:
            for rho2 in rhos:
                if rho == rho2:
                    continue
                g, g2 = CurveState(float(rho), 1), CurveState(float(rho2), 1)
                lhs = fw_skeleton_kernel(lam, g, g2, COS1)
                rhs = math.exp(lam / 4 * (rho ** 2 - rho2 ** 2)) * fw_skeleton_kernel(0.0, g, g2, COS1)
                worst = min(worst, rhs - lhs)
        assert worst >= -1e-8
