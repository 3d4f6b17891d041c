import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbslab.functionals import (LOWER_BOUND_LABEL, TestFunctionFamily, check_h4,
                                  check_mls_implies_sg, compute_U, entropy, estimate_constant,
                                  estimate_constant_on, find_epsilon, ls_ratio, mls_ratio,
                                  perturbed_ls_check, sg_ratio, spectral_gap_eigen,
                                  tensorisation_check)
from gibbslab.lattice import box
from gibbslab.orlicz import HFunction
from gibbslab.specification import (Boundary, OneSiteMeasure, Phase, Potential, SpinGrid,
                                    SpinModel, free_measure, measure_from_log_weights,
                                    one_site_measure)

GAUSS = SpinModel(1, Phase("gaussian"), Potential("bilinear"), 0.0)
FINE = SpinGrid(10.0, 4001)


@pytest.fixture(scope="module")
def gauss():
    return free_measure(GAUSS, FINE)


class TestEntropy:
    def test_constant(self, gauss):
        assert entropy(gauss, lambda x: np.full_like(x, 3.0)) == 0.0

    @pytest.mark.parametrize("theta", [0.3, 1.0, 2.0])
    def test_exponential_oracle(self, gauss, theta):
        exact = theta ** 2 / 2 * np.exp(theta ** 2 / 2)
        assert entropy(gauss, lambda x: np.exp(theta * x)) == pytest.approx(exact, rel=1e-6)

    def test_second_order_small(self, gauss):
        e = entropy(gauss, lambda x: 1 + 1e-9 * x)
        assert 0 <= e < 1e-15

    def test_rejects_nonpositive(self, gauss):
        with pytest.raises(ValueError):
            entropy(gauss, lambda x: x)

    def test_sample_set(self):
        rng = np.random.default_rng(0)
        xs = rng.standard_normal(200_000)
        assert entropy(xs, np.exp) == pytest.approx(0.5 * np.exp(0.5), rel=0.05)

    @given(st.floats(-2, 2), st.floats(0.1, 5), st.floats(0.01, 100))
    @settings(max_examples=40, deadline=None)
    def test_nonnegative_and_scaling(self, theta, beta, lam):
        m = free_measure(GAUSS)
        f = lambda x: np.exp(theta * np.tanh(beta * x))
        e = entropy(m, f)
        assert e >= 0
        # Ent is positively 1-homogeneous
        assert entropy(m, lambda x: lam * f(x)) == pytest.approx(lam * e, rel=1e-9, abs=1e-15)


class TestRatios:
    @pytest.mark.parametrize("theta", [1e-3, 0.1, 1.0])
    def test_gaussian_ls_ratio_is_two(self, gauss, theta):
        r = mls_ratio(gauss, HFunction.quadratic(), lambda x: np.exp(theta * x / 2))
        assert r == pytest.approx(2.0, rel=1e-4)
        assert ls_ratio(gauss, lambda x: np.exp(theta * x / 2)) == pytest.approx(r, rel=1e-12)

    def test_constant_probe_skipped(self, gauss):
        assert mls_ratio(gauss, HFunction.quadratic(), lambda x: np.ones_like(x)) is None
        assert sg_ratio(gauss, lambda x: np.ones_like(x)) is None

    @given(st.floats(0.01, 100))
    @settings(max_examples=30, deadline=None)
    def test_scale_invariance(self, c):
        m = free_measure(GAUSS)
        h = HFunction.from_power(4.0)
        f = lambda x: np.exp(0.4 * np.tanh(x))
        assert mls_ratio(m, h, lambda x: c * f(x)) == pytest.approx(mls_ratio(m, h, f), rel=1e-9)

    def test_linear_probe_attains_gaussian_gap(self, gauss):
        assert sg_ratio(gauss, lambda x: x) == pytest.approx(1.0, rel=1e-4)


class TestEstimateConstant:
    def test_gaussian_sg_and_ls(self):
        grid = [-1.0, 0.0, 1.0]
        sg = estimate_constant(GAUSS, (0,), grid, "SG2")
        ls = estimate_constant(GAUSS, (0,), grid, "LS2")
        assert sg.lower_bound == pytest.approx(1.0, abs=0.01)
        assert 1.9 <= ls.lower_bound <= 2.01
        assert ls.label == LOWER_BOUND_LABEL

    def test_flat_boundary_curve_without_coupling(self):
        est = estimate_constant(GAUSS, (0,), [-2.0, 0.0, 2.0], "LS2")
        vals = list(est.sweep.values())
        assert max(vals) - min(vals) < 1e-12
        assert est.uniform_sup == est.lower_bound == max(vals)
        assert [r[0] for r in est.rows()] == [-2.0, 0.0, 2.0]

    def test_mls_needs_h(self, gauss):
        with pytest.raises(ValueError):
            estimate_constant_on(gauss, "MLS")
        with pytest.raises(ValueError):
            estimate_constant(GAUSS, (0,), [0.0], "SG3")

    def test_quadratic_mls_equals_ls(self, gauss):
        a = estimate_constant_on(gauss, "MLS", HFunction.quadratic())
        b = estimate_constant_on(gauss, "LS2")
        assert a.lower_bound == pytest.approx(b.lower_bound, rel=1e-12)


class TestSpectralGap:
    def test_gaussian(self, gauss):
        assert spectral_gap_eigen(gauss) == pytest.approx(1.0, abs=0.002)

    def test_scaling(self):
        m = free_measure(SpinModel(1, Phase("gaussian", sigma=2.0)), SpinGrid(20.0, 4001))
        assert spectral_gap_eigen(m) == pytest.approx(0.25, rel=0.01)

    def test_double_well_stable(self):
        model = SpinModel(1, Phase("double_well"))
        a = spectral_gap_eigen(free_measure(model, SpinGrid(4.0, 1025)))
        b = spectral_gap_eigen(free_measure(model, SpinGrid(4.0, 2049)))
        assert a > 0 and b > 0 and abs(a - b) < 0.01 * b

    def test_normalisation_invariant(self, gauss):
        shifted = OneSiteMeasure(gauss.site, gauss.grid, 5 * gauss.density, gauss.log_z,
                                 gauss.log_density + np.log(5))
        assert spectral_gap_eigen(shifted) == pytest.approx(spectral_gap_eigen(gauss), rel=1e-10)

    def test_coarse_grid_warns(self):
        m = free_measure(GAUSS, SpinGrid(8.0, 17))
        with pytest.warns(RuntimeWarning, match="not converged"):
            spectral_gap_eigen(m)


class TestImplication:
    def test_gaussian_equality(self, gauss):
        rep = check_mls_implies_sg(estimate_constant_on(gauss, "LS2"),
                                   1 / spectral_gap_eigen(gauss))
        assert rep.ok and abs(rep.margin) < 0.01

    @pytest.mark.parametrize("phase", [Phase("power", 4.0), Phase("double_well"),
                                       Phase("perturbed", 4.0, 0.5)])
    def test_battery(self, phase):
        m = free_measure(SpinModel(1, phase), SpinGrid(4.0, 1025))
        rep = check_mls_implies_sg(estimate_constant_on(m, "LS2"), estimate_constant_on(m, "SG2"))
        assert rep.ok


class TestTensorisation:
    @pytest.mark.parametrize("kind", ["LS2", "SG2"])
    def test_product_of_gaussians(self, kind):
        m = free_measure(GAUSS, SpinGrid(8.0, 129))
        fam = TestFunctionFamily().subset(np.linspace(-2, 2, 9))
        rep = tensorisation_check(m, m, kind, family=fam, cross_thetas=(-1.0, 1.0))
        assert rep.embedded_sup >= rep.max_factor - 1e-6
        assert rep.product_sup <= rep.max_factor * 1.02

    def test_unequal_factors(self):
        g = SpinGrid(4.0, 129)
        m1 = free_measure(SpinModel(1, Phase("power", 4.0)), g)
        m2 = free_measure(GAUSS, SpinGrid(8.0, 129))
        fam = TestFunctionFamily().subset(np.linspace(-2, 2, 9))
        rep = tensorisation_check(m1, m2, "LS2", family=fam, cross_thetas=(-1.0, 1.0))
        assert rep.embedded_sup >= rep.max_factor - 1e-6


PERT = SpinModel(1, Phase("gaussian"), Potential("squared_difference"), 0.05, 0.05)


class TestPerturbation:
    def test_vanishing_epsilon(self):
        assert abs(compute_U(PERT, (0,), 1.0, 1e-12, 2.0, 1.0)) < 1e-9

    def test_grid_refinement(self):
        # at epsilon=0.05 the integrand grows like exp(3.6 (x-1)^2): no finite moment
        from gibbslab.specification import TailContainmentError
        with pytest.raises(TailContainmentError):
            compute_U(PERT, (0,), 1.0, 0.05, 2.0, 1.0)
        eps = find_epsilon(PERT, (0,), [1.0], 2.0, 1.0)
        coarse = compute_U(PERT, (0,), 1.0, eps, 2.0, 1.0, SpinGrid(8.0, 513))
        fine = compute_U(PERT, (0,), 1.0, eps, 2.0, 1.0, SpinGrid(8.0, 2049))
        assert np.isfinite(coarse) and coarse > 0
        assert coarse == pytest.approx(fine, rel=1e-6)

    def test_integrand_vanishes_at_coincidence(self):
        from gibbslab.functionals import u_tilde
        assert float(u_tilde(PERT, np.array([0.0]), np.zeros(2), 2.0)[0]) == 0.0

    def test_tail_failure_and_halving(self):
        from gibbslab.specification import TailContainmentError
        with pytest.raises(TailContainmentError, match="smaller epsilon"):
            compute_U(PERT, (0,), 0.0, 5.0, 2.0, 1.0)
        eps = find_epsilon(PERT, (0,), [-1.0, 0.0, 1.0], 2.0, 1.0, epsilon=5.0)
        assert eps < 5.0 and np.isfinite(compute_U(PERT, (0,), 1.0, eps, 2.0, 1.0))

    def test_needs_positive_j0_and_epsilon(self):
        with pytest.raises(ValueError):
            compute_U(GAUSS, (0,), 0.0, 0.05, 2.0, 1.0)
        with pytest.raises(ValueError):
            compute_U(PERT, (0,), 0.0, 0.0, 2.0, 1.0)

    def test_h4_report(self):
        rep = check_h4(PERT, box(1, 2), Boundary(), 0.0015, 2.0, 1.0, 4000, seed=1, chains=40)
        assert np.isfinite(rep.mu_U2) and rep.K_check >= rep.mu_U2
        assert ((0,), 1.0) in rep.U_values and ((0,), -1.0) in rep.U_values
        tiny = check_h4(PERT, box(1, 2), Boundary(), 1e-10, 2.0, 1.0, 4000, seed=1, chains=40)
        assert tiny.mu_U2 < 1e-15

    def test_h4_needs_flags(self):
        with pytest.raises(ValueError):
            check_h4(SpinModel(1, J=0.1), box(1, 1), Boundary(), 0.05, 2.0, 1.0, 100, seed=1)

    def test_uncoupled_reduces_to_ls(self):
        rep = perturbed_ls_check(GAUSS, (0,), [0.0], 0.05, 2.0, 1.0)
        est = estimate_constant(GAUSS, (0,), [0.0], "LS2")
        assert rep.R_hat == pytest.approx(est.lower_bound, rel=1e-12)
        assert min(rep.slack.values()) >= -1e-12

    def test_perturbed_phase_grid_stable(self):
        model = SpinModel(1, Phase("perturbed", 4.0, 0.5), Potential("squared_difference"),
                          0.02, 0.02)
        fam = TestFunctionFamily().subset(np.linspace(-3, 3, 13))
        a = perturbed_ls_check(model, (0,), [-1.0, 0.0, 1.0], 0.05, 2.0, 1.0, fam,
                               SpinGrid(4.0, 513))
        b = perturbed_ls_check(model, (0,), [-1.0, 0.0, 1.0], 0.05, 2.0, 1.0, fam,
                               SpinGrid(4.0, 1025))
        assert np.isfinite(a.R_hat) and a.R_hat == pytest.approx(b.R_hat, rel=0.1)
