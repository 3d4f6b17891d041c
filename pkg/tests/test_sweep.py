import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbslab.lattice import LatticeRegion, box, l1, parity_classes, shell
from gibbslab.specification import (Boundary, MuEstimate, Phase, Potential, SpinGrid, SpinModel,
                                    estimate_mu, gaussian_law, one_site_measure)
from gibbslab.sweep import (GriddedFunction, SupportBudgetError, SupportConditionError, apply_B,
                            check_entropy_decay, check_gradient_sweep,
                            conditional_expectation_shell, convergence_diagnostic,
                            local_function, origin_function)

GRID = SpinGrid(10.0, 41)
X = GRID.points
BUDGET = 3_000_000


def gauss(J):
    return SpinModel(1, Phase("gaussian"), Potential("bilinear"), J, grid=GRID)


class TestConditionalExpectation:
    def test_constant_fixed(self):
        f = GriddedFunction.constant(3.5, X)
        out = conditional_expectation_shell(f, shell(0, box(1, 3)), gauss(0.1), Boundary(), box(1, 3))
        assert out.is_constant and float(out.values) == 3.5

    def test_uncoupled_gives_one_site_mean(self):
        model = SpinModel(1, Phase("power", 4.0), Potential("bilinear"), 0.0,
                          grid=SpinGrid(4.0, 81))
        f = origin_function(1, np.cos, model.grid)
        out = conditional_expectation_shell(f, shell(0, box(1, 2)), model, Boundary(), box(1, 2))
        m = one_site_measure(model, (0,), Boundary())
        assert out.is_constant and float(out.values) == pytest.approx(m.expect(np.cos), rel=1e-12)

    def test_gaussian_conditional_mean(self):
        f = origin_function(1, lambda x: x)
        out = conditional_expectation_shell(f, shell(0, box(1, 3)), gauss(0.1), Boundary(), box(1, 3))
        assert out.support == LatticeRegion([(-1,), (1,)])
        a, b = np.meshgrid(X[15:26], X[15:26], indexing="ij")
        np.testing.assert_allclose(out.values[15:26, 15:26], -0.1 * (a + b), atol=1e-9)

    def test_budget_error(self):
        f = local_function([(0, 0)], lambda a: a[..., 0])
        model = SpinModel(2, Phase("gaussian"), Potential("bilinear"), 0.01, grid=GRID)
        with pytest.raises(SupportBudgetError) as info:
            conditional_expectation_shell(f, shell(0, box(2, 2)), model, Boundary(), box(2, 2),
                                          budget=1000)
        assert info.value.size == 41 ** 4

    def test_adjacent_sites_rejected(self):
        f = local_function([(0,), (1,)], lambda a: a.sum(-1))
        with pytest.raises(ValueError, match="adjacent"):
            conditional_expectation_shell(f, LatticeRegion([(0,), (1,)]), gauss(0.1), Boundary(),
                                          box(1, 3))


class TestApplyB:
    def test_single_step(self):
        f = origin_function(1, lambda x: x * x)
        tr = apply_B(f, 0, 0, gauss(0.0), Boundary(), box(1, 3))
        assert len(tr.steps) == 1 and tr.limit == pytest.approx(1.0, abs=1e-6)

    def test_uncoupled_increments_vanish(self):
        f = origin_function(1, np.tanh)
        tr = apply_B(f, 8, 0, gauss(0.0), Boundary(0.7), box(1, 3))
        assert np.all(tr.increments[1:] == 0.0)
        rep = convergence_diagnostic(tr, MuEstimate(tr.limit, 0.0, 1))
        assert rep.status == "below floor" and rep.rate is None and rep.limit_ok

    def test_gaussian_limit(self):
        model, region, bnd = gauss(0.05), box(1, 3), Boundary(1.0)
        f = origin_function(1, lambda x: x, boundary=bnd)
        tr = apply_B(f, 13, 0, model, bnd, region, budget=BUDGET)
        exact = gaussian_law(model, region, bnd).mean[region.index((0,))]
        assert tr.limit == pytest.approx(exact, abs=1e-10)
        mc = estimate_mu(model.with_(grid=SpinGrid(8.0, 513)), region, bnd,
                         lambda c: c[:, 3], 40_000, seed=4)
        assert abs(tr.limit - mc.mean) < 3 * mc.stderr
        assert convergence_diagnostic(tr, mc).limit_ok

    def test_support_condition(self):
        f = local_function([(2,)], lambda a: a[..., 0])
        with pytest.raises(SupportConditionError):
            apply_B(f, 5, 1, gauss(0.1), Boundary(), box(1, 3))
        with pytest.raises(ValueError):
            apply_B(f, 0, 1, gauss(0.1), Boundary(), box(1, 3))

    @given(st.floats(-3, 3), st.floats(0.0, 0.1))
    @settings(max_examples=10, deadline=None)
    def test_constant_and_averaging(self, fill, J):
        region, bnd = box(1, 2), Boundary(fill)
        c = apply_B(GriddedFunction.constant(2.0, X), 6, 0, gauss(J), bnd, region)
        assert np.all(c.values == 2.0)
        f = origin_function(1, np.tanh, boundary=bnd)
        lo, hi = f.values.min(), f.values.max()
        g = f
        for k in range(6):
            g = conditional_expectation_shell(g, shell(k, region), gauss(J), bnd, region)
            assert lo - 1e-12 <= g.values.min() and g.values.max() <= hi + 1e-12

    @pytest.mark.parametrize("d,radius", [(1, 4), (2, 1)])
    def test_support_moves_to_opposite_parity(self, d, radius):
        region = box(d, radius)
        model = SpinModel(d, Phase("gaussian"), Potential("bilinear"), 0.05,
                          grid=SpinGrid(10.0, 9))
        even, odd = parity_classes(region)
        g = local_function([(0,) * d], lambda a: a[..., 0], model.grid)
        reach = 0
        for k in range(6):
            g = conditional_expectation_shell(g, shell(k, region), model, Boundary(), region)
            reach += 1
            target = odd if k % 2 == 0 else even
            assert all(s in target and l1(s) <= reach for s in g.support)


class TestConvergence:
    def _trace(self, J, fill=1.0):
        bnd = Boundary(fill)
        f = origin_function(1, lambda x: x, boundary=bnd)
        return apply_B(f, 13, 0, gauss(J), bnd, box(1, 3), budget=BUDGET)

    def test_rates(self):
        r05 = convergence_diagnostic(self._trace(0.05), MuEstimate(0.0, 1.0, 1)).rate
        r10 = convergence_diagnostic(self._trace(0.1), MuEstimate(0.0, 1.0, 1)).rate
        assert r05 < 0.5
        assert 2 <= r10 / r05 <= 8

    def test_too_few_steps(self):
        bnd = Boundary(1.0)
        tr = apply_B(origin_function(1, lambda x: x, boundary=bnd), 3, 0, gauss(0.05), bnd,
                     box(1, 3), budget=BUDGET)
        with pytest.raises(ValueError):
            convergence_diagnostic(tr, MuEstimate(0.0, 1.0, 1))

    def test_boundaries_agree(self):
        plus, minus = self._trace(0.05, 2.0), self._trace(0.05, -2.0)
        law = {w: gaussian_law(gauss(0.05), box(1, 3), Boundary(w)).mean[3] for w in (2.0, -2.0)}
        assert plus.limit - minus.limit == pytest.approx(law[2.0] - law[-2.0], abs=1e-12)
        # the finite box feels its boundary only at order J^(radius+1)
        assert abs(plus.limit - minus.limit) < 1e-4


def _tanh0(a):
    return np.tanh(a[..., 0])


class TestGradientSweep:
    def test_uncoupled(self):
        model = SpinModel(1, Phase("gaussian"), Potential("bilinear"), 0.0, grid=SpinGrid(8.0, 257))
        assert check_gradient_sweep(model, [(0,)], _tanh0, 0, 5, seed=1).eta_min == 0.0

    def test_small_and_quadratic_in_coupling(self):
        etas = []
        for J in (0.025, 0.05, 0.1):
            model = SpinModel(1, Phase("gaussian"), Potential("bilinear"), J,
                              grid=SpinGrid(8.0, 257))
            rep = check_gradient_sweep(model, [(0,)], _tanh0, 0, 10, seed=2)
            assert 0 <= rep.eta_min < 1 and rep.detail
            etas.append(rep.eta_min)
        for lo, hi in zip(etas, etas[1:]):
            assert 2 <= hi / lo <= 8


class TestEntropyDecay:
    def test_uncoupled_and_lambda_zero(self):
        model = SpinModel(1, Phase("gaussian"), Potential("bilinear"), 0.0, grid=GRID)
        F = origin_function(1, np.tanh)
        rep = check_entropy_decay(model, F, 0, 3, [0.0, 1.0], 2000, seed=1, box=box(1, 3),
                                  boundary=Boundary(), chains=20, burn_in=10)
        assert np.all(rep.series(0.0) == 0.0)
        assert np.all(rep.series(1.0) == 0.0)

    def test_gaussian_decay(self):
        model = gauss(0.05)
        F = origin_function(1, np.tanh)
        rep = check_entropy_decay(model, F, 0, 3, [1.0], 4000, seed=2, box=box(1, 3),
                                  boundary=Boundary(), chains=40, burn_in=20,
                                  budget=BUDGET)
        ser = rep.series(1.0)
        assert np.all(np.diff(ser) < 0) and rep.ratios[1.0] < 1
        h = X[1] - X[0]
        assert rep.a == pytest.approx((2 * np.tanh(h) / (2 * h)) ** 2, rel=1e-12)
        assert np.all(ser <= rep.level_bound[1.0])


class TestGriddedFunction:
    def test_roundtrip(self, tmp_path):
        f = local_function([(-1,), (1,)], lambda a: a[..., 0] * np.exp(a[..., 1] / 10),
                           SpinGrid(2.0, 9), Boundary(0.3))
        f.save(tmp_path / "f.bin")
        g = GriddedFunction.load(tmp_path / "f.bin")
        assert g.support == f.support and np.array_equal(g.values, f.values)
        assert g.boundary.fill == 0.3

    def test_outside_grid(self):
        f = origin_function(1, np.tanh, SpinGrid(2.0, 9))
        with pytest.raises(ValueError):
            f(np.array([[3.0]]))
        assert f.at(0.0) == 0.0

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            GriddedFunction(LatticeRegion([(0,)]), X, np.zeros(5))

    def test_evaluate_on_uses_boundary(self):
        f = local_function([(0,), (5,)], lambda a: a[..., 0] + a[..., 1], GRID, Boundary(1.5))
        out = f.evaluate_on(box(1, 1), np.array([[0.0, 2.0, 0.0]]))
        assert out[0] == pytest.approx(3.5)
