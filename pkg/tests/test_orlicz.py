import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gibbslab.orlicz import (ConvexityError, DivergentIntegralError, HFunction, NotNiceError,
                             YoungFunction, check_h2, check_young_lemmas, conjugate,
                             envelope, growth_sup, herbst_integral, log_grid, modification,
                             niceness_failure, omega, omega_star, tabulate)

GRID = np.concatenate([[0.0], log_grid()])
powers = st.sampled_from([1.5, 2.0, 2.5, 3.0, 4.0])


def tab_power(p):
    return YoungFunction.tabulated(GRID, GRID ** p / p)


class TestConjugate:
    def test_power_closed_form_p3(self):
        star = conjugate(YoungFunction.power(3.0))
        y = np.linspace(0, 5, 11)
        np.testing.assert_allclose(star(y), np.abs(y) ** 1.5 / 1.5, rtol=1e-12)

    def test_quadratic_is_self_dual(self):
        star = conjugate(YoungFunction.power(2.0))
        assert star.p == 2.0 and star.coef == pytest.approx(0.5)

    def test_tabulated_square_on_uniform_grid(self):
        g = np.linspace(0, 10, 10_000)
        star = conjugate(YoungFunction.tabulated(g, g ** 2))
        y = np.linspace(0, 19, 500)
        err = np.max(np.abs(star(y) - y ** 2 / 4))
        h = g[1] - g[0]
        # the discrete transform misses the true sup by at most slope * h / 2
        assert err <= h * 19 / 2

    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
    def test_tabulated_against_closed_form(self, p):
        q = p / (p - 1)
        y = np.geomspace(0.1, 10, 300)
        star = conjugate(tab_power(p))
        assert np.max(np.abs(star(y) - y ** q / q) / (y ** q / q)) < 1e-4

    def test_rejects_nonconvex(self):
        g = np.linspace(0, 3, 7)
        v = g ** 2
        v[4] += 1.0
        with pytest.raises(ConvexityError) as info:
            conjugate(YoungFunction.tabulated(g, v))
        assert info.value.index == 4

    @given(powers)
    @settings(max_examples=10, deadline=None)
    def test_double_conjugate(self, p):
        phi = tab_power(p)
        back = conjugate(conjugate(phi))
        x = np.geomspace(0.01, 10, 200)
        spacing = x * (GRID[-1] / GRID[-2] - 1)
        assert np.all(np.abs(back(x) - phi(x)) <= 10 * spacing * np.maximum(x ** (p - 1), 1))

    def test_even_extension(self):
        phi = YoungFunction.power(3.0)
        assert phi(-2.0) == phi(2.0)
        t = tab_power(3.0)
        assert float(t(-1.5)) == float(t(1.5))


class TestYoungFunction:
    def test_record_roundtrip(self):
        for phi in (YoungFunction.power(2.5), tabulate(lambda x: x ** 2, np.linspace(0, 2, 5))):
            again = YoungFunction.from_record(phi.to_record())
            assert again.key == phi.key

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            YoungFunction.power(1.0)
        with pytest.raises(ValueError):
            YoungFunction.tabulated([0, 2, 1], [0, 1, 2])
        with pytest.raises(ValueError):
            YoungFunction.from_record({"kind": "spline"})

    def test_niceness(self):
        g = np.linspace(0, 4, 41)
        assert niceness_failure(tab_power(2.0)) is None
        assert niceness_failure(YoungFunction.tabulated(g, np.abs(g))) == "phi'(0)=0"
        assert niceness_failure(YoungFunction.tabulated(g + 1, (g + 1) ** 2)) == "phi(0)=0"


class TestModification:
    def test_square(self):
        h = modification(YoungFunction.power(2.0))
        x = np.linspace(-3, 3, 13)
        np.testing.assert_allclose(h(x), x ** 2)

    def test_quartic_values(self):
        h = modification(YoungFunction.power(4.0))
        assert float(h(2.0)) == pytest.approx(16.0)
        assert float(h(0.5)) == pytest.approx(0.25)
        assert float(h(1.0)) == 1.0

    def test_not_nice_names_clause(self):
        g = np.linspace(0, 4, 41)
        with pytest.raises(NotNiceError) as info:
            modification(YoungFunction.tabulated(g, np.abs(g)))
        assert info.value.clause == "phi'(0)=0"

    @given(powers, st.floats(0.0, 50.0))
    @settings(max_examples=50, deadline=None)
    def test_even_monotone(self, p, x):
        h = HFunction.from_power(p)
        assert float(h(x)) == float(h(-x))
        assert float(h(x + 0.1)) >= float(h(x))


class TestOmega:
    def test_quadratic(self):
        x = np.array([0.0, 0.3, 1.0, 2.0, 7.0])
        np.testing.assert_allclose(omega(HFunction.quadratic(), x), x ** 2, rtol=1e-12)

    def test_unit_and_quartic(self):
        for p in (2.0, 2.5, 4.0):
            assert omega(HFunction.from_power(p), 1.0) == pytest.approx(1.0)
        assert omega(HFunction.from_power(4.0), 2.0) == pytest.approx(16.0)

    @pytest.mark.parametrize("p", [2.5, 3.0, 4.0])
    def test_scaling_law(self, p):
        h = HFunction.from_power(p)
        x = np.array([0.2, 0.5, 0.9, 1.5, 3.0])
        # brute force over a dense t-grid as the oracle
        t = np.geomspace(1e-4, 1e4, 20001)
        brute = np.array([np.max(h(t * v) / h(t)) for v in x])
        np.testing.assert_allclose(omega(h, x), brute, rtol=1e-9)
        np.testing.assert_allclose(omega(h, x), np.maximum(x ** 2, x ** p), rtol=1e-9)

    def test_properties(self):
        h = HFunction.from_power(3.0)
        env = envelope(h)
        x = np.geomspace(1e-3, 1e2, 200)
        w = env.omega(x)
        assert np.all(w >= h(x) / float(h(1.0)) * (1 - 1e-12))
        assert float(env.omega(0.0)) == 0.0
        mid = env.omega((x[1:] + x[:-1]) / 2)
        assert np.all(mid <= (w[1:] + w[:-1]) / 2 * (1 + 1e-9))
        assert np.all(np.diff(w) >= 0)

    @given(st.floats(0.01, 20), st.floats(0.01, 20))
    @settings(max_examples=100, deadline=None)
    def test_submultiplicative(self, a, b):
        h = HFunction.from_power(2.5)
        assert omega(h, a * b) <= omega(h, a) * omega(h, b) * (1 + 1e-9)

    @pytest.mark.parametrize("p", [2.5, 4.0])
    def test_monotonicity_transfer(self, p):
        # H/x^2 nondecreasing implies omega/x^2 nondecreasing
        h = HFunction.from_power(p)
        x = np.geomspace(1e-2, 1e2, 300)
        r = omega(h, x) / x ** 2
        assert np.all(np.diff(r) >= -1e-9 * r[1:])

    def test_divergent_sup_flagged(self):
        f = lambda t: np.exp(np.minimum(np.abs(t), 700.0)) - 1
        assert math.isinf(growth_sup(f, np.array([2.0]), np.geomspace(1e-3, 50, 500))[0])


class TestOmegaStar:
    def test_quadratic_closed_form(self):
        y = np.linspace(0, 6, 25)
        np.testing.assert_allclose(omega_star(HFunction.quadratic(), y), y ** 2 / 4,
                                   rtol=5e-5, atol=1e-12)
        assert omega_star(HFunction.quadratic(), 0.0) == 0.0

    def test_quartic_against_brute_force(self):
        h = HFunction.from_power(4.0)
        x = np.geomspace(1e-4, 1e3, 200_001)
        w = omega(h, x)
        for y in (0.1, 1.0, 3.0, 10.0):
            brute = float(np.max(x * y - w))
            assert omega_star(h, y) == pytest.approx(brute, rel=1e-4)

    def test_monotone_convex(self):
        y = np.linspace(0, 10, 101)
        v = omega_star(HFunction.from_power(2.5), y)
        assert np.all(np.diff(v) >= 0)
        assert np.all(np.diff(v, 2) >= -1e-9)


class TestH2:
    def test_witnesses(self):
        assert check_h2(HFunction.from_power(4.0)) == check_h2(HFunction.from_power(4.0))
        r4 = check_h2(HFunction.from_power(4.0))
        assert r4.ok and r4.t_witness == 4.0
        r25 = check_h2(HFunction.from_power(2.5))
        assert r25.ok and r25.t_witness == 2.5

    def test_quadratic_verdict(self):
        # x^2 / x^t decreases for every t > 2, so the grid check passes at once
        r = check_h2(HFunction.quadratic())
        assert r.ok and r.t_witness == 2.01

    def test_failure_reports_location(self):
        g = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 400)])
        h = modification(YoungFunction.tabulated(g, g ** 2 * (1 + np.log1p(g))))
        rep = check_h2(h, grid=np.geomspace(1e-3, 1e3, 400), t_candidates=np.array([2.01]))
        assert not rep.ok and rep.first_violation is not None


class TestHerbst:
    def test_quadratic_equality(self):
        assert herbst_integral(HFunction.quadratic(), 2.0) == pytest.approx(1.0, rel=1e-9)

    def test_quartic_bound(self):
        h = HFunction.from_power(4.0)
        assert herbst_integral(h, 1.0) <= omega(h, 0.5) * (1 + 1e-6)

    def test_small_lambda(self):
        assert herbst_integral(HFunction.from_power(3.0), 1e-6) < 1e-10
        assert herbst_integral(HFunction.quadratic(), 0.0) == 0.0

    @given(powers.filter(lambda p: p >= 2), st.floats(0.01, 8.0))
    @settings(max_examples=30, deadline=None)
    def test_bound_on_lambda_grid(self, p, lam):
        h = HFunction.from_power(p)
        assert herbst_integral(h, lam) <= omega(h, lam / 2) * (1 + 1e-6)

    def test_divergence_detected(self):
        h = HFunction.from_power(1.5)
        with pytest.raises(DivergentIntegralError):
            herbst_integral(h, 1.0)


class TestYoungLemmas:
    def test_quadratic_equality(self):
        rep = check_young_lemmas(YoungFunction.power(2.0), 2.0, 2000, seed=1)
        assert rep.ok and rep.scaling_max_violation == 0.0

    def test_cubic_duality(self):
        rep = check_young_lemmas(YoungFunction.power(3.0), 3.0, 2000, seed=2)
        assert rep.duality_premise and rep.duality_max_violation == 0.0

    def test_touching_point(self):
        rep = check_young_lemmas(tab_power(3.0), 3.0, 100, seed=3)
        assert abs(rep.touching_slack) < 1e-9 or rep.touching_slack < 1e-5

    def test_young_slack_tabulated(self):
        rep = check_young_lemmas(tab_power(1.5), 1.5, 10_000, seed=4)
        assert rep.young_max_violation <= 0

    def test_a_must_exceed_one(self):
        with pytest.raises(ValueError):
            check_young_lemmas(YoungFunction.power(2.0), 1.0)
