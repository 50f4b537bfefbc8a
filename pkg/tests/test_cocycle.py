import math

import numpy as np
import pytest
from scipy.optimize import brentq

from morseflow.cocycle import (CocycleSystem, PolyField, StateBox, cocycle_residual, double_well, flow,
                               inverse_flow, make_system, named_field)
from morseflow.errors import ConfigurationError, DomainError, HorizonError
from morseflow.noise import TimeGrid, sample_wiener

T_HALF = 0.5 * math.log(33.0)


class TestExactDoubleWell:
    def test_fixed_points(self, dw, paths):
        for p in paths[:3]:
            for t in (-4.0, -0.3, 0.0, 2.5, 7.0):
                np.testing.assert_array_equal(flow(dw, t, p, np.array([-1.0, 0.0, 1.0])), [-1.0, 0.0, 1.0])

    def test_closed_form_root(self, dw, still):
        # oracle: bisection on t for phi(t) 0.1 = 1/2
        root = brentq(lambda t: flow(dw, t, still, 0.1) - 0.5, 0.0, 5.0, xtol=1e-14)
        assert root == pytest.approx(T_HALF, abs=1e-10)
        assert flow(dw, T_HALF, still, 0.1) == pytest.approx(0.5, abs=1e-10)

    def test_inverse(self, dw, still, paths):
        assert inverse_flow(dw, T_HALF, still, 0.5) == pytest.approx(0.1, abs=1e-9)
        assert inverse_flow(dw, 0.0, paths[0], 0.37) == 0.37
        x = np.linspace(-0.99, 0.99, 23)
        for p in paths:
            for t in (-3.0, 0.4, 2.0):
                np.testing.assert_allclose(inverse_flow(dw, t, p, flow(dw, t, p, x)), x, atol=1e-9)

    def test_cocycle_residual(self, dw, paths, rng):
        for p in paths:
            t, s = rng.uniform(-5, 5, 2)
            x = rng.uniform(-1, 1, 10)
            assert cocycle_residual(dw, t, s, p, x) <= 1e-9
            assert cocycle_residual(dw, t, 0.0, p, x) <= 1e-12

    def test_residual_is_rounding_of_intermediate_state(self, dw, rng):
        # the composed route rounds y = phi(s, w) x to float64; near +-1 that
        # rounding is amplified by d phi(t) / dy and is all the residual there is
        paths = [sample_wiener(TimeGrid(-11.0, 11.0, 0.01), s) for s in range(20)]
        for _ in range(2000):
            t, s = rng.uniform(-5, 5, 2)
            p, x = paths[rng.integers(20)], rng.uniform(-1, 1)
            y = float(flow(dw, s, p, x))
            z = t + float(p.shift(s).evaluate(t))
            slope = math.exp(z) / (1 - y * y + y * y * math.exp(2 * z)) ** 1.5
            bound = 1e-13 + 4 * slope * np.spacing(abs(y))
            assert cocycle_residual(dw, t, s, p, x) <= bound

    def test_oddness_and_order(self, dw, paths):
        x = np.linspace(-1, 1, 101)
        for p in paths:
            y = flow(dw, 1.3, p, x)
            np.testing.assert_allclose(flow(dw, 1.3, p, -x), -y, atol=1e-10)
            assert np.all(np.diff(y) > 0)

    def test_no_overflow_on_long_times(self, dw, paths):
        with np.errstate(all="raise"):
            y = flow(dw, 29.0, paths[0], np.array([1e-300, 0.5, -0.5]))
        assert np.all(np.isfinite(y))
        assert y[1] == pytest.approx(1.0) and y[2] == pytest.approx(-1.0)

    def test_domain_and_horizon_errors(self, dw, paths):
        with pytest.raises(DomainError):
            flow(dw, 1.0, paths[0], 1.5)
        with pytest.raises(HorizonError):
            flow(dw, 31.0, paths[0], 0.2)

    def test_exact_kind_needs_unit_box(self):
        with pytest.raises(ConfigurationError):
            CocycleSystem(StateBox((-2.0,), (2.0,)), "exact-double-well")


class TestHeun:
    def test_matches_exact_formula(self, dw, dw_sde):
        grid = TimeGrid(-1.0, 6.0, 0.01)
        x = np.linspace(-1, 1, 101)
        worst = 0.0
        times = np.linspace(0.0, 5.0, 11)
        for seed in range(20):
            p = sample_wiener(grid, seed)
            a = dw_sde.flow_times(times, p, x.reshape(-1, 1))
            b = dw.flow_times(times, p, x.reshape(-1, 1))
            worst = max(worst, float(np.max(np.abs(a - b))))
        assert worst <= 1e-3

    def test_identity_at_zero(self, dw_sde, paths):
        x = np.linspace(-1, 1, 9)
        assert np.max(np.abs(flow(dw_sde, 0.0, paths[0], x) - x)) <= 1e-12

    def test_inverse_round_trip(self, dw_sde, paths):
        x = np.linspace(-0.95, 0.95, 15)
        for t in (0.7, -1.1):
            back = inverse_flow(dw_sde, t, paths[2], flow(dw_sde, t, paths[2], x))
            np.testing.assert_allclose(back, x, atol=1e-9)

    def test_refinement_shrinks_residual(self, grid):
        rng = np.random.default_rng(5)
        coarse, fine = double_well("stratonovich-sde", h=2e-3), double_well("stratonovich-sde", h=1e-3)
        r_c, r_f = [], []
        for k in range(100):
            p = sample_wiener(grid, 100 + k % 10)
            t, s = rng.uniform(0.05, 1.5, 2)
            x = rng.uniform(-0.95, 0.95)
            r_c.append(cocycle_residual(coarse, t, s, p, x))
            r_f.append(cocycle_residual(fine, t, s, p, x))
        assert np.sum(r_c) >= 2.0 * np.sum(r_f)

    def test_clamp_is_recorded(self, grid):
        f = PolyField.from_coefficients([0.0, 1.0, 0.0, -1.0])
        sys_ = CocycleSystem(StateBox((-1.0,), (1.0,)), "stratonovich-sde", f, f, h=0.05)
        p = sample_wiener(grid, 3)
        y = flow(sys_, 3.0, p, np.linspace(-1, 1, 41))
        assert np.all(np.abs(y) <= 1.0)
        assert sys_.max_clamp >= 0.0


class Test2D:
    @pytest.fixture(scope="class")
    @classmethod
    def sys2(cls):
        return make_system({"kind": "stratonovich-sde", "box": {"lower": [-1.0, -1.0], "upper": [1.0, 1.0]},
                            "drift": "double-well-2d", "diffusion": "double-well-2d-noise", "h": 0.005})

    def test_stays_in_box_and_inverts(self, sys2, paths):
        X = np.array([[0.3, -0.4], [-0.9, 0.9], [0.0, 0.0]])
        Y = flow(sys2, 1.0, paths[0], X)
        assert Y.shape == (3, 2) and np.all(np.abs(Y) <= 1.0)
        np.testing.assert_allclose(inverse_flow(sys2, 1.0, paths[0], Y), X, atol=1e-8)
        np.testing.assert_allclose(Y[2], [0.0, 0.0], atol=1e-15)

    def test_cocycle(self, sys2, paths):
        assert cocycle_residual(sys2, 0.6, 0.4, paths[1], np.array([0.2, 0.5])) <= 1e-3

    def test_deterministic_contraction(self, paths):
        sys_ = make_system({"kind": "deterministic-flow", "box": {"lower": [-1.0], "upper": [1.0]},
                            "drift": "linear-contraction", "h": 1e-3})
        assert flow(sys_, 1.0, paths[0], 0.5) == pytest.approx(0.5 * math.exp(-1.0), abs=1e-6)


def test_registry_and_descriptor_errors():
    assert named_field("double-well")(np.array([[0.5]]))[0, 0] == pytest.approx(0.375)
    with pytest.raises(ConfigurationError):
        named_field("nope")
    with pytest.raises(ConfigurationError) as exc:
        make_system({"kind": "bogus", "box": {"lower": [1.0], "upper": [0.0]}})
    assert len(exc.value.problems) >= 2
