import numpy as np
import pytest

from morseflow.errors import ConfigurationError, HorizonError
from morseflow.noise import NoisePath, TimeGrid, evaluate, sample_wiener, shift, zero_path


class TestTimeGrid:
    def test_node_counts(self):
        g = TimeGrid(-2.0, 3.0, 0.5)
        assert (g.n_neg, g.n_pos, g.n_nodes) == (4, 6, 11)
        assert g.times()[4] == 0.0

    @pytest.mark.parametrize("args", [(-1.0, 1.0, 0.0), (0.5, 1.0, 0.1), (-1.0, -0.5, 0.1), (-1.0, 1.0, 0.3)])
    def test_invalid(self, args):
        with pytest.raises(ConfigurationError):
            TimeGrid(*args)

    def test_lists_every_problem(self):
        with pytest.raises(ConfigurationError) as exc:
            TimeGrid(0.5, -0.5, 0.1)
        assert len(exc.value.problems) == 2


def test_value_at_zero_is_pinned(grid, paths):
    for p in paths:
        assert p(0.0) == 0.0
        assert p.shift(1.37)(0.0) == 0.0


def test_same_seed_same_path(grid):
    a, b = sample_wiener(grid, 7), sample_wiener(grid, 7)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_wiener(grid, 8).values)


def test_values_are_read_only(paths):
    with pytest.raises(ValueError):
        paths[0].values[0] = 1.0


def test_linear_interpolation_between_nodes():
    g = TimeGrid(-1.0, 1.0, 0.5)
    p = NoisePath(g, np.array([0.3, -0.2, 0.0, 1.0, 0.5]))
    assert p(0.25) == pytest.approx(0.5)
    assert p(-0.75) == pytest.approx(0.05)
    np.testing.assert_allclose(p(np.array([0.5, 1.0])), [1.0, 0.5])


def test_shift_definition_and_flow_property(paths):
    p = paths[1]
    s, t = 0.731, -1.29
    u = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(p.shift(s)(u), p(u + s) - p(s), atol=1e-14)
    np.testing.assert_allclose(shift(shift(p, s), t)(u), shift(p, s + t)(u), atol=1e-12)
    assert shift(p, 0.0) is p


def test_horizon_errors(grid):
    p = sample_wiener(grid, 0)
    with pytest.raises(HorizonError):
        p(30.5)
    with pytest.raises(HorizonError):
        evaluate(p.shift(10.0), 25.0)
    assert p.shift(10.0).horizon == (-40.0, 20.0)


def test_zero_path_is_zero(grid):
    z = zero_path(grid)
    assert np.all(z(np.linspace(-30, 30, 101)) == 0.0)


def test_node_times_are_absolute_nodes(grid):
    p = sample_wiener(grid, 0).shift(0.005)
    nt = p.node_times(-0.02, 0.02)
    np.testing.assert_allclose(nt + 0.005, [-0.01, 0.0, 0.01, 0.02], atol=1e-12)


def test_csv_dump(tmp_path):
    g = TimeGrid(-0.1, 0.1, 0.05)
    p = sample_wiener(g, 3)
    f = tmp_path / "p.csv"
    p.to_csv(f)
    lines = f.read_text().splitlines()
    assert lines[0] == "t,value" and len(lines) == 1 + g.n_nodes
    assert "\r" not in f.read_text()


class TestStatistics:
    """Monte Carlo oracles for the Wiener measure."""

    @pytest.fixture(scope="class")
    @classmethod
    def samples(cls):
        g = TimeGrid(-1.0, 1.0, 0.05)
        return np.array([sample_wiener(g, s).values for s in range(10_000)]), g

    def test_mean_and_variance_of_w1(self, samples):
        vals, g = samples
        w1 = vals[:, -1]
        assert -0.03 <= w1.mean() <= 0.03
        assert 0.94 <= w1.var() <= 1.06

    def test_increment_variance_scales_with_dt(self, samples):
        vals, g = samples
        inc = np.diff(vals, axis=1)
        assert inc.var() == pytest.approx(g.dt, rel=0.03)

    def test_disjoint_increments_uncorrelated(self, samples):
        vals, g = samples
        k0 = g.n_neg
        a = vals[:, k0 + 10] - vals[:, k0]      # W(0.5) - W(0)
        b = vals[:, -1] - vals[:, k0 + 10]      # W(1) - W(0.5)
        c = vals[:, k0] - vals[:, 0]            # W(0) - W(-1)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.05
        assert abs(np.corrcoef(a, c)[0, 1]) < 0.05

    def test_law_of_large_numbers(self):
        g = TimeGrid(0.0, 1000.0, 1.0)
        ratios = np.array([sample_wiener(g, s)(1000.0) / 1000.0 for s in range(1000)])
        assert np.mean(np.abs(ratios) < 0.2) >= 0.99
