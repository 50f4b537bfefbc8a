import math

import numpy as np
import pytest

from morseflow.errors import ConfigurationError, HorizonError, MisuseError
from morseflow.pullback import (PullbackSchedule, alpha_limit, basin_estimate, invariant_hull, invariant_hull_rule,
                                is_forward_invariant,
                                omega_limit, repeller_by_duality, uniform_entrance_time, verify_attractor,
                                verify_strong_neighborhood)
from morseflow.randset import (CellSet, complement, dilate, hausdorff, hausdorff_semi, image_cells,
                               image_under_flow)

CELL = 0.01
SCHED = PullbackSchedule.uniform(20.0, 2.0)


@pytest.fixture
def pt(part):
    return lambda *xs: CellSet.from_points(part, [[x] for x in xs])


class TestSchedule:
    def test_uniform(self):
        assert SCHED.T_ladder[:3] == (0.0, 2.0, 4.0) and SCHED.T_max == 20.0

    @pytest.mark.parametrize("ladder", [(), (1.0, 1.0), (2.0, 1.0), (-1.0, 2.0)])
    def test_invalid_ladder(self, ladder):
        with pytest.raises(ConfigurationError):
            PullbackSchedule(ladder)


class TestOmegaLimit:
    def test_upper_well(self, dw, paths, cells, pt):
        for p in paths[:4]:
            res = omega_limit(cells((0.5, 1.0)), dw, p, SCHED)
            assert res.converged
            assert hausdorff(res.limit, pt(1.0)) <= 2 * CELL + 1e-12

    def test_lower_well_by_symmetry(self, dw, paths, cells, pt):
        res = omega_limit(cells((-1.0, -0.5)), dw, paths[0], SCHED)
        assert hausdorff(res.limit, pt(-1.0)) <= 2 * CELL + 1e-12

    def test_fixed_point(self, dw, paths, pt):
        res = omega_limit(pt(0.0), dw, paths[1], SCHED)
        assert hausdorff(res.limit, pt(0.0)) <= CELL + 1e-12

    def test_history_is_nested(self, dw, paths, cells, tmp_path):
        res = omega_limit(cells((0.5, 1.0)), dw, paths[2], SCHED)
        sets = [s for _, s, _ in res.history]
        assert all(b.issubset(a) for a, b in zip(sets, sets[1:]))
        steps = [st for _, _, st in res.history]
        assert steps[-1] == 0.0
        f = tmp_path / "h.csv"
        res.history_to_csv(f)
        assert f.read_text().splitlines()[0] == "T,hausdorff_step"

    def test_limit_is_invariant(self, dw, paths, cells):
        p = paths[3]
        lim = omega_limit(cells((0.5, 1.0)), dw, p, SCHED).limit
        for t in (0.5, 1.0):
            later = omega_limit(cells((0.5, 1.0)), dw, p.shift(t), SCHED).limit
            assert image_under_flow(lim, dw, t, p).issubset(dilate(later, 2))

    def test_pullback_attraction(self, dw, paths, cells, pt):
        # images of a closed set inside the basin approach {1} monotonically
        D = cells((0.2, 0.6))
        pts, owner = D.sample_points()
        p = paths[0]
        Ts = np.arange(4.0, 20.5, 2.0)
        dists = [hausdorff_semi(image_cells(D, dw.pullback(np.array([T]), p, pts), owner), pt(1.0)) for T in Ts]
        assert all(b <= a + 1e-12 for a, b in zip(dists, dists[1:]))
        assert dists[-1] <= SCHED.stop_tol + 2 * CELL + 1e-12

    def test_horizon(self, dw, grid, cells):
        from morseflow.noise import sample_wiener
        with pytest.raises(HorizonError):
            omega_limit(cells((0.5, 1.0)), dw, sample_wiener(grid, 0), PullbackSchedule.uniform(40.0, 10.0))

    def test_empty_set(self, dw, paths, part):
        res = omega_limit(CellSet.empty(part), dw, paths[0], SCHED)
        assert res.limit.is_empty() and res.converged and res.under_resolved


class TestAlphaLimit:
    def test_repelling_point(self, dw, paths, cells, pt):
        for p in paths[:3]:
            res = alpha_limit(cells((-0.25, 0.25)), dw, p, SCHED)
            assert hausdorff(res.limit, pt(0.0)) <= 2 * CELL + 1e-12

    def test_fixed_point_and_whole_box(self, dw, paths, part, pt):
        assert hausdorff(alpha_limit(pt(1.0), dw, paths[0], SCHED).limit, pt(1.0)) <= CELL + 1e-12
        whole = CellSet.whole(part)
        assert alpha_limit(whole, dw, paths[0], SCHED).limit == whole


class TestInvariance:
    def test_hull(self, dw, still, paths, cells, part):
        N = cells((0.5, 1.0))
        assert hausdorff(invariant_hull(N, dw, still, 10.0), N) <= CELL + 1e-12
        whole = CellSet.whole(part)
        assert invariant_hull(whole, dw, paths[0], 5.0) == whole
        for p in paths:
            hull = invariant_hull(N, dw, p, 10.0)
            (lo, hi), = hull.intervals()
            assert hi == 1.0 and lo <= 0.5 and N.issubset(hull)
        rule = invariant_hull_rule(N, dw, 10.0)
        for p in paths[:3]:
            assert is_forward_invariant(rule, dw, p, [0.5, 1.0]).max_violation <= 2 * CELL

    def test_forward_invariance(self, dw, still, part, cells):
        assert is_forward_invariant(CellSet.whole(part), dw, still, [1.0])
        assert is_forward_invariant(cells((0.5, 1.0)), dw, still, [0.5, 1.0, 3.0])
        chk = is_forward_invariant(cells((0.5, 0.6)), dw, still, [1.0])
        assert not chk and chk.max_violation > 0.1
        with pytest.raises(MisuseError):
            is_forward_invariant(cells((0.5, 0.6)), dw, still, [0.0])


class TestAttractors:
    def test_upper_well_is_attractor(self, dw, paths, cells, pt):
        rep = verify_attractor(pt(1.0), cells((0.5, 1.0)), dw, paths[:4], SCHED)
        assert rep.passed and rep.pass_fraction == 1.0

    def test_whole_box_is_trivial_attractor(self, dw, paths, part):
        whole = CellSet.whole(part)
        assert verify_attractor(whole, whole, dw, paths[:2], SCHED).passed

    def test_origin_is_not_attractor(self, dw, paths, cells, pt):
        rep = verify_attractor(pt(0.0), cells((-0.25, 0.25)), dw, paths[:3], SCHED)
        assert not rep.passed
        assert all(r.note for r in rep.rows)

    def test_precondition(self, dw, paths, cells, pt):
        with pytest.raises(MisuseError):
            verify_attractor(pt(0.5), cells((0.5, 1.0)), dw, paths[:1], SCHED)

    def test_report_csv(self, dw, paths, cells, pt, tmp_path):
        rep = verify_attractor(pt(1.0), cells((0.5, 1.0)), dw, paths[:2], SCHED)
        f = tmp_path / "r.csv"
        rep.to_csv(f)
        lines = f.read_text().splitlines()
        assert lines[0] == "seed,converged,hausdorff_to_target,pass" and len(lines) == 3

    def test_strong_neighborhood(self, dw, still, paths, cells, part, pt):
        assert verify_strong_neighborhood(cells((0.5, 1.0)), pt(1.0), dw, [still], [0.5]).passed
        whole = CellSet.whole(part)
        assert verify_strong_neighborhood(whole, whole, dw, paths[:2], [0.5]).passed
        rep = verify_strong_neighborhood(cells((0.5, 0.6)), pt(1.0), dw, [still], [1.0])
        assert not rep.precondition_ok and not rep.passed


class TestBasin:
    def test_upper_basin(self, dw, paths, cells, pt):
        for p in paths[:3]:
            B = basin_estimate(pt(1.0), cells((0.5, 1.0)), dw, p, 20.0)
            assert cells((2 * CELL, 1.0)).issubset(B)
            assert B.mask[cells((-1.0, -CELL)).members].sum() == 0
            assert not B.mask[100] and not B.mask[99]

    def test_whole_box(self, dw, paths, part):
        whole = CellSet.whole(part)
        assert basin_estimate(whole, whole, dw, paths[0], 5.0) == whole

    def test_duality(self, dw, paths, cells, pt):
        for p in paths[:3]:
            R = complement(basin_estimate(pt(1.0), cells((0.5, 1.0)), dw, p, 20.0))
            dual = repeller_by_duality(cells((0.5, 1.0)), dw, p, SCHED).limit
            assert hausdorff(R, dual) <= 2 * CELL + 1e-12
            assert hausdorff(R, cells((-1.0, 0.0))) <= 2 * CELL + 1e-12


class TestUniformEntrance:
    def test_closed_form(self, dw, still, cells):
        T = uniform_entrance_time(cells((0.1, 0.2)), cells((0.5, 1.0)), dw, still, 10.0)
        assert T == pytest.approx(0.5 * math.log(33.0), abs=0.05)

    def test_inside_interior(self, dw, still, cells):
        assert uniform_entrance_time(cells((0.7, 0.8)), cells((0.5, 1.0)), dw, still, 10.0) == 0.0

    def test_never(self, dw, paths, cells):
        assert uniform_entrance_time(cells((-0.05, 0.05)), cells((0.5, 1.0)), dw, paths[0], 10.0) == math.inf
