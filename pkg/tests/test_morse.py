from fractions import Fraction

import numpy as np
import pytest

from morseflow.errors import ConfigurationError, FiltrationError
from morseflow.lyapunov import ConstantField, MorseField, morse_lyapunov
from morseflow.morse import (Filtration, build_decomposition, coarsen, exact_plateaus, morse_union_identity_check,
                             repeller_of, verify_by_lyapunov, write_decomposition_report)
from morseflow.pullback import PullbackSchedule
from morseflow.randset import CellSet, RandomSet, dilate, hausdorff

SCHED = PullbackSchedule.uniform(20.0, 2.0)
TOL = 2 * 0.01 + 1e-12


@pytest.fixture(scope="module")
def sets(part):
    iv = lambda *xs: CellSet.from_intervals(part, list(xs))  # noqa: E731
    pt = lambda *xs: CellSet.from_points(part, [[x] for x in xs])  # noqa: E731
    return {
        "N_top": iv((0.5, 1.0)), "N_bottom": iv((-1.0, -0.5)), "N_both": iv((-1.0, -0.5), (0.5, 1.0)),
        "top": pt(1.0), "bottom": pt(-1.0), "both": pt(-1.0, 1.0), "zero": pt(0.0),
        "iv": iv, "pt": pt,
    }


@pytest.fixture(scope="module")
def deco(part, sets, dw, paths):
    f = Filtration(part, [sets["bottom"], sets["both"]], [sets["N_bottom"], sets["N_both"]], ["bottom", "both"])
    return build_decomposition(f, dw, paths[:4], SCHED)


class TestFiltration:
    def test_end_members(self, part, sets):
        f = Filtration(part, [sets["top"]], [sets["N_top"]])
        assert f.n == 2
        assert f.attractor(0).constant.is_empty() and f.attractor(2).constant == CellSet.whole(part)

    def test_not_nested(self, part, sets, paths):
        f = Filtration(part, [sets["top"], sets["bottom"]], [sets["N_top"], sets["N_bottom"]])
        with pytest.raises(FiltrationError) as err:
            f.check_nesting(paths[:1])
        assert any(w[2] == "not nested" for w in err.value.witnesses)

    def test_not_strict(self, part, sets, paths):
        f = Filtration(part, [sets["top"], sets["top"]], [sets["N_top"], sets["N_top"]])
        with pytest.raises(FiltrationError):
            f.check_nesting(paths[:1])

    def test_lengths(self, part, sets):
        with pytest.raises(ConfigurationError):
            Filtration(part, [sets["top"]], [])


class TestRepellers:
    def test_upper_well(self, sets, dw, paths):
        res = repeller_of(sets["top"], sets["N_top"], dw, paths[:3], SCHED)
        assert res.check.pass_fraction == 1.0
        for p in paths[:3]:
            assert hausdorff(res.rule(p), sets["iv"]((-1.0, 0.0))) <= TOL

    def test_both_wells(self, sets, dw, paths):
        res = repeller_of(sets["both"], sets["N_both"], dw, paths[:3], SCHED)
        for p in paths[:3]:
            assert hausdorff(res.rule(p), sets["pt"](0.0)) <= TOL
        assert res.check.max_discrepancy <= TOL

    def test_whole_neighborhood(self, part, dw, paths):
        whole = CellSet.whole(part)
        res = repeller_of(whole, whole, dw, paths[:2], SCHED)
        assert res.rule(paths[0]).is_empty()


class TestDecomposition:
    def test_morse_sets(self, deco, sets, paths):
        assert deco.n == 3
        expected = [sets["pt"](-1.0), sets["pt"](1.0), sets["pt"](0.0)]
        for p in paths[:4]:
            for M, E in zip(deco.morse_sets, expected):
                assert hausdorff(M(p), E) <= TOL
        assert all(not v for v in deco.findings.values())

    def test_plateaus(self, deco):
        assert deco.plateaus == [Fraction(2, 3), Fraction(8, 9), Fraction(26, 27)]

    @pytest.mark.parametrize("n", [1, 2, 3, 6])
    def test_last_plateau(self, n):
        assert exact_plateaus(n)[-1] == 1 - Fraction(1, 3 ** n)

    def test_alternative_order(self, part, sets, dw, paths):
        f = Filtration(part, [sets["top"], sets["both"]], [sets["N_top"], sets["N_both"]])
        d = build_decomposition(f, dw, paths[:2], SCHED)
        for p in paths[:2]:
            for M, x in zip(d.morse_sets, (1.0, -1.0, 0.0)):
                assert hausdorff(M(p), sets["pt"](x)) <= TOL

    def test_trivial_filtration(self, part, dw, paths):
        d = build_decomposition(Filtration(part, [], []), dw, paths[:2], SCHED)
        assert d.n == 1 and d.plateaus == [Fraction(2, 3)]
        assert d.morse_sets[0](paths[0]) == CellSet.whole(part)

    def test_morse_lyapunov_plateaus(self, deco, dw, paths):
        mctx = deco.morse_context()
        for p in paths[:2]:
            L = morse_lyapunov(mctx, dw, p, np.array([-1.0, 1.0, 0.0]))
            np.testing.assert_allclose(L, [float(a) for a in deco.plateaus], atol=1e-12)

    def test_report(self, deco, paths, tmp_path):
        ident = morse_union_identity_check(deco, paths[:2])
        write_decomposition_report(deco, paths[:2], tmp_path / "m.csv", tmp_path / "s.txt", identity=ident)
        rows = (tmp_path / "m.csv").read_text().splitlines()
        assert rows[0] == "seed,i,cells,intervals,alpha,alpha_exact" and len(rows) == 7
        summary = (tmp_path / "s.txt").read_text()
        assert "plateaus: 2/3, 8/9, 26/27" in summary and "identity_pass_fraction: 1" in summary


class TestIdentity:
    def test_holds(self, deco, paths):
        chk = morse_union_identity_check(deco, paths[:4])
        assert chk.pass_fraction == 1.0 and chk.max_discrepancy <= TOL

    def test_corrupted_repeller_is_detected(self, deco, paths):
        R2 = deco.repellers[2]
        bad = deco.with_repeller(2, RandomSet(lambda p: dilate(R2(p), 5), "fat R_2", partition=R2.partition))
        chk = morse_union_identity_check(bad, paths[:4])
        assert chk.pass_fraction == 0.0


class TestCoarsen:
    def test_keep_outer(self, deco, sets, dw, paths):
        c = coarsen(deco, [2], dw, paths[:2], SCHED)
        assert c.n == 2 and c.plateaus == [Fraction(2, 3), Fraction(8, 9)]
        for p in paths[:2]:
            assert hausdorff(c.morse_sets[0](p), sets["both"]) <= TOL
            assert hausdorff(c.morse_sets[1](p), sets["zero"]) <= TOL
        assert c.findings["coarsening_escapes"] == []

    def test_keep_all(self, deco, dw, paths):
        c = coarsen(deco, [1, 2], dw, paths[:2], SCHED)
        for p in paths[:2]:
            for a, b in zip(c.morse_sets, deco.morse_sets):
                assert a(p) == b(p)

    def test_keep_none(self, deco, part, dw, paths):
        c = coarsen(deco, [], dw, paths[:2], SCHED)
        assert c.n == 1 and c.morse_sets[0](paths[0]) == CellSet.whole(part)

    @pytest.mark.parametrize("keep", [[2, 1], [0], [3]])
    def test_bad_indices(self, deco, dw, paths, keep):
        with pytest.raises(ConfigurationError):
            coarsen(deco, keep, dw, paths[:1], SCHED)


class TestLyapunovCertificate:
    def test_correct_family(self, deco, dw, paths):
        cert = verify_by_lyapunov(deco.morse_sets, MorseField(deco.morse_context(), dw), dw, paths[:2])
        assert cert.consistent, cert.conditions
        assert cert.verdict == "consistent with Morse decomposition"
        np.testing.assert_allclose(cert.plateau_means, [2 / 3, 8 / 9, 26 / 27], atol=1e-12)
        assert cert.n_checked > 0

    def test_missing_origin(self, deco, dw, paths):
        cert = verify_by_lyapunov(deco.morse_sets[:2], MorseField(deco.morse_context(), dw), dw, paths[:2])
        assert not cert.conditions["iv"].passed
        assert cert.conditions["pre"].passed and cert.conditions["ii"].passed
        assert any(abs(w[1]) < 1e-12 and w[2] == 100 for w in cert.conditions["iv"].witnesses)
        assert cert.verdict.endswith("(failed: iv)")

    def test_constant_function(self, deco, dw, paths):
        cert = verify_by_lyapunov(deco.morse_sets, ConstantField(0.5), dw, paths[:1])
        assert cert.conditions["ii"].passed
        assert not cert.conditions["iii"].passed and not cert.conditions["iv"].passed
