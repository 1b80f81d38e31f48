import json
import random
from fractions import Fraction as F

import pytest

from corrkernel import conditions as cond
from corrkernel import linsys
from corrkernel.kernel import KernelSpec, LebesgueProfile, PreconditionError, full_mask
from corrkernel.linsys import EQ, LE, LT, Row, StrictLinearSystem
from conftest import admissible_linfty, random_system
from oracles import max_slack_by_vertices


def system(rows, nvars):
    return StrictLinearSystem([f"x{j}" for j in range(nvars)],
                              [Row(c, rel, b, f"r{k}") for k, (c, rel, b) in enumerate(rows)])


# -- solver -------------------------------------------------------------------------

def test_farkas_pair():
    s = system([([1], LT, 0), ([-1], LT, 0)], 1)
    out = linsys.solve(s)
    assert not out.feasible
    assert out.certificate == (1, 1)
    assert linsys.certificate_violations(s, out.certificate) == []


def test_symmetric_interval():
    out = linsys.solve(system([([1], LT, 1), ([-1], LT, 1)], 1))
    assert out.feasible and out.x == (0,) and out.t_star == 1


def test_empty_system():
    out = linsys.solve(StrictLinearSystem([], []))
    assert out.feasible and out.x == ()


def test_contradictory_constant_row():
    s = StrictLinearSystem([], [Row([], LT, 0, "0<0")])
    out = linsys.solve(s)
    assert not out.feasible and linsys.certificate_violations(s, out.certificate) == []


def test_nonstrict_infeasible_flag():
    s = system([([1], LE, -1), ([-1], LE, -1), ([1], LT, 5)], 1)
    out = linsys.solve(s)
    assert not out.feasible and out.nonstrict_infeasible
    assert linsys.certificate_violations(s, out.certificate) == []


def test_equality_rows():
    s = system([([1, 1], EQ, 1), ([1, -1], LT, 0), ([-1, 0], LT, 0)], 2)
    out = linsys.solve(s)
    assert out.feasible and linsys.outcome_violations(s, out) == []
    s = system([([1, 1], EQ, 1), ([-1, 0], LT, -1), ([0, -1], LE, 0)], 2)
    out = linsys.solve(s)
    assert not out.feasible and linsys.certificate_violations(s, out.certificate) == []


def test_tight_boundary_not_strict():
    # x <= 0 and x >= 0 pin x = 0, which misses the strict x < 0
    s = system([([1], LE, 0), ([-1], LE, 0), ([1], LT, 0)], 1)
    out = linsys.solve(s)
    assert not out.feasible and linsys.certificate_violations(s, out.certificate) == []


def test_random_outcomes_sound():
    rng = random.Random(11)
    for _ in range(300):
        s = random_system(rng)
        out = linsys.solve(s)
        assert linsys.outcome_violations(s, out) == []


def test_vertex_enumeration_cross_check():
    rng = random.Random(12)
    checked = {True: 0, False: 0}
    for _ in range(150):
        s = random_system(rng, max_vars=4, max_rows=8)
        out = linsys.solve(s)
        rows = [(r.coeffs, r.rel, r.rhs) for r in s.rows]
        best = max_slack_by_vertices(rows, len(s.variables))
        oracle_feasible = best is not None and best > 1e-9
        assert out.feasible == oracle_feasible
        if out.feasible:
            assert abs(float(out.t_star) - best) < 1e-6
        checked[out.feasible] += 1
    assert min(checked.values()) > 20


def test_bit_budget(monkeypatch):
    monkeypatch.setenv(linsys.BIT_BUDGET_ENV, "4")
    s = system([([7, 3], LT, F(1, 97)), ([-5, 11], LT, F(3, 89)), ([1, 1], LE, F(13, 7))], 2)
    with pytest.raises(linsys.ResourceError):
        linsys.solve(s)


def test_json_round_trip():
    s = system([([1, F(1, 3)], LT, F(2, 7)), ([0, -1], EQ, 1)], 2)
    s2 = linsys.system_from_json(json.loads(json.dumps(s.to_json())))
    assert s2.rows == s.rows and s2.variables == s.variables


def test_outcome_json():
    s = system([([1], LT, 0), ([-1], LT, 0)], 1)
    doc = linsys.outcome_to_json(s, linsys.solve(s))
    assert doc == {"feasible": False, "nonstrict_infeasible": False,
                   "certificate": [{"row": "r0", "lambda": "1"}, {"row": "r1", "lambda": "1"}]}


# -- named systems --------------------------------------------------------------------

def _rows(sys_):
    return {r.label: r for r in sys_.rows}


def test_v1_transcription():
    spec = KernelSpec.from_pairs(1, 4, {(1, 4): F(3, 4), (2, 4): F(3, 4)})
    s = linsys.build_system("V1", spec, theta=0b11)
    rows = _rows(s)
    assert s.variables == ("d1_2",)
    assert rows["mass"].rel == EQ and rows["mass"].rhs == F(1, 2)
    assert rows["F[1, 2]"].rhs == 1 and rows["F[1, 2, 3]"].rhs == 2
    assert all(r.rel == LT for k, r in rows.items() if k.startswith("F"))


def test_v1_needs_excess_mass():
    spec = KernelSpec.from_pairs(1, 4, {(1, 4): F(1, 4), (2, 4): F(1, 4)})
    with pytest.raises(PreconditionError):
        linsys.build_system("V1", spec, theta=0b11)


def test_vi2_transcription():
    s = linsys.build_system("VI2", KernelSpec.uniform(1, 3, F(1, 2)))
    rows = _rows(s)
    assert rows["mass"].rhs == F(3, 2)
    assert rows["d1>0"].rel == LT
    assert rows["J[1, 2]"].rhs == F(3, 2) and rows["J[3]"].rhs == 1
    assert len(s.rows) == 1 + 3 + 6


def test_vi6_bumps():
    spec = KernelSpec.from_pairs(1, 4, {(1, 4): F(1, 2), (2, 4): F(1, 2), (1, 2): F(1, 4)})
    prof = LebesgueProfile([F(1, 2), F(1, 2), F(1, 4), 1])
    rows = _rows(linsys.build_system("VI6", spec, prof, fold_index=0))
    assert rows["d1<bound"].rel == LT and rows["d1<bound"].rhs == F(1, 2) + F(1, 2) + 1
    assert rows["d2<bound"].rel == LT and rows["d2<bound"].rhs == 1
    assert rows["d3<=bound"].rel == LE and rows["d3<=bound"].rhs == F(1, 4)


def test_unknown_kind():
    with pytest.raises(PreconditionError):
        linsys.build_system("V9", KernelSpec.uniform(1, 3, F(1, 2)))


def test_v3_last_row_is_implied():
    rng = random.Random(5)
    seen = 0
    for _ in range(60):
        spec, prof = admissible_linfty(rng)
        try:
            s = linsys.build_system("V3", spec, prof)
        except PreconditionError:
            continue
        rows = _rows(s)
        iv = [r for k, r in rows.items() if k.startswith("iv")]
        if not iv:
            continue
        seen += 1
        assert iv[0].rhs == rows["mass"].rhs
        reduced = StrictLinearSystem(s.variables, [r for r in s.rows if not r.label.startswith("iv")])
        out = linsys.solve(reduced)
        if out.feasible:
            assert iv[0].holds(out.x) and iv[0].lhs(out.x) == iv[0].rhs
    assert seen >= 10


# -- folding -------------------------------------------------------------------------

def test_fold_linfty_single_output():
    spec = KernelSpec.from_pairs(1, 3, {(1, 3): F(3, 4), (2, 3): F(3, 4)})
    prof = LebesgueProfile([F(3, 4), F(3, 4), 0])
    out = linsys.distribute_and_fold(spec, prof, linsys.LINFTY)
    assert len(out) == 1
    assert out[0].spec.alpha[0][1] == F(1, 2)
    assert out[0].profile.r == (F(3, 4), F(3, 4))


def test_fold_integrability_precondition():
    with pytest.raises(PreconditionError):
        linsys.distribute_and_fold(KernelSpec.uniform(1, 3, F(7, 10)))


def test_fold_integrability_base_case():
    spec = KernelSpec.from_pairs(1, 3, {(1, 2): F(1, 10), (1, 3): F(3, 5), (2, 3): F(3, 5)})
    out = linsys.distribute_and_fold(spec)
    assert [r.spec.alpha[0][1] for r in out] == [F(3, 10)]


def test_fold_records_systems():
    rng = random.Random(8)
    spec, prof = admissible_linfty(rng)
    while spec.m < 5:
        spec, prof = admissible_linfty(rng)
    solved = []
    out = linsys.distribute_and_fold(spec, prof, linsys.LINFTY, solved=solved)
    assert out
    for s, o in solved:
        assert linsys.outcome_violations(s, o) == []


def test_fold_linfty_outputs_admissible():
    rng = random.Random(9)
    for _ in range(40):
        spec, prof = admissible_linfty(rng)
        for res in linsys.distribute_and_fold(spec, prof, linsys.LINFTY):
            m = res.spec.m
            assert cond.check_homogeneity(res.spec, res.profile).holds
            assert cond.check_integrability(res.spec) == []
            for I in range(1, full_mask(m)):
                assert cond.iii_value(res.spec, res.profile, I) < bin(I).count("1")


def test_fold_integrability_outputs_integrable():
    rng = random.Random(10)
    done = 0
    while done < 40:
        spec, _ = admissible_linfty(rng)
        if cond.check_integrability(spec):
            continue
        for res in linsys.distribute_and_fold(spec):
            assert cond.check_integrability(res.spec) == []
        done += 1


def test_fold_weak_power_outputs():
    spec = KernelSpec.uniform(1, 4, F(1, 3))
    prof = LebesgueProfile([F(1, 2)] * 4)
    for res in linsys.distribute_and_fold(spec, prof, linsys.WEAK_POWER):
        m = res.spec.m
        assert m == 3
        assert res.profile.is_interior()
        assert cond.check_homogeneity(res.spec, res.profile).holds
        assert cond.check_integrability(res.spec) == []
        for I in range(1, full_mask(m)):
            assert cond.iii_value(res.spec, res.profile, I) < bin(I).count("1")


def test_fold_bad_mode():
    with pytest.raises(PreconditionError):
        linsys.distribute_and_fold(KernelSpec.uniform(1, 3, F(1, 3)), None, "sideways")
